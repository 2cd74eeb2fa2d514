/* Copyright 2026 The mpmdpp Authors.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include "mpmd/ir.h"

#include <fmt/format.h>

#include <algorithm>
#include <array>
#include <limits>
#include <utility>

#include "mpmd/errors.h"

namespace mpmd {
namespace {

constexpr std::array<std::pair<OpKind, std::string_view>, 11> kOpKindNames = {{
    {OpKind::kMatmul, "matmul"},
    {OpKind::kAdd, "add"},
    {OpKind::kRelu, "relu"},
    {OpKind::kSubSampleLoss, "sub-sample-loss"},
    {OpKind::kBroadcast, "broadcast"},
    {OpKind::kTranspose, "transpose"},
    {OpKind::kScale, "scale"},
    {OpKind::kYield, "yield-marker"},
    {OpKind::kParameterRead, "parameter-read"},
    {OpKind::kInputRead, "input-read"},
    {OpKind::kConcat, "concat"},
}};

constexpr int kNoMarker = std::numeric_limits<int>::max();

double Elements(const TensorSpec& spec) { return static_cast<double>(spec.elements()); }

}  // namespace

std::string_view OpKindName(OpKind kind) {
  for (const auto& [k, name] : kOpKindNames) {
    if (k == kind) return name;
  }
  return "unknown";
}

std::optional<OpKind> ParseOpKind(std::string_view name) {
  for (const auto& [k, n] : kOpKindNames) {
    if (n == name) return k;
  }
  return std::nullopt;
}

double ForwardFlops(OpKind kind, const std::vector<TensorSpec>& operands,
                    const TensorSpec& result) {
  switch (kind) {
    case OpKind::kMatmul:
      return 2.0 * static_cast<double>(operands[0].dims[0]) *
             static_cast<double>(operands[0].dims[1]) * static_cast<double>(operands[1].dims[1]);
    case OpKind::kSubSampleLoss:
      return Elements(operands[0]);
    case OpKind::kAdd:
    case OpKind::kRelu:
    case OpKind::kBroadcast:
    case OpKind::kTranspose:
    case OpKind::kScale:
    case OpKind::kConcat:
      return Elements(result);
    case OpKind::kYield:
    case OpKind::kParameterRead:
    case OpKind::kInputRead:
      return 0.0;
  }
  return 0.0;
}

double BackwardFlops(const OpNode& op, const std::vector<TensorSpec>& operands) {
  switch (op.kind) {
    case OpKind::kMatmul:
      // Two products: dA = dC B^T and dB = A^T dC.
      return 2.0 * op.flops;
    case OpKind::kSubSampleLoss:
      return Elements(operands[0]);
    case OpKind::kYield:
    case OpKind::kParameterRead:
    case OpKind::kInputRead:
      return 0.0;
    default:
      return Elements(op.result_spec);
  }
}

size_t StagedGraph::producer_index(ValueId v) const {
  auto it = index_.find(v);
  if (it == index_.end()) throw Error(fmt::format("value {} is not defined", v.value()));
  return it->second;
}

std::vector<size_t> StagedGraph::marker_indices() const {
  std::vector<size_t> out;
  for (size_t i = 0; i < ops_.size(); ++i) {
    if (ops_[i].kind == OpKind::kYield) out.push_back(i);
  }
  return out;
}

void StagedGraph::Validate() const {
  std::unordered_map<ValueId, size_t> seen;
  for (size_t i = 0; i < ops_.size(); ++i) {
    const OpNode& op = ops_[i];
    for (ValueId v : op.operands) {
      if (!seen.contains(v)) {
        throw ValidationError(fmt::format("op {} ({}) reads value {} before its definition",
                                          op.id.value(), OpKindName(op.kind), v.value()));
      }
    }
    if (!seen.emplace(op.result, i).second) {
      throw ValidationError(fmt::format("value {} is defined twice", op.result.value()));
    }
    if (!op.result_spec.valid() && !op.result_spec.dims.empty()) {
      throw ValidationError(fmt::format("op {} has invalid result spec", op.id.value()));
    }
    if (op.kind == OpKind::kYield &&
        (op.operands.size() != 1 || spec(op.operands[0]) != op.result_spec)) {
      throw ValidationError(
          fmt::format("yield-marker {} must have one operand of identical spec", op.id.value()));
    }
    const bool is_param = params_.contains(op.result);
    const bool is_input = inputs_.contains(op.result);
    if (is_param != (op.kind == OpKind::kParameterRead) ||
        is_input != (op.kind == OpKind::kInputRead)) {
      throw ValidationError(
          fmt::format("value {} leaf classification disagrees with its op", op.result.value()));
    }
  }
  for (ValueId p : params_) {
    if (inputs_.contains(p)) {
      throw ValidationError(fmt::format("value {} is both a parameter and an input", p.value()));
    }
  }
  if (outputs_.empty()) throw ValidationError("graph has no outputs");
  for (ValueId v : outputs_) {
    if (!seen.contains(v)) throw ValidationError(fmt::format("output {} undefined", v.value()));
  }
  if (!spec(loss()).dims.empty()) throw ValidationError("first output must be a scalar loss");

  // Latest marker each op depends on, and whether it depends on any input.
  const std::vector<size_t> markers = marker_indices();
  std::vector<int> latest(ops_.size(), -1);
  std::vector<bool> from_input(ops_.size(), false);
  int marker_count = 0;
  for (size_t i = 0; i < ops_.size(); ++i) {
    const OpNode& op = ops_[i];
    for (ValueId v : op.operands) {
      const size_t p = seen.at(v);
      latest[i] = std::max(latest[i], latest[p]);
      from_input[i] = from_input[i] || from_input[p];
    }
    if (op.kind == OpKind::kInputRead) from_input[i] = true;
    if (op.kind == OpKind::kYield) {
      if (latest[i] != marker_count - 1) {
        throw ValidationError(fmt::format(
            "yield-marker {} does not depend on the preceding yield-marker; markers must form "
            "a dependency chain",
            op.id.value()));
      }
      latest[i] = marker_count++;
    }
  }
  std::vector<bool> to_output(ops_.size(), false);
  for (ValueId v : outputs_) to_output[seen.at(v)] = true;
  for (size_t i = ops_.size(); i-- > 0;) {
    if (!to_output[i]) continue;
    for (ValueId v : ops_[i].operands) to_output[seen.at(v)] = true;
  }
  for (size_t m : markers) {
    if (!to_output[m] || !from_input[m]) {
      throw ValidationError(fmt::format(
          "yield-marker {} does not lie on a path from an input to an output", ops_[m].id.value()));
    }
  }
  if (latest[seen.at(loss())] != marker_count - 1) {
    throw ValidationError("loss does not depend on the last yield-marker");
  }
}

// --- GraphBuilder ----------------------------------------------------------

const TensorSpec& GraphBuilder::SpecOf(ValueId v) const {
  auto it = graph_.index_.find(v);
  if (it == graph_.index_.end()) {
    throw ValidationError(fmt::format("operand {} is not defined", v.value()));
  }
  return graph_.ops_[it->second].result_spec;
}

ValueId GraphBuilder::Emit(OpKind kind, std::vector<ValueId> operands, TensorSpec spec, double attr,
                           std::string name) {
  if (!spec.dims.empty() && !spec.valid()) {
    throw ValidationError(
        fmt::format("{}: invalid result spec {}", OpKindName(kind), spec.ToString()));
  }
  std::vector<TensorSpec> operand_specs;
  for (ValueId v : operands) operand_specs.push_back(SpecOf(v));
  OpNode op;
  op.id = OpId(next_);
  op.result = ValueId(next_);
  ++next_;
  op.kind = kind;
  op.operands = std::move(operands);
  op.result_spec = std::move(spec);
  op.flops = ForwardFlops(kind, operand_specs, op.result_spec);
  op.attr = attr;
  op.name = std::move(name);
  graph_.index_.emplace(op.result, graph_.ops_.size());
  graph_.ops_.push_back(std::move(op));
  return graph_.ops_.back().result;
}

ValueId GraphBuilder::Parameter(TensorSpec spec, std::string name) {
  ValueId v = Emit(OpKind::kParameterRead, {}, std::move(spec), 0.0, std::move(name));
  graph_.params_.insert(v);
  return v;
}

ValueId GraphBuilder::Input(TensorSpec spec, std::string name) {
  ValueId v = Emit(OpKind::kInputRead, {}, std::move(spec), 0.0, std::move(name));
  graph_.inputs_.insert(v);
  return v;
}

ValueId GraphBuilder::Matmul(ValueId a, ValueId b) {
  const TensorSpec& sa = SpecOf(a);
  const TensorSpec& sb = SpecOf(b);
  if (sa.rank() != 2 || sb.rank() != 2 || sa.dims[1] != sb.dims[0]) {
    throw ValidationError(
        fmt::format("matmul shape mismatch {} x {}", sa.ToString(), sb.ToString()));
  }
  return Emit(OpKind::kMatmul, {a, b}, {{sa.dims[0], sb.dims[1]}, sa.elem_bytes});
}

ValueId GraphBuilder::Add(ValueId a, ValueId b) {
  TensorSpec sa = SpecOf(a);
  if (sa != SpecOf(b)) throw ValidationError("add operands must have identical specs");
  return Emit(OpKind::kAdd, {a, b}, std::move(sa));
}

ValueId GraphBuilder::Relu(ValueId a) {
  TensorSpec sa = SpecOf(a);
  return Emit(OpKind::kRelu, {a}, std::move(sa));
}

ValueId GraphBuilder::SubSampleLoss(ValueId pred, ValueId target) {
  const TensorSpec& sp = SpecOf(pred);
  if (sp.dims != SpecOf(target).dims) {
    throw ValidationError("sub-sample-loss operands must have identical shapes");
  }
  return Emit(OpKind::kSubSampleLoss, {pred, target}, {{}, sp.elem_bytes});
}

ValueId GraphBuilder::Broadcast(ValueId a, std::vector<int64_t> dims) {
  const TensorSpec& sa = SpecOf(a);
  const bool scalar = sa.dims.empty();
  const bool row = sa.rank() == 2 && dims.size() == 2 && sa.dims[0] == 1 && sa.dims[1] == dims[1];
  if (!scalar && !row) {
    throw ValidationError(
        fmt::format("cannot broadcast {} to rank-{} target", sa.ToString(), dims.size()));
  }
  return Emit(OpKind::kBroadcast, {a}, {std::move(dims), sa.elem_bytes});
}

ValueId GraphBuilder::Transpose(ValueId a) {
  const TensorSpec& sa = SpecOf(a);
  if (sa.rank() != 2) throw ValidationError("transpose requires a 2-D operand");
  return Emit(OpKind::kTranspose, {a}, {{sa.dims[1], sa.dims[0]}, sa.elem_bytes});
}

ValueId GraphBuilder::Scale(ValueId a, double factor) {
  TensorSpec sa = SpecOf(a);
  return Emit(OpKind::kScale, {a}, std::move(sa), factor);
}

ValueId GraphBuilder::Yield(ValueId a) {
  TensorSpec sa = SpecOf(a);
  return Emit(OpKind::kYield, {a}, std::move(sa));
}

ValueId GraphBuilder::Concat(ValueId a, ValueId b) {
  const TensorSpec& sa = SpecOf(a);
  const TensorSpec& sb = SpecOf(b);
  if (sa.rank() != 2 || sb.rank() != 2 || sa.dims[0] != sb.dims[0]) {
    throw ValidationError("concat requires 2-D operands with equal row counts");
  }
  return Emit(OpKind::kConcat, {a, b}, {{sa.dims[0], sa.dims[1] + sb.dims[1]}, sa.elem_bytes},
              static_cast<double>(sa.dims[1]));
}

void GraphBuilder::MarkOutput(ValueId v) {
  SpecOf(v);
  graph_.outputs_.push_back(v);
}

StagedGraph GraphBuilder::Build() {
  StagedGraph out = std::move(graph_);
  graph_ = StagedGraph();
  next_ = 0;
  out.Validate();
  return out;
}

// --- BuildModel ------------------------------------------------------------

StagedGraph BuildModel(const ModelConfig& config) {
  if (config.layers <= 0) {
    throw ValidationError(fmt::format("model.layers: must be positive, got {}", config.layers));
  }
  if (config.width <= 0) {
    throw ValidationError(fmt::format("model.width: must be positive, got {}", config.width));
  }
  if (config.microbatch_rows <= 0) {
    throw ValidationError(
        fmt::format("model.microbatch_rows: must be positive, got {}", config.microbatch_rows));
  }
  if (config.elem_bytes <= 0) {
    throw ValidationError("model.elem_bytes: must be positive");
  }
  if (config.tied && config.layers < 2) {
    throw ValidationError("model.tied: requires at least 2 layers");
  }
  std::set<int> yields(config.yield_after.begin(), config.yield_after.end());
  if (yields.size() != config.yield_after.size()) {
    throw ValidationError("model.yield_after: duplicate positions");
  }
  if (config.yield_every < 0) {
    throw ValidationError("model.yield_every: must be non-negative");
  }
  if (yields.empty() && config.yield_every > 0) {
    for (int b = config.yield_every; b < config.layers; b += config.yield_every) yields.insert(b);
  }
  if (static_cast<int>(yields.size()) >= config.layers) {
    throw ValidationError(fmt::format("model.yield_after: {} yields need more than {} layers",
                                      yields.size(), config.layers));
  }
  for (int b : yields) {
    if (b < 1 || b >= config.layers) {
      throw ValidationError(
          fmt::format("model.yield_after: position {} outside [1, {})", b, config.layers));
    }
  }

  const int64_t n = config.microbatch_rows;
  const int64_t w = config.width;
  const int64_t eb = config.elem_bytes;
  GraphBuilder b;
  ValueId h = b.Input({{n, w}, eb}, "x");
  ValueId first_weight;
  for (int l = 0; l < config.layers; ++l) {
    ValueId weight;
    if (config.tied && l == config.layers - 1) {
      weight = b.Transpose(first_weight);
    } else {
      weight = b.Parameter({{w, w}, eb}, fmt::format("w{}", l));
      if (l == 0) first_weight = weight;
    }
    h = b.Matmul(h, weight);
    if (config.bias) {
      ValueId bias = b.Parameter({{1, w}, eb}, fmt::format("b{}", l));
      h = b.Add(h, b.Broadcast(bias, {n, w}));
    }
    if (l + 1 < config.layers) h = b.Relu(h);
    if (yields.contains(l + 1)) h = b.Yield(h);
  }
  ValueId target = b.Input({{n, w}, eb}, "y");
  b.MarkOutput(b.SubSampleLoss(h, target));
  return b.Build();
}

// --- Partitioning ----------------------------------------------------------

StagedGraph StagedGraph::WithoutDeadOps() const {
  std::vector<bool> live(ops_.size(), false);
  for (ValueId v : outputs_) live[producer_index(v)] = true;
  for (size_t i = ops_.size(); i-- > 0;) {
    if (!live[i]) continue;
    for (ValueId v : ops_[i].operands) live[producer_index(v)] = true;
  }
  StagedGraph out;
  out.outputs_ = outputs_;
  for (size_t i = 0; i < ops_.size(); ++i) {
    if (!live[i]) continue;
    const ValueId r = ops_[i].result;
    if (params_.contains(r)) out.params_.insert(r);
    if (inputs_.contains(r)) out.inputs_.insert(r);
    out.index_.emplace(r, out.ops_.size());
    out.ops_.push_back(ops_[i]);
  }
  return out;
}

std::vector<const StageCrossing*> StagePartition::crossings_into(int stage) const {
  std::vector<const StageCrossing*> out;
  for (const StageCrossing& c : crossings) {
    if (c.dst == stage) out.push_back(&c);
  }
  return out;
}

std::vector<const StageCrossing*> StagePartition::crossings_out_of(int stage) const {
  std::vector<const StageCrossing*> out;
  for (const StageCrossing& c : crossings) {
    if (c.src == stage) out.push_back(&c);
  }
  return out;
}

StagePartition PartitionStages(const StagedGraph& input) {
  input.Validate();
  StagePartition p;
  p.graph = input.WithoutDeadOps();
  const StagedGraph& g = p.graph;
  const auto& ops = g.ops();
  const int num_markers = g.num_markers();
  p.num_stages = num_markers + 1;

  // Smallest index among yield-markers that transitively depend on each op.
  std::vector<std::vector<size_t>> consumers(ops.size());
  for (size_t i = 0; i < ops.size(); ++i) {
    for (ValueId v : ops[i].operands) consumers[g.producer_index(v)].push_back(i);
  }
  std::vector<int> marker_index(ops.size(), -1);
  {
    int k = 0;
    for (size_t m : g.marker_indices()) marker_index[m] = k++;
  }
  std::vector<int> feeds_marker(ops.size(), kNoMarker);
  for (size_t i = ops.size(); i-- > 0;) {
    if (marker_index[i] >= 0) feeds_marker[i] = marker_index[i];
    for (size_t c : consumers[i]) feeds_marker[i] = std::min(feeds_marker[i], feeds_marker[c]);
  }
  std::set<size_t> output_ops;
  for (ValueId v : g.outputs()) output_ops.insert(g.producer_index(v));

  p.stage_of_op.assign(ops.size(), 0);
  for (size_t i = ops.size(); i-- > 0;) {
    int stage;
    if (feeds_marker[i] != kNoMarker) {
      stage = feeds_marker[i];
    } else if (output_ops.contains(i)) {
      stage = p.num_stages - 1;
    } else {
      stage = p.num_stages - 1;
      for (size_t c : consumers[i]) stage = std::min(stage, p.stage_of_op[c]);
    }
    p.stage_of_op[i] = stage;
  }

  p.stage_ops.assign(static_cast<size_t>(p.num_stages), {});
  p.summaries.assign(static_cast<size_t>(p.num_stages), {});
  p.stage_inputs.assign(static_cast<size_t>(p.num_stages), {});
  std::map<std::pair<int, int>, std::set<ValueId>> crossing_sets;
  std::vector<std::set<ValueId>> params_used(static_cast<size_t>(p.num_stages));
  std::vector<std::set<ValueId>> inputs_used(static_cast<size_t>(p.num_stages));
  for (size_t i = 0; i < ops.size(); ++i) {
    const int s = p.stage_of_op[i];
    p.stage_ops[static_cast<size_t>(s)].push_back(i);
    p.summaries[static_cast<size_t>(s)].fwd_flops += ops[i].flops;
    for (ValueId v : ops[i].operands) {
      const size_t src = g.producer_index(v);
      if (g.params().contains(v)) {
        params_used[static_cast<size_t>(s)].insert(v);
      } else if (g.inputs().contains(v)) {
        inputs_used[static_cast<size_t>(s)].insert(v);
      } else if (p.stage_of_op[src] < s) {
        crossing_sets[{p.stage_of_op[src], s}].insert(v);
      } else if (p.stage_of_op[src] > s) {
        throw Error(fmt::format("stage assignment is not monotone at op {}", ops[i].id.value()));
      }
    }
  }
  for (auto& [key, values] : crossing_sets) {
    p.crossings.push_back({key.first, key.second, {values.begin(), values.end()}});
    for (ValueId v : values) {
      p.summaries[static_cast<size_t>(key.first)].boundary_out_bytes += g.spec(v).total_bytes();
    }
  }
  for (int s = 0; s < p.num_stages; ++s) {
    for (ValueId v : params_used[static_cast<size_t>(s)]) {
      p.param_stages[v].push_back(s);
      p.summaries[static_cast<size_t>(s)].param_bytes += g.spec(v).total_bytes();
    }
    p.stage_inputs[static_cast<size_t>(s)].assign(inputs_used[static_cast<size_t>(s)].begin(),
                                                  inputs_used[static_cast<size_t>(s)].end());
  }
  for (const auto& [param, stages] : p.param_stages) {
    if (stages.size() > 1) p.shared_params.emplace(param, stages);
  }
  return p;
}

StagePartition DeriveBackward(StagePartition p) {
  const StagedGraph& g = p.graph;
  const auto& ops = g.ops();
  p.backward.assign(static_cast<size_t>(p.num_stages), {});
  for (int s = 0; s < p.num_stages; ++s) {
    BackwardStage& bs = p.backward[static_cast<size_t>(s)];
    StageSummary& sum = p.summaries[static_cast<size_t>(s)];
    bs.stage = s;
    bs.seeds_loss = (s == p.num_stages - 1);
    sum.bwd_flops = 0.0;
    std::set<ValueId> stash;
    for (size_t i : p.stage_ops[static_cast<size_t>(s)]) {
      const OpNode& op = ops[i];
      std::vector<TensorSpec> specs;
      for (ValueId v : op.operands) specs.push_back(g.spec(v));
      sum.bwd_flops += BackwardFlops(op, specs);
      switch (op.kind) {
        case OpKind::kMatmul:
        case OpKind::kSubSampleLoss:
          stash.insert(op.operands[0]);
          stash.insert(op.operands[1]);
          break;
        case OpKind::kRelu:
          stash.insert(op.operands[0]);
          break;
        case OpKind::kAdd:
        case OpKind::kBroadcast:
        case OpKind::kTranspose:
        case OpKind::kScale:
        case OpKind::kYield:
        case OpKind::kParameterRead:
        case OpKind::kInputRead:
        case OpKind::kConcat:
          break;
      }
    }
    for (ValueId v : stash) {
      if (!g.params().contains(v)) bs.stash.push_back(v);
    }
    sum.stash_bytes = 0;
    for (ValueId v : bs.stash) sum.stash_bytes += g.spec(v).total_bytes();

    std::set<ValueId> entering(p.stage_inputs[static_cast<size_t>(s)].begin(),
                               p.stage_inputs[static_cast<size_t>(s)].end());
    for (const StageCrossing* c : p.crossings_into(s)) {
      entering.insert(c->values.begin(), c->values.end());
    }
    sum.remat_stash_bytes = 0;
    for (ValueId v : entering) sum.remat_stash_bytes += g.spec(v).total_bytes();

    for (const auto& [param, stages] : p.param_stages) {
      if (std::find(stages.begin(), stages.end(), s) != stages.end()) {
        bs.param_partials.push_back(param);
      }
    }
  }
  p.grad_merges.clear();
  for (const auto& [param, stages] : p.shared_params) p.grad_merges.push_back({param, stages});
  p.has_backward = true;
  return p;
}

}  // namespace mpmd
