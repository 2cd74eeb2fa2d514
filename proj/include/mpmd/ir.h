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

// Op-level dataflow graph with pipeline-yield markers, its partition into
// stages, and the backward structure derived from it.

#ifndef MPMD_IR_H_
#define MPMD_IR_H_

#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "mpmd/ids.h"
#include "mpmd/tensor.h"

namespace mpmd {

enum class OpKind {
  kMatmul,
  kAdd,
  kRelu,
  kSubSampleLoss,  // 0.5 * sum((pred - target)^2) over all elements.
  kBroadcast,      // () or (1, n) -> (m, n).
  kTranspose,      // 2-D.
  kScale,          // result = attr * operand.
  kYield,          // identity that closes the current stage.
  kParameterRead,
  kInputRead,
  kConcat,  // 2-D, along the last dimension; attr = width of the first operand.
};

std::string_view OpKindName(OpKind kind);
std::optional<OpKind> ParseOpKind(std::string_view name);

struct OpNode {
  OpId id;
  OpKind kind = OpKind::kAdd;
  std::vector<ValueId> operands;
  ValueId result;
  TensorSpec result_spec;
  double flops = 0.0;
  double attr = 0.0;
  std::string name;

  bool is_leaf() const { return kind == OpKind::kParameterRead || kind == OpKind::kInputRead; }
};

// Forward flops of a node with the given operand specs.
double ForwardFlops(OpKind kind, const std::vector<TensorSpec>& operands, const TensorSpec& result);
// Flops of the node's backward rule.
double BackwardFlops(const OpNode& op, const std::vector<TensorSpec>& operands);

// Topologically ordered op list. Construct through GraphBuilder; a built graph
// always satisfies Validate().
class StagedGraph {
 public:
  const std::vector<OpNode>& ops() const { return ops_; }
  const std::set<ValueId>& params() const { return params_; }
  const std::set<ValueId>& inputs() const { return inputs_; }
  const std::vector<ValueId>& outputs() const { return outputs_; }

  // Index into ops() of the op defining `v`.
  size_t producer_index(ValueId v) const;
  const OpNode& producer(ValueId v) const { return ops_[producer_index(v)]; }
  const TensorSpec& spec(ValueId v) const { return producer(v).result_spec; }
  bool defines(ValueId v) const { return index_.contains(v); }

  // Yield markers in definition order.
  std::vector<size_t> marker_indices() const;
  int num_markers() const { return static_cast<int>(marker_indices().size()); }

  // The scalar loss output.
  ValueId loss() const { return outputs_.front(); }

  // Throws ValidationError on the first violated invariant.
  void Validate() const;

  // Copy without ops that reach no output; ids are preserved.
  StagedGraph WithoutDeadOps() const;

 private:
  friend class GraphBuilder;

  std::vector<OpNode> ops_;
  std::set<ValueId> params_;
  std::set<ValueId> inputs_;
  std::vector<ValueId> outputs_;
  std::unordered_map<ValueId, size_t> index_;
};

class GraphBuilder {
 public:
  ValueId Parameter(TensorSpec spec, std::string name = "");
  ValueId Input(TensorSpec spec, std::string name = "");
  ValueId Matmul(ValueId a, ValueId b);
  ValueId Add(ValueId a, ValueId b);
  ValueId Relu(ValueId a);
  ValueId SubSampleLoss(ValueId pred, ValueId target);
  ValueId Broadcast(ValueId a, std::vector<int64_t> dims);
  ValueId Transpose(ValueId a);
  ValueId Scale(ValueId a, double factor);
  ValueId Yield(ValueId a);
  ValueId Concat(ValueId a, ValueId b);

  // The first output must be the scalar loss.
  void MarkOutput(ValueId v);

  // Validates and returns the graph. The builder is left empty.
  StagedGraph Build();

 private:
  ValueId Emit(OpKind kind, std::vector<ValueId> operands, TensorSpec spec, double attr = 0.0,
               std::string name = "");
  const TensorSpec& SpecOf(ValueId v) const;

  StagedGraph graph_;
  int32_t next_ = 0;
};

// Feed-forward model: `layers` square blocks of `width`, relu between blocks,
// squared-error loss against a target input.
struct ModelConfig {
  int layers = 2;
  int width = 8;
  int microbatch_rows = 4;
  // Yields are placed after block b (1-based) for every b listed; if empty and
  // yield_every > 0, after every yield_every blocks.
  std::vector<int> yield_after;
  int yield_every = 0;
  // Block L-1 multiplies by the transpose of block 0's weight.
  bool tied = false;
  bool bias = false;
  int64_t elem_bytes = 8;
};

StagedGraph BuildModel(const ModelConfig& config);

struct StageSummary {
  double fwd_flops = 0.0;
  double bwd_flops = 0.0;
  int64_t param_bytes = 0;
  int64_t stash_bytes = 0;
  // Stash under full rematerialization: only the values entering the stage.
  int64_t remat_stash_bytes = 0;
  int64_t boundary_out_bytes = 0;
};

// Forward values defined in stage `src` and consumed in stage `dst`.
struct StageCrossing {
  int src = 0;
  int dst = 0;
  std::vector<ValueId> values;
};

struct BackwardStage {
  int stage = 0;
  // Non-parameter forward values read by the backward rules of this stage.
  std::vector<ValueId> stash;
  // Parameters whose partial gradient this stage emits.
  std::vector<ValueId> param_partials;
  bool seeds_loss = false;
};

// A parameter used in k > 1 stages: k partial gradients and k-1 adds.
struct GradMerge {
  ValueId param;
  std::vector<int> stages;
  int num_adds() const { return static_cast<int>(stages.size()) - 1; }
};

struct StagePartition {
  StagedGraph graph;  // Dead ops removed.
  int num_stages = 1;
  std::vector<int> stage_of_op;                // Parallel to graph.ops().
  std::vector<std::vector<size_t>> stage_ops;  // Op indices per stage, in order.
  std::vector<StageSummary> summaries;
  std::vector<StageCrossing> crossings;               // Sorted by (src, dst).
  std::map<ValueId, std::vector<int>> param_stages;   // Every param.
  std::map<ValueId, std::vector<int>> shared_params;  // Params used in > 1 stage.
  std::vector<std::vector<ValueId>> stage_inputs;     // Input values read per stage.

  bool has_backward = false;
  std::vector<BackwardStage> backward;
  std::vector<GradMerge> grad_merges;

  int stage_of(ValueId v) const { return stage_of_op[graph.producer_index(v)]; }
  std::vector<const StageCrossing*> crossings_into(int stage) const;
  std::vector<const StageCrossing*> crossings_out_of(int stage) const;
};

StagePartition PartitionStages(const StagedGraph& graph);

// Requires a partition from PartitionStages; fills backward, grad_merges,
// stash sizes and backward flops.
StagePartition DeriveBackward(StagePartition partition);

}  // namespace mpmd

#endif  // MPMD_IR_H_
