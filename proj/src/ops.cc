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

#include "mpmd/ops.h"

#include <fmt/format.h>

#include "mpmd/errors.h"

namespace mpmd {
namespace {

Tensor Matmul(const Tensor& a, const Tensor& b) {
  const int64_t n = a.dim(0), k = a.dim(1), m = b.dim(1);
  Tensor c({n, m});
  for (int64_t i = 0; i < n; ++i) {
    for (int64_t p = 0; p < k; ++p) {
      const double av = a.at(i, p);
      for (int64_t j = 0; j < m; ++j) c.at(i, j) += av * b.at(p, j);
    }
  }
  return c;
}

// out += a^T b
void AccumulateTransposedA(const Tensor& a, const Tensor& b, Tensor& out) {
  const int64_t n = a.dim(0), k = a.dim(1), m = b.dim(1);
  for (int64_t i = 0; i < n; ++i) {
    for (int64_t p = 0; p < k; ++p) {
      const double av = a.at(i, p);
      for (int64_t j = 0; j < m; ++j) out.at(p, j) += av * b.at(i, j);
    }
  }
}

// out += a b^T
void AccumulateTransposedB(const Tensor& a, const Tensor& b, Tensor& out) {
  const int64_t n = a.dim(0), m = a.dim(1), k = b.dim(0);
  for (int64_t i = 0; i < n; ++i) {
    for (int64_t p = 0; p < k; ++p) {
      double acc = 0.0;
      for (int64_t j = 0; j < m; ++j) acc += a.at(i, j) * b.at(p, j);
      out.at(i, p) += acc;
    }
  }
}

Tensor& Slot(Tensor* grad, const Tensor& like) {
  if (grad->size() == 0 && like.size() != 0) *grad = Tensor::Zeros(like.dims());
  return *grad;
}

}  // namespace

Tensor EvaluateOp(const OpNode& op, std::span<const Tensor* const> in) {
  switch (op.kind) {
    case OpKind::kMatmul:
      return Matmul(*in[0], *in[1]);
    case OpKind::kAdd:
      return *in[0] + *in[1];
    case OpKind::kRelu: {
      Tensor out = *in[0];
      for (double& v : out.data()) v = v > 0.0 ? v : 0.0;
      return out;
    }
    case OpKind::kSubSampleLoss: {
      double acc = 0.0;
      for (int64_t i = 0; i < in[0]->size(); ++i) {
        const double d = (*in[0])[i] - (*in[1])[i];
        acc += d * d;
      }
      return Tensor::Scalar(0.5 * acc);
    }
    case OpKind::kBroadcast: {
      Tensor out(op.result_spec.dims);
      const Tensor& a = *in[0];
      if (a.rank() == 0) {
        for (double& v : out.data()) v = a[0];
      } else {
        for (int64_t i = 0; i < out.dim(0); ++i) {
          for (int64_t j = 0; j < out.dim(1); ++j) out.at(i, j) = a.at(0, j);
        }
      }
      return out;
    }
    case OpKind::kTranspose: {
      const Tensor& a = *in[0];
      Tensor out({a.dim(1), a.dim(0)});
      for (int64_t i = 0; i < a.dim(0); ++i) {
        for (int64_t j = 0; j < a.dim(1); ++j) out.at(j, i) = a.at(i, j);
      }
      return out;
    }
    case OpKind::kScale: {
      Tensor out = *in[0];
      for (double& v : out.data()) v *= op.attr;
      return out;
    }
    case OpKind::kYield:
      return *in[0];
    case OpKind::kConcat: {
      const Tensor& a = *in[0];
      const Tensor& b = *in[1];
      Tensor out({a.dim(0), a.dim(1) + b.dim(1)});
      for (int64_t i = 0; i < a.dim(0); ++i) {
        for (int64_t j = 0; j < a.dim(1); ++j) out.at(i, j) = a.at(i, j);
        for (int64_t j = 0; j < b.dim(1); ++j) out.at(i, a.dim(1) + j) = b.at(i, j);
      }
      return out;
    }
    case OpKind::kParameterRead:
    case OpKind::kInputRead:
      break;
  }
  throw Error(fmt::format("op {} ({}) has no forward kernel", op.id.value(), OpKindName(op.kind)));
}

void BackpropOp(const OpNode& op, std::span<const Tensor* const> in, const Tensor& g,
                std::span<Tensor* const> out) {
  switch (op.kind) {
    case OpKind::kMatmul:
      if (out[0]) AccumulateTransposedB(g, *in[1], Slot(out[0], *in[0]));
      if (out[1]) AccumulateTransposedA(*in[0], g, Slot(out[1], *in[1]));
      return;
    case OpKind::kAdd:
      if (out[0]) Slot(out[0], g) += g;
      if (out[1]) Slot(out[1], g) += g;
      return;
    case OpKind::kRelu:
      if (out[0]) {
        Tensor& d = Slot(out[0], *in[0]);
        for (int64_t i = 0; i < g.size(); ++i) {
          if ((*in[0])[i] > 0.0) d[i] += g[i];
        }
      }
      return;
    case OpKind::kSubSampleLoss: {
      const double s = g[0];
      if (out[0]) {
        Tensor& d = Slot(out[0], *in[0]);
        for (int64_t i = 0; i < d.size(); ++i) d[i] += s * ((*in[0])[i] - (*in[1])[i]);
      }
      if (out[1]) {
        Tensor& d = Slot(out[1], *in[1]);
        for (int64_t i = 0; i < d.size(); ++i) d[i] -= s * ((*in[0])[i] - (*in[1])[i]);
      }
      return;
    }
    case OpKind::kBroadcast:
      if (out[0]) {
        Tensor& d = *out[0];
        if (d.rank() == 0) {
          for (int64_t i = 0; i < g.size(); ++i) d[0] += g[i];
        } else {
          for (int64_t i = 0; i < g.dim(0); ++i) {
            for (int64_t j = 0; j < g.dim(1); ++j) d.at(0, j) += g.at(i, j);
          }
        }
      }
      return;
    case OpKind::kTranspose:
      if (out[0]) {
        Tensor& d = Slot(out[0], *in[0]);
        for (int64_t i = 0; i < g.dim(0); ++i) {
          for (int64_t j = 0; j < g.dim(1); ++j) d.at(j, i) += g.at(i, j);
        }
      }
      return;
    case OpKind::kScale:
      if (out[0]) {
        Tensor& d = Slot(out[0], g);
        for (int64_t i = 0; i < g.size(); ++i) d[i] += op.attr * g[i];
      }
      return;
    case OpKind::kYield:
      if (out[0]) Slot(out[0], g) += g;
      return;
    case OpKind::kConcat: {
      const int64_t wa = static_cast<int64_t>(op.attr);
      const int64_t wb = g.dim(1) - wa;
      if (out[0]) {
        Tensor& d = Slot(out[0], *in[0]);
        for (int64_t i = 0; i < g.dim(0); ++i) {
          for (int64_t j = 0; j < wa; ++j) d.at(i, j) += g.at(i, j);
        }
      }
      if (out[1]) {
        Tensor& d = Slot(out[1], *in[1]);
        for (int64_t i = 0; i < g.dim(0); ++i) {
          for (int64_t j = 0; j < wb; ++j) d.at(i, j) += g.at(i, wa + j);
        }
      }
      return;
    }
    case OpKind::kParameterRead:
    case OpKind::kInputRead:
      return;
  }
}

void RunForward(const StagedGraph& graph, std::span<const size_t> op_indices, ValueEnv& env) {
  const auto& ops = graph.ops();
  std::vector<const Tensor*> in;
  for (size_t i : op_indices) {
    const OpNode& op = ops[i];
    if (op.is_leaf()) {
      if (!env.contains(op.result)) {
        throw Error(fmt::format("leaf value {} ({}) was not provided", op.result.value(), op.name));
      }
      continue;
    }
    in.clear();
    for (ValueId v : op.operands) {
      auto it = env.find(v);
      if (it == env.end()) {
        throw Error(fmt::format("op {} reads missing value {}", op.id.value(), v.value()));
      }
      in.push_back(&it->second);
    }
    env.insert_or_assign(op.result, EvaluateOp(op, in));
  }
}

void RunBackward(const StagedGraph& graph, std::span<const size_t> op_indices,
                 const ValueEnv& values, ValueEnv& grads) {
  const auto& ops = graph.ops();
  static const Tensor kEmpty;
  std::vector<const Tensor*> in;
  std::vector<Tensor*> out;
  for (size_t k = op_indices.size(); k-- > 0;) {
    const OpNode& op = ops[op_indices[k]];
    if (op.is_leaf()) continue;
    auto git = grads.find(op.result);
    if (git == grads.end()) continue;
    const Tensor g = git->second;
    in.clear();
    out.clear();
    for (ValueId v : op.operands) {
      auto it = values.find(v);
      // Rules that do not read an operand's value only need its shape, which
      // the gradient slot supplies.
      in.push_back(it == values.end() ? &kEmpty : &it->second);
      if (graph.inputs().contains(v)) {
        out.push_back(nullptr);
      } else {
        Tensor& slot = grads[v];
        if (slot.size() == 0) slot = Tensor::Zeros(graph.spec(v).dims);
        out.push_back(&slot);
      }
    }
    BackpropOp(op, in, g, out);
  }
}

}  // namespace mpmd
