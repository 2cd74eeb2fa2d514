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

// Forward kernels and hand-written backward rules for the fixed op
// vocabulary.

#ifndef MPMD_OPS_H_
#define MPMD_OPS_H_

#include <span>
#include <unordered_map>

#include "mpmd/ids.h"
#include "mpmd/ir.h"
#include "mpmd/tensor.h"

namespace mpmd {

using ValueEnv = std::unordered_map<ValueId, Tensor>;

// Not defined for leaf reads.
Tensor EvaluateOp(const OpNode& op, std::span<const Tensor* const> operands);

// Accumulates the operand gradients of `op` into `operand_grads`, which must
// hold zero-initialized tensors of the operand shapes; null entries are
// skipped.
void BackpropOp(const OpNode& op, std::span<const Tensor* const> operands,
                const Tensor& result_grad, std::span<Tensor* const> operand_grads);

// Evaluates ops[i] for every i in `op_indices`, in order. Leaf values must be
// present in `env` beforehand.
void RunForward(const StagedGraph& graph, std::span<const size_t> op_indices, ValueEnv& env);

// Reverse sweep over `op_indices`. `values` holds every forward operand the
// backward rules read; `grads` holds the seeds on entry and receives the
// accumulated gradients. Graph inputs receive no gradient.
void RunBackward(const StagedGraph& graph, std::span<const size_t> op_indices,
                 const ValueEnv& values, ValueEnv& grads);

}  // namespace mpmd

#endif  // MPMD_OPS_H_
