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

// Concurrent execution of per-actor programs over real tensors, and the
// serial gradient-accumulation loop it is checked against.

#ifndef MPMD_EXECUTOR_H_
#define MPMD_EXECUTOR_H_

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "mpmd/comms.h"
#include "mpmd/ids.h"
#include "mpmd/ir.h"
#include "mpmd/taskgraph.h"
#include "mpmd/tensor.h"

namespace mpmd {

using TensorMap = std::map<ValueId, Tensor>;

// Momentum SGD: v = momentum * v + g; p = p - learning_rate * v. Velocity
// starts at zero.
struct OptimizerConfig {
  double learning_rate = 0.05;
  double momentum = 0.9;
};

struct StepResult {
  TensorMap grads;             // summed over microbatches
  std::vector<double> losses;  // one per microbatch
  TensorMap new_params;
  TensorMap new_velocity;
};

// Values uniform in [-scale, scale) from a portable generator.
TensorMap InitParams(const StagedGraph& graph, uint64_t seed, double scale = 0.5);
// Every graph input with M times the microbatch rows.
TensorMap MakeBatch(const StagedGraph& graph, int M, uint64_t seed);

// Serial loop over M microbatches: full forward and backward per microbatch,
// gradients summed, then one optimizer step. Throws ValidationError when the
// batch rows do not split into M equal microbatches.
StepResult RunReference(const StagedGraph& graph, const TensorMap& params, const TensorMap& batch,
                        int M, const OptimizerConfig& opt = {});

struct ExecutorOptions {
  OptimizerConfig optimizer;
  double timeout_s = 30.0;
  // Random sleeps of up to max_delay_us before every instruction.
  int max_delay_us = 0;
  uint64_t delay_seed = 0;
  // Fail when a worker ends the step holding anything except parameters,
  // optimizer state and outputs. Only meaningful with deletions inserted.
  bool check_final_store = true;
};

struct RunStats {
  int driver_messages = 0;                     // dispatches plus result gathers
  int channel_messages = 0;                    // point-to-point messages
  std::map<ValueId, int> param_grad_messages;  // gradient messages per parameter
  std::vector<int> peak_live_buffers;
  std::vector<int> peak_live_stash;
  std::vector<std::set<BufferId>> live_at_end;
};

struct PipelinedRun {
  StepResult result;
  RunStats stats;
};

// Runs one worker thread per actor. Throws LivenessFault on a missing
// buffer or channel order violation, DeadlockError when the watchdog fires.
PipelinedRun RunPipelined(const CommPlan& cp, const TaskGraph& tg, const TensorMap& params,
                          const TensorMap& batch, const ExecutorOptions& options = {});

struct Comparison {
  double max_rel_error = 0.0;
  std::string worst;  // name of the worst entry
  bool within(double tol) const { return max_rel_error <= tol; }
};

// Compares the entries of `actual` with the same keys in `expected`; a key
// missing from either side counts as an infinite error.
Comparison Compare(const StepResult& actual, const StepResult& expected);

std::string StepResultToJson(const StepResult& r);
StepResult StepResultFromJson(std::string_view text, std::string_view origin = "step result");

}  // namespace mpmd

#endif  // MPMD_EXECUTOR_H_
