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

// The gradient-accumulation loop unrolled under a schedule into a placed DAG
// of tasks and buffers, plus the out-of-loop epilogue.

#ifndef MPMD_TASKGRAPH_H_
#define MPMD_TASKGRAPH_H_

#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "mpmd/ids.h"
#include "mpmd/ir.h"
#include "mpmd/schedules.h"

namespace mpmd {

enum class BufferKind {
  kActivation,
  kActivationGrad,
  kStash,
  kParamGradPartial,
  kParamGradTotal,
  kLoss,
  kParam,
  kOptimizerState,
  kInput,
};

std::string_view BufferKindName(BufferKind kind);

struct Buffer {
  BufferId id;
  BufferKind kind = BufferKind::kActivation;
  std::string name;
  int64_t size_bytes = 0;
  int actor = -1;    // Where the buffer is produced or preloaded.
  TaskRef producer;  // Invalid for preloaded buffers.
  std::vector<TaskRef> consumers;
  // Forward values carried. Gradient buffers carry the values they are the
  // gradient of; parameter-side buffers carry the parameter.
  std::vector<ValueId> values;
  int microbatch = -1;
  int stage = -1;
  int src_stage = -1;  // Crossing source for activation bundles and their gradients.
  int dst_stage = -1;
  bool accumulator = false;    // Member of a per-(param, stage) accumulation chain.
  bool is_output = false;      // Gathered by the driver at step end.
  bool learning_rate = false;  // Replicated scalar input of the optimizer.

  bool preloaded() const { return !producer.valid(); }
  // Kept alive across steps.
  bool persistent() const {
    return kind == BufferKind::kParam || kind == BufferKind::kOptimizerState;
  }
};

enum class TaskKind { kLoop, kGradMerge, kOptimizerUpdate, kLossConcat };

std::string_view TaskKindName(TaskKind kind);

struct Task {
  TaskRef id;
  TaskKind kind = TaskKind::kLoop;
  TaskId tid;      // Loop tasks only.
  ValueId param;   // Merge and update tasks.
  int actor = -1;  // -1 until placed.
  std::string name;
  std::vector<BufferId> consumes;
  std::vector<BufferId> produces;
  std::vector<BufferId> mutates;  // Updated in place; must be local.
  double flops = 0.0;
};

struct TaskGraph {
  int num_actors = 1;
  int num_microbatches = 1;
  int num_stages = 1;
  std::shared_ptr<const StagePartition> partition;
  Schedule schedule;
  std::vector<Task> tasks;
  std::vector<Buffer> buffers;
  // Per-actor execution order. Loop tasks follow the schedule; the epilogue
  // is appended by InferOuterPlacement.
  std::vector<std::vector<TaskRef>> actor_order;
  bool commuted = false;
  bool placed = false;

  const Task& task(TaskRef t) const { return tasks[t.index()]; }
  Task& task(TaskRef t) { return tasks[t.index()]; }
  const Buffer& buffer(BufferId b) const { return buffers[b.index()]; }
  Buffer& buffer(BufferId b) { return buffers[b.index()]; }

  TaskRef loop_task(const TaskId& t) const;

  // Throws DeadlockError naming a cycle if the data edges are cyclic.
  std::vector<TaskRef> TopologicalOrder() const;

  // Structural invariants; throws Error.
  void Validate() const;

  // Number of (buffer, remote consumer actor) pairs.
  int CrossActorTransfers() const;
  // Same, restricted to gradient buffers of `param`.
  int CrossActorGradTransfers(ValueId param) const;

  int CountBuffers(BufferKind kind) const;
  int CountTasks(TaskKind kind) const;
};

// Naive form: a parameter shared by k stages has its k-1 upper partial
// gradients sent to the lowest stage's backward task every microbatch.
TaskGraph Unroll(std::shared_ptr<const StagePartition> partition, const Schedule& schedule);

// Per-stage local accumulation chains with k-1 post-loop merges. Must run
// before InferOuterPlacement.
TaskGraph CommuteGradAccumulation(TaskGraph tg);

struct OuterPlacementOptions {
  // Parameter value -> actor its update must run on.
  std::map<ValueId, int> param_pins;
};

// Places epilogue tasks and optimizer state, replicates the learning rate on
// every updating actor, and appends the epilogue to actor_order.
TaskGraph InferOuterPlacement(TaskGraph tg, const OuterPlacementOptions& options = {});

std::string TaskGraphToJson(const TaskGraph& tg);

}  // namespace mpmd

#endif  // MPMD_TASKGRAPH_H_
