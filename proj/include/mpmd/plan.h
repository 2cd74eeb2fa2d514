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

// End-to-end planning: partition a model, unroll it under a schedule, place
// the epilogue, and lower to checked per-actor programs.

#ifndef MPMD_PLAN_H_
#define MPMD_PLAN_H_

#include <memory>

#include "mpmd/comms.h"
#include "mpmd/ir.h"
#include "mpmd/schedules.h"
#include "mpmd/taskgraph.h"

namespace mpmd {

std::shared_ptr<const StagePartition> PartitionModel(const ModelConfig& config);

struct PlanOptions {
  bool commute = true;
  bool insert_deletions = true;
  bool fuse = true;
  OuterPlacementOptions placement;
};

struct Plan {
  std::shared_ptr<const StagePartition> partition;
  TaskGraph graph;
  CommPlan comms;
};

// Throws ValidationError for an invalid schedule or a schedule whose stage
// count differs from the partition's, DeadlockError when the inferred
// programs fail the deadlock check.
Plan BuildPlan(std::shared_ptr<const StagePartition> partition, const Schedule& schedule,
               const PlanOptions& options = {});

}  // namespace mpmd

#endif  // MPMD_PLAN_H_
