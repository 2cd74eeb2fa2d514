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

#include "mpmd/plan.h"

#include <fmt/format.h>

#include "mpmd/errors.h"

namespace mpmd {

std::shared_ptr<const StagePartition> PartitionModel(const ModelConfig& config) {
  return std::make_shared<const StagePartition>(
      DeriveBackward(PartitionStages(BuildModel(config))));
}

Plan BuildPlan(std::shared_ptr<const StagePartition> partition, const Schedule& schedule,
               const PlanOptions& options) {
  ValidateOrThrow(schedule);
  if (schedule.num_stages != partition->num_stages) {
    throw ValidationError(fmt::format("schedule has {} stages but the model has {}",
                                      schedule.num_stages, partition->num_stages));
  }
  Plan plan;
  plan.partition = partition;
  plan.graph = Unroll(std::move(partition), schedule);
  if (options.commute) plan.graph = CommuteGradAccumulation(std::move(plan.graph));
  plan.graph = InferOuterPlacement(std::move(plan.graph), options.placement);
  plan.comms = InferComms(plan.graph);
  const DeadlockReport report = CheckDeadlockFree(plan.comms);
  if (!report.ok()) throw DeadlockError(report.ToString(plan.comms, plan.graph));
  if (options.insert_deletions) plan.comms = InsertDeletions(std::move(plan.comms), plan.graph);
  if (options.fuse) plan.comms = Fuse(std::move(plan.comms), plan.graph);
  return plan;
}

}  // namespace mpmd
