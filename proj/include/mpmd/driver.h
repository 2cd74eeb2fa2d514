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

// Run configuration and the plan, simulate, verify and sweep commands.

#ifndef MPMD_DRIVER_H_
#define MPMD_DRIVER_H_

#include <cstdint>
#include <exception>
#include <string>
#include <string_view>
#include <vector>

#include "mpmd/executor.h"
#include "mpmd/ir.h"
#include "mpmd/plan.h"
#include "mpmd/simulator.h"

namespace mpmd {

// JSON document, "version": 1. Every section and key is optional; see
// README.md for the full list.
struct RunConfig {
  ModelConfig model;
  int P = 2;
  int M = 4;
  int V = 1;
  std::string schedule = "1f1b";
  std::string schedule_file;  // overrides schedule, P, M and V when set
  bool commute = true;
  CostModel cost;
  bool remat_compare = false;  // simulate: also report the other remat policy
  OptimizerConfig optimizer;
  uint64_t seed = 0;
  double timeout_s = 30.0;
  int max_delay_us = 0;      // verify: random delays per instruction
  int drop_recv_actor = -1;  // verify: remove that actor's first receive
  std::string out_dir = "mpmd_out";
  SweepGrid sweep;  // model and cost are copied from the top level
};

// Throws ValidationError naming the offending field; JSON syntax errors carry
// line and column.
RunConfig ParseRunConfig(std::string_view text, std::string_view origin = "config");
RunConfig LoadRunConfig(const std::string& path);
std::string RunConfigToJson(const RunConfig& config);

// Applies `key=value` overrides used by the command line: out, schedule_file,
// seed, timeout_s, max_delay_us, drop_recv_actor.
void SetConfigValue(RunConfig& config, std::string_view key, std::string_view value);

Schedule ResolveSchedule(const RunConfig& config);
// The model with yields defaulted to an even split into the schedule's stage
// count when none are given.
ModelConfig ResolveModel(const RunConfig& config, const Schedule& schedule);
Plan PlanFromConfig(const RunConfig& config);

struct CommandResult {
  int exit_code = 0;
  std::string summary;
  std::vector<std::string> files;
};

CommandResult CmdPlan(const RunConfig& config);
CommandResult CmdSimulate(const RunConfig& config);
CommandResult CmdVerify(const RunConfig& config);
CommandResult CmdSweep(const RunConfig& config);

// "plan", "simulate", "verify" or "sweep". Errors are caught and turned into
// an exit code and a message in the summary.
CommandResult RunCommand(std::string_view command, const RunConfig& config);

// 1 validation or memory capacity, 2 deadlock or liveness, 3 numerical
// mismatch.
int ExitCodeFor(const std::exception& e);

}  // namespace mpmd

#endif  // MPMD_DRIVER_H_
