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

// Pipeline schedules: per-actor orderings of (microbatch, direction, stage)
// tasks, the canonical generators, and validation.

#ifndef MPMD_SCHEDULES_H_
#define MPMD_SCHEDULES_H_

#include <compare>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace mpmd {

enum class Direction { kFwd, kBwd };

std::string_view DirectionName(Direction d);

struct TaskId {
  int i = 0;
  Direction ty = Direction::kFwd;
  int stage = 0;

  auto operator<=>(const TaskId&) const = default;
  std::string ToString() const;  // "f(i,s)" or "b(i,s)"
};

inline TaskId Fwd(int i, int stage) { return {i, Direction::kFwd, stage}; }
inline TaskId Bwd(int i, int stage) { return {i, Direction::kBwd, stage}; }

struct Schedule {
  std::string name = "custom";
  int num_actors = 1;
  int num_microbatches = 1;
  int num_stages = 1;
  std::vector<std::vector<TaskId>> per_actor;

  int circular_repeat() const { return num_stages / num_actors; }
  int stage_to_actor(int stage) const { return stage % num_actors; }
  // Number of loop tasks, 2*M*S.
  int64_t num_tasks() const { return 2LL * num_microbatches * num_stages; }

  bool operator==(const Schedule&) const = default;
};

Schedule GPipe(int P, int M);
Schedule OneFOneB(int P, int M);
// V == 1 is 1F1B. For V > 1 requires M % P == 0.
Schedule Interleaved1F1B(int P, int M, int V);

// Name is one of "gpipe", "1f1b", "interleaved".
Schedule MakeSchedule(std::string_view name, int P, int M, int V);

struct Violation {
  std::string kind;  // "coverage", "task appears twice", "placement",
                     // "fwd/bwd co-location", "dependency cycle", "bounds"
  std::string detail;
};

struct ValidationReport {
  std::vector<Violation> violations;
  // A linear extension of the task dependencies consistent with every
  // per-actor order, when one exists.
  std::vector<TaskId> order;

  bool ok() const { return violations.empty(); }
  std::string ToString() const;
};

ValidationReport Validate(const Schedule& s);

// Throws ValidationError carrying the report text.
void ValidateOrThrow(const Schedule& s);

// {"version": 1, "actors": [[{"i":0,"ty":"fwd","stage":0}, ...], ...]}
std::string ScheduleToJson(const Schedule& s);
// Infers P from the actor count, S from the largest stage, M from the largest
// microbatch index, then validates.
Schedule ScheduleFromJson(std::string_view text, std::string_view origin = "schedule");
Schedule LoadSchedule(const std::string& path);

}  // namespace mpmd

#endif  // MPMD_SCHEDULES_H_
