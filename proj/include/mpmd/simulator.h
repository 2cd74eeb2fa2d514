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

// Timing and memory simulation of per-actor programs under a parametric cost
// model.

#ifndef MPMD_SIMULATOR_H_
#define MPMD_SIMULATOR_H_

#include <limits>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "mpmd/comms.h"
#include "mpmd/ir.h"
#include "mpmd/taskgraph.h"

namespace mpmd {

enum class RematPolicy { kNone, kFullPerStage };

std::string_view RematPolicyName(RematPolicy p);
RematPolicy ParseRematPolicy(std::string_view name);  // "none" | "full"

struct CostModel {
  // One entry applies to every actor; otherwise one per actor.
  std::vector<double> flops_per_second = {1e12};
  double intra_actor_speedup = 1.0;
  double link_latency_s = 0.0;
  double link_bytes_per_second = std::numeric_limits<double>::infinity();
  double mem_capacity_bytes = std::numeric_limits<double>::infinity();
  RematPolicy remat = RematPolicy::kNone;
  // Backward loop task flops = factor * stage forward flops; 0 uses the flops
  // derived from the backward rules.
  double bwd_cost_factor = 2.0;
  // Added to every RunTask.
  double dispatch_overhead_s = 0.0;
  // When uniform_fwd_s > 0, loop tasks ignore flops: a forward task costs
  // uniform_fwd_s / V and a backward task uniform_bwd_s / V, V being the
  // schedule's circular repeat. Epilogue tasks then cost nothing.
  double uniform_fwd_s = 0.0;
  double uniform_bwd_s = 0.0;

  double rate(int actor) const;
  // Throws ValidationError naming the offending field.
  void Validate(int num_actors) const;
};

// Compute seconds of `t` excluding dispatch overhead.
double TaskDuration(const Task& t, const TaskGraph& tg, const CostModel& cm);

struct TimelineEvent {
  int actor = 0;
  size_t index = 0;
  InstrKind kind = InstrKind::kRunTask;
  std::string category;  // fwd, bwd, epilogue, comm, memory
  std::string label;
  double start = 0.0;
  double end = 0.0;
};

struct SimReport {
  int num_actors = 1;
  double step_time_s = 0.0;
  // Loop window: first loop task start to last loop task end, over all actors.
  double loop_start_s = 0.0;
  double loop_end_s = 0.0;
  std::vector<double> busy_s;     // loop task time inside the window
  std::vector<double> idle_s;     // window length minus busy
  std::vector<double> compute_s;  // every RunTask, dispatch excluded
  double bubble_fraction = 0.0;
  std::vector<int64_t> persistent_bytes;
  std::vector<int64_t> peak_mem_bytes;
  std::vector<int> peak_stash_count;
  std::vector<int64_t> peak_stash_bytes;
  int num_transfers = 0;
  RematPolicy remat = RematPolicy::kNone;
  std::vector<TimelineEvent> timeline;
  // Per actor, per instruction.
  std::vector<std::vector<double>> instr_start_s;
  std::vector<std::vector<double>> instr_end_s;

  double loop_span_s() const { return loop_end_s - loop_start_s; }
};

// Requires a plan that passes CheckDeadlockFree. Throws ValidationError when
// the peak memory of an actor exceeds the capacity.
SimReport Simulate(const CommPlan& cp, const TaskGraph& tg, const CostModel& cm);

std::string SimReportToJson(const SimReport& r, bool include_timeline = true);

// Gantt chart, one row per actor and one rect per instruction with nonzero
// duration.
std::string RenderTimelineSvg(const SimReport& r);

struct MemoryRow {
  std::string schedule;
  int peak_stash_count = 0;
  int64_t peak_stash_bytes = 0;
  int64_t peak_mem_bytes = 0;
};

struct MemoryComparison {
  MemoryRow gpipe;
  MemoryRow one_f_one_b;
  double stash_reduction() const {
    return static_cast<double>(gpipe.peak_stash_count) / one_f_one_b.peak_stash_count;
  }
};

// Stash and memory peaks of actor 0 under GPipe and 1F1B.
MemoryComparison ComparePeakMemory(std::shared_ptr<const StagePartition> partition, int P, int M,
                                   CostModel cm = {});

struct RematRun {
  SimReport report;
  bool used_remat = false;
};

// Simulates with cm.remat; on a capacity error with remat off, retries with
// full rematerialization.
RematRun SimulateWithRematFallback(const CommPlan& cp, const TaskGraph& tg, CostModel cm);

struct RematOverhead {
  double step_without_s = 0.0;
  double step_with_s = 0.0;
  double ratio() const { return step_with_s / step_without_s; }
};

RematOverhead MeasureRematOverhead(std::shared_ptr<const StagePartition> partition,
                                   const Schedule& schedule, CostModel cm);

struct SweepGrid {
  ModelConfig model;  // yields are recomputed per point
  std::string schedule = "interleaved";
  std::vector<int> actors;
  std::vector<int> microbatches;
  std::vector<int> circular_repeats = {1};
  std::vector<int> microbatch_rows;  // empty keeps model.microbatch_rows
  std::vector<double> dispatch_overhead_s = {0.0};
  CostModel cost;
};

struct SweepRow {
  int P = 1;
  int M = 1;
  int V = 1;
  int mbs = 1;
  double dispatch_overhead_s = 0.0;
  bool ok = false;
  std::string note;
  double step_time_s = 0.0;
  double bubble_fraction = 0.0;
  int64_t peak_mem_bytes = 0;
};

// One row per grid point; points whose layer count does not split into P*V
// equal stages, or whose schedule is invalid, are kept with ok = false.
std::vector<SweepRow> Sweep(const SweepGrid& grid);

std::string SweepToCsv(const std::vector<SweepRow>& rows);
std::string SweepToJson(const std::vector<SweepRow>& rows);

}  // namespace mpmd

#endif  // MPMD_SIMULATOR_H_
