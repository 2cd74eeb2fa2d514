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

#include "mpmd/driver.h"

#include <fmt/format.h>

#include <algorithm>
#include <filesystem>

#include "json_util.h"
#include "mpmd/errors.h"

namespace mpmd {
namespace {

using internal::Json;

constexpr double kVerifyTolerance = 1e-12;
constexpr int64_t kVerifyElementLimit = 1000000;

class Outputs {
 public:
  explicit Outputs(const std::string& dir) : dir_(dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir_, ec);
    if (ec) {
      throw ValidationError(
          fmt::format("outputs.dir: cannot create '{}': {}", dir_.string(), ec.message()));
    }
  }

  void Write(const std::string& name, std::string_view contents) {
    const std::string path = (dir_ / name).string();
    internal::WriteFile(path, contents);
    files_.push_back(path);
  }

  std::vector<std::string> take() { return std::move(files_); }

 private:
  std::filesystem::path dir_;
  std::vector<std::string> files_;
};

std::string PlanSummary(const Plan& plan) {
  const TaskGraph& tg = plan.graph;
  const CommPlan& cp = plan.comms;
  std::string s = fmt::format(
      "schedule {}: P={} M={} S={}\ntasks {}, buffers {}, channel messages {}, driver messages "
      "{}\n",
      tg.schedule.name, tg.num_actors, tg.num_microbatches, tg.num_stages, tg.tasks.size(),
      tg.buffers.size(), cp.num_transfers(), cp.driver_messages());
  for (const auto& [pair, bufs] : cp.channels) {
    s += fmt::format("  channel {}->{}: {} messages\n", pair.first, pair.second, bufs.size());
  }
  return s;
}

std::string Join(const std::vector<double>& v) {
  std::string s;
  for (size_t i = 0; i < v.size(); ++i) s += fmt::format("{}{:.6g}", i ? " " : "", v[i]);
  return s;
}

std::string SimSummary(const SimReport& r) {
  int64_t peak = 0;
  for (int64_t b : r.peak_mem_bytes) peak = std::max(peak, b);
  return fmt::format("remat {}: step time {:.9g} s, bubble fraction {:.9g}, peak memory {} B\n",
                     RematPolicyName(r.remat), r.step_time_s, r.bubble_fraction, peak);
}

int64_t VerifyElements(const TensorMap& params, const TensorMap& batch) {
  int64_t n = 0;
  for (const auto& [v, t] : params) n += t.size();
  for (const auto& [v, t] : batch) n += t.size();
  return n;
}

Json StatsJson(const RunStats& s) {
  Json grads = Json::object();
  for (const auto& [v, n] : s.param_grad_messages) grads[fmt::format("v{}", v.value())] = n;
  return {{"driver_messages", s.driver_messages},
          {"channel_messages", s.channel_messages},
          {"param_grad_messages", grads},
          {"peak_live_buffers", s.peak_live_buffers},
          {"peak_live_stash", s.peak_live_stash}};
}

}  // namespace

int ExitCodeFor(const std::exception& e) {
  if (dynamic_cast<const NumericalMismatch*>(&e)) return 3;
  if (dynamic_cast<const DeadlockError*>(&e) || dynamic_cast<const LivenessFault*>(&e)) return 2;
  return 1;
}

CommandResult CmdPlan(const RunConfig& config) {
  const Plan plan = PlanFromConfig(config);
  Outputs out(config.out_dir);
  out.Write("schedule.json", ScheduleToJson(plan.graph.schedule));
  out.Write("taskgraph.json", TaskGraphToJson(plan.graph));
  out.Write("commplan.json", CommPlanToJson(plan.comms, plan.graph));
  return {0, PlanSummary(plan), out.take()};
}

CommandResult CmdSimulate(const RunConfig& config) {
  const Plan plan = PlanFromConfig(config);
  Outputs out(config.out_dir);
  const SimReport r = Simulate(plan.comms, plan.graph, config.cost);
  out.Write("simreport.json", SimReportToJson(r));
  out.Write("timeline.svg", RenderTimelineSvg(r));
  std::string summary = PlanSummary(plan) + SimSummary(r);
  summary +=
      fmt::format("busy per actor: {}\nidle per actor: {}\n", Join(r.busy_s), Join(r.idle_s));
  if (config.remat_compare) {
    CostModel other = config.cost;
    other.remat =
        config.cost.remat == RematPolicy::kNone ? RematPolicy::kFullPerStage : RematPolicy::kNone;
    const SimReport o = Simulate(plan.comms, plan.graph, other);
    const SimReport& without = r.remat == RematPolicy::kNone ? r : o;
    const SimReport& with = r.remat == RematPolicy::kNone ? o : r;
    out.Write("simreport_remat_none.json", SimReportToJson(without, false));
    out.Write("simreport_remat_full.json", SimReportToJson(with, false));
    const double ratio = with.step_time_s / without.step_time_s;
    Json j = {{"step_time_none_s", without.step_time_s},
              {"step_time_full_s", with.step_time_s},
              {"ratio", ratio}};
    out.Write("remat_compare.json", internal::Dump(j));
    summary += SimSummary(o) + fmt::format("remat step time ratio {:.12g}\n", ratio);
  }
  return {0, summary, out.take()};
}

CommandResult CmdVerify(const RunConfig& config) {
  Plan plan = PlanFromConfig(config);
  const StagedGraph& graph = plan.partition->graph;
  const TensorMap params = InitParams(graph, config.seed);
  const TensorMap batch = MakeBatch(graph, plan.graph.num_microbatches, config.seed + 1);
  const int64_t elements = VerifyElements(params, batch);
  if (elements > kVerifyElementLimit) {
    throw ValidationError(
        fmt::format("model: {} parameter and input elements exceed the verify limit of {}",
                    elements, kVerifyElementLimit));
  }

  CommPlan cp = plan.comms;
  if (config.drop_recv_actor >= 0) {
    if (config.drop_recv_actor >= cp.num_actors) {
      throw ValidationError(
          fmt::format("verify.drop_recv_actor: actor {} does not exist", config.drop_recv_actor));
    }
    auto& instrs = cp.programs[static_cast<size_t>(config.drop_recv_actor)].instrs;
    auto it = std::find_if(instrs.begin(), instrs.end(),
                           [](const Instruction& i) { return i.kind == InstrKind::kRecvWait; });
    if (it == instrs.end()) {
      throw ValidationError(
          fmt::format("verify.drop_recv_actor: actor {} receives nothing", config.drop_recv_actor));
    }
    instrs.erase(it);
  } else {
    const ReplayReport replay = SymbolicReplay(cp, plan.graph);
    if (!replay.ok()) throw LivenessFault("symbolic replay: " + replay.violations.front());
  }

  const StepResult expected =
      RunReference(graph, params, batch, plan.graph.num_microbatches, config.optimizer);
  ExecutorOptions options;
  options.optimizer = config.optimizer;
  options.timeout_s = config.timeout_s;
  options.max_delay_us = config.max_delay_us;
  options.delay_seed = config.seed;
  const PipelinedRun run = RunPipelined(cp, plan.graph, params, batch, options);
  const Comparison cmp = Compare(run.result, expected);
  const bool ok = cmp.within(kVerifyTolerance);

  Outputs out(config.out_dir);
  Json j = {{"ok", ok},
            {"max_rel_error", cmp.max_rel_error},
            {"worst", cmp.worst},
            {"tolerance", kVerifyTolerance},
            {"losses", run.result.losses},
            {"stats", StatsJson(run.stats)}};
  out.Write("verify.json", internal::Dump(j));

  std::string summary = PlanSummary(plan);
  summary +=
      fmt::format("max relative error {:.3e} ({}), tolerance {:.0e}: {}\n", cmp.max_rel_error,
                  cmp.worst.empty() ? "-" : cmp.worst, kVerifyTolerance, ok ? "ok" : "MISMATCH");
  summary += fmt::format("driver messages {}, channel messages {}\n", run.stats.driver_messages,
                         run.stats.channel_messages);
  for (const auto& [v, n] : run.stats.param_grad_messages) {
    summary += fmt::format("  gradient messages for param v{}: {}\n", v.value(), n);
  }
  return {ok ? 0 : 3, summary, out.take()};
}

CommandResult CmdSweep(const RunConfig& config) {
  SweepGrid grid = config.sweep;
  grid.model = config.model;
  grid.cost = config.cost;
  const std::vector<SweepRow> rows = Sweep(grid);
  Outputs out(config.out_dir);
  out.Write("sweep.csv", SweepToCsv(rows));
  out.Write("sweep.json", SweepToJson(rows));
  int ok = 0;
  for (const SweepRow& r : rows) ok += r.ok ? 1 : 0;
  std::string summary = fmt::format("{} grid points, {} simulated\n", rows.size(), ok);
  for (const SweepRow& r : rows) {
    if (r.ok) {
      summary +=
          fmt::format("  P={} M={} V={} mbs={} d={:g}: step {:.6g} s, bubble {:.6g}\n", r.P, r.M,
                      r.V, r.mbs, r.dispatch_overhead_s, r.step_time_s, r.bubble_fraction);
    } else {
      summary += fmt::format("  P={} M={} V={} mbs={} d={:g}: skipped: {}\n", r.P, r.M, r.V, r.mbs,
                             r.dispatch_overhead_s, r.note);
    }
  }
  return {0, summary, out.take()};
}

CommandResult RunCommand(std::string_view command, const RunConfig& config) {
  try {
    if (command == "plan") return CmdPlan(config);
    if (command == "simulate") return CmdSimulate(config);
    if (command == "verify") return CmdVerify(config);
    if (command == "sweep") return CmdSweep(config);
    throw ValidationError(
        fmt::format("unknown command '{}'; expected plan, simulate, verify or sweep", command));
  } catch (const std::exception& e) {
    return {ExitCodeFor(e), fmt::format("error: {}\n", e.what()), {}};
  }
}

}  // namespace mpmd
