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

#include "mpmd/simulator.h"

#include <fmt/format.h>
#include <fmt/ranges.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <tuple>

#include "json_util.h"
#include "mpmd/errors.h"
#include "mpmd/plan.h"

namespace mpmd {

using internal::Json;

std::string_view RematPolicyName(RematPolicy p) {
  return p == RematPolicy::kNone ? "none" : "full";
}

RematPolicy ParseRematPolicy(std::string_view name) {
  if (name == "none") return RematPolicy::kNone;
  if (name == "full" || name == "full-per-stage") return RematPolicy::kFullPerStage;
  throw ValidationError(
      fmt::format("cost.remat_policy: unknown policy \"{}\" (expected none or full)", name));
}

double CostModel::rate(int actor) const {
  const size_t i = flops_per_second.size() == 1 ? 0 : static_cast<size_t>(actor);
  return flops_per_second.at(i) * intra_actor_speedup;
}

void CostModel::Validate(int num_actors) const {
  auto positive = [](double v) { return v > 0.0 && !std::isnan(v); };
  if (flops_per_second.size() != 1 && flops_per_second.size() != static_cast<size_t>(num_actors)) {
    throw ValidationError(fmt::format("cost.flops_per_second: expected 1 or {} entries, got {}",
                                      num_actors, flops_per_second.size()));
  }
  for (double f : flops_per_second) {
    if (!positive(f)) throw ValidationError("cost.flops_per_second: rates must be positive");
  }
  if (!positive(intra_actor_speedup)) {
    throw ValidationError("cost.intra_actor_speedup: must be positive");
  }
  if (!(link_latency_s >= 0.0)) throw ValidationError("cost.link_latency_s: must be non-negative");
  if (!positive(link_bytes_per_second)) {
    throw ValidationError("cost.link_bytes_per_second: must be positive");
  }
  if (!positive(mem_capacity_bytes)) {
    throw ValidationError("cost.mem_capacity_bytes: must be positive");
  }
  if (!(bwd_cost_factor >= 0.0)) throw ValidationError("cost.bwd_cost_factor: must be >= 0");
  if (!(dispatch_overhead_s >= 0.0)) {
    throw ValidationError("cost.dispatch_overhead_s: must be non-negative");
  }
  if (!(uniform_fwd_s >= 0.0) || !(uniform_bwd_s >= 0.0)) {
    throw ValidationError("cost.uniform_fwd_s/uniform_bwd_s: must be non-negative");
  }
}

double TaskDuration(const Task& t, const TaskGraph& tg, const CostModel& cm) {
  const bool remat = cm.remat == RematPolicy::kFullPerStage;
  if (cm.uniform_fwd_s > 0.0) {
    if (t.kind != TaskKind::kLoop) return 0.0;
    const double v = tg.schedule.circular_repeat();
    if (t.tid.ty == Direction::kFwd) return cm.uniform_fwd_s / v;
    return (cm.uniform_bwd_s + (remat ? cm.uniform_fwd_s : 0.0)) / v;
  }
  double flops = t.flops;
  if (t.kind == TaskKind::kLoop && t.tid.ty == Direction::kBwd) {
    const StageSummary& s = tg.partition->summaries[static_cast<size_t>(t.tid.stage)];
    if (cm.bwd_cost_factor > 0.0)
      flops = cm.bwd_cost_factor * s.fwd_flops + (t.flops - s.bwd_flops);
    if (remat) flops += s.fwd_flops;
  }
  return flops / cm.rate(t.actor);
}

namespace {

using Key = std::tuple<int, int, int>;  // (src, dst, seq)

struct Transfer {
  std::optional<double> send_at;
  std::optional<double> recv_at;
  std::optional<double> end;
  int64_t bytes = 0;
};

int64_t EffectiveBytes(const Buffer& b, const TaskGraph& tg, const CostModel& cm) {
  if (b.kind == BufferKind::kStash && cm.remat == RematPolicy::kFullPerStage) {
    return tg.partition->summaries[static_cast<size_t>(b.stage)].remat_stash_bytes;
  }
  return b.size_bytes;
}

std::string Category(const Instruction& ins, const TaskGraph& tg) {
  switch (ins.kind) {
    case InstrKind::kRunTask: {
      const Task& t = tg.task(ins.task);
      if (t.kind != TaskKind::kLoop) return "epilogue";
      return t.tid.ty == Direction::kFwd ? "fwd" : "bwd";
    }
    case InstrKind::kDelete:
    case InstrKind::kFlushPendingDeletes:
      return "memory";
    default:
      return "comm";
  }
}

}  // namespace

SimReport Simulate(const CommPlan& cp, const TaskGraph& tg, const CostModel& cm) {
  cm.Validate(cp.num_actors);
  const size_t P = cp.programs.size();
  SimReport r;
  r.num_actors = cp.num_actors;
  r.remat = cm.remat;
  r.num_transfers = cp.num_transfers();

  std::map<Key, Transfer> transfers;
  std::map<std::pair<int, int>, int> resolved;  // next unresolved seq per channel
  std::map<std::pair<int, int>, double> link_free;
  for (const auto& [key, list] : cp.channels) {
    for (size_t k = 0; k < list.size(); ++k) {
      transfers[{key.first, key.second, static_cast<int>(k)}].bytes = tg.buffer(list[k]).size_bytes;
    }
  }
  auto resolve = [&](int src, int dst) {
    int& next = resolved[{src, dst}];
    for (;;) {
      auto it = transfers.find({src, dst, next});
      if (it == transfers.end() || !it->second.send_at || !it->second.recv_at) return;
      Transfer& x = it->second;
      const double start = std::max({*x.send_at, *x.recv_at, link_free[{src, dst}]});
      const double wire = std::isinf(cm.link_bytes_per_second)
                              ? 0.0
                              : static_cast<double>(x.bytes) / cm.link_bytes_per_second;
      x.end = start + cm.link_latency_s + wire;
      link_free[{src, dst}] = *x.end;
      ++next;
    }
  };

  std::vector<double> clock(P, 0.0);
  std::vector<size_t> pc(P, 0);
  auto& at = r.instr_start_s;
  at.resize(P);
  r.instr_end_s.resize(P);
  for (size_t a = 0; a < P; ++a) {
    at[a].assign(cp.programs[a].instrs.size(), 0.0);
    r.instr_end_s[a].assign(cp.programs[a].instrs.size(), 0.0);
  }

  bool progress = true;
  while (progress) {
    progress = false;
    for (size_t a = 0; a < P; ++a) {
      const int ai = static_cast<int>(a);
      const auto& instrs = cp.programs[a].instrs;
      while (pc[a] < instrs.size()) {
        const Instruction& ins = instrs[pc[a]];
        const double t0 = clock[a];
        double t1 = t0;
        if (ins.kind == InstrKind::kSendWait || ins.kind == InstrKind::kRecvWait) {
          const Key k = ins.kind == InstrKind::kSendWait ? Key{ai, ins.peer, ins.seq}
                                                         : Key{ins.peer, ai, ins.seq};
          auto it = transfers.find(k);
          if (it == transfers.end()) {
            throw DeadlockError(
                fmt::format("actor {} instruction {} waits on unknown transfer", a, pc[a]));
          }
          if (!it->second.end) break;
          t1 = std::max(t0, *it->second.end);
        } else if (ins.kind == InstrKind::kSendStart) {
          transfers[{ai, ins.peer, ins.seq}].send_at = t0;
          resolve(ai, ins.peer);
        } else if (ins.kind == InstrKind::kRecvStart) {
          transfers[{ins.peer, ai, ins.seq}].recv_at = t0;
          resolve(ins.peer, ai);
        } else if (ins.kind == InstrKind::kRunTask) {
          t1 = t0 + cm.dispatch_overhead_s + TaskDuration(tg.task(ins.task), tg, cm);
        }
        at[a][pc[a]] = t0;
        r.instr_end_s[a][pc[a]] = t1;
        if (t1 > t0 || ins.kind == InstrKind::kRunTask) {
          TimelineEvent e;
          e.actor = ai;
          e.index = pc[a];
          e.kind = ins.kind;
          e.category = Category(ins, tg);
          e.label = InstructionToString(ins, tg);
          e.start = t0;
          e.end = t1;
          r.timeline.push_back(std::move(e));
        }
        clock[a] = t1;
        ++pc[a];
        progress = true;
      }
    }
  }
  std::vector<std::string> stuck;
  for (size_t a = 0; a < P; ++a) {
    if (pc[a] < cp.programs[a].instrs.size()) {
      stuck.push_back(fmt::format("actor {} at instruction {} {}", a, pc[a],
                                  InstructionToString(cp.programs[a].instrs[pc[a]], tg)));
    }
  }
  if (!stuck.empty()) {
    throw DeadlockError(fmt::format("simulation stalled: {}", fmt::join(stuck, "; ")));
  }

  // Timing summary.
  r.busy_s.assign(P, 0.0);
  r.compute_s.assign(P, 0.0);
  r.loop_start_s = std::numeric_limits<double>::infinity();
  r.loop_end_s = 0.0;
  for (const TimelineEvent& e : r.timeline) {
    r.step_time_s = std::max(r.step_time_s, e.end);
    if (e.kind != InstrKind::kRunTask) continue;
    const Task& t = tg.task(cp.programs[static_cast<size_t>(e.actor)].instrs[e.index].task);
    r.compute_s[static_cast<size_t>(e.actor)] += TaskDuration(t, tg, cm);
    if (t.kind != TaskKind::kLoop) continue;
    r.loop_start_s = std::min(r.loop_start_s, e.start);
    r.loop_end_s = std::max(r.loop_end_s, e.end);
    r.busy_s[static_cast<size_t>(e.actor)] += e.end - e.start;
  }
  if (std::isinf(r.loop_start_s)) r.loop_start_s = 0.0;
  r.idle_s.assign(P, 0.0);
  double idle = 0.0;
  for (size_t a = 0; a < P; ++a) {
    r.idle_s[a] = std::max(0.0, r.loop_span_s() - r.busy_s[a]);
    idle += r.idle_s[a];
  }
  r.bubble_fraction =
      r.loop_span_s() > 0.0 ? idle / (static_cast<double>(P) * r.loop_span_s()) : 0.0;

  // Memory: replay each program in order with the computed times.
  r.persistent_bytes.assign(P, 0);
  r.peak_mem_bytes.assign(P, 0);
  r.peak_stash_count.assign(P, 0);
  r.peak_stash_bytes.assign(P, 0);
  std::map<std::pair<int, BufferId>, std::vector<Key>> sends_of;
  for (size_t a = 0; a < P; ++a) {
    for (const Instruction& ins : cp.programs[a].instrs) {
      if (ins.kind == InstrKind::kSendStart) {
        sends_of[{static_cast<int>(a), ins.buffer}].push_back(
            {static_cast<int>(a), ins.peer, ins.seq});
      }
    }
  }
  for (size_t a = 0; a < P; ++a) {
    const int ai = static_cast<int>(a);
    std::map<BufferId, int64_t> live;
    std::set<BufferId> pending;
    int64_t bytes = 0, stash_bytes = 0;
    int stash = 0;
    auto alloc = [&](BufferId id) {
      const Buffer& b = tg.buffer(id);
      if (live.contains(id)) return;
      const int64_t n = EffectiveBytes(b, tg, cm);
      live[id] = n;
      bytes += n;
      if (b.kind == BufferKind::kStash) {
        ++stash;
        stash_bytes += n;
      }
      r.peak_mem_bytes[a] = std::max(r.peak_mem_bytes[a], bytes);
      r.peak_stash_count[a] = std::max(r.peak_stash_count[a], stash);
      r.peak_stash_bytes[a] = std::max(r.peak_stash_bytes[a], stash_bytes);
    };
    auto free = [&](BufferId id) {
      auto it = live.find(id);
      if (it == live.end()) return;
      bytes -= it->second;
      if (tg.buffer(id).kind == BufferKind::kStash) {
        --stash;
        stash_bytes -= it->second;
      }
      live.erase(it);
    };
    auto delivered_by = [&](BufferId id, double t) {
      auto it = sends_of.find({ai, id});
      if (it == sends_of.end()) return true;
      return std::all_of(it->second.begin(), it->second.end(),
                         [&](const Key& k) { return *transfers.at(k).end <= t; });
    };
    for (const Buffer& b : tg.buffers) {
      if (b.preloaded() && b.actor == ai) {
        alloc(b.id);
        if (b.persistent()) r.persistent_bytes[a] += b.size_bytes;
      }
    }
    const auto& instrs = cp.programs[a].instrs;
    for (size_t i = 0; i < instrs.size(); ++i) {
      const Instruction& ins = instrs[i];
      switch (ins.kind) {
        case InstrKind::kRunTask:
          for (BufferId b : tg.task(ins.task).produces) alloc(b);
          break;
        case InstrKind::kRecvStart:
          alloc(ins.buffer);
          break;
        case InstrKind::kDelete:
          if (delivered_by(ins.buffer, at[a][i])) {
            free(ins.buffer);
          } else {
            pending.insert(ins.buffer);
          }
          break;
        case InstrKind::kFlushPendingDeletes:
          for (auto it = pending.begin(); it != pending.end();) {
            if (delivered_by(*it, at[a][i])) {
              free(*it);
              it = pending.erase(it);
            } else {
              ++it;
            }
          }
          break;
        default:
          break;
      }
    }
    if (static_cast<double>(r.peak_mem_bytes[a]) > cm.mem_capacity_bytes) {
      throw MemoryCapacityError(fmt::format(
          "actor {} peak memory {} bytes exceeds cost.mem_capacity_bytes {} with remat_policy={}{}",
          a, r.peak_mem_bytes[a], cm.mem_capacity_bytes, RematPolicyName(cm.remat),
          cm.remat == RematPolicy::kNone ? "; enable remat_policy=full" : ""));
    }
  }
  return r;
}

std::string SimReportToJson(const SimReport& r, bool include_timeline) {
  Json j = {{"version", 1},
            {"num_actors", r.num_actors},
            {"step_time_s", r.step_time_s},
            {"loop_start_s", r.loop_start_s},
            {"loop_end_s", r.loop_end_s},
            {"bubble_fraction", r.bubble_fraction},
            {"busy_s", r.busy_s},
            {"idle_s", r.idle_s},
            {"compute_s", r.compute_s},
            {"persistent_bytes", r.persistent_bytes},
            {"peak_mem_bytes", r.peak_mem_bytes},
            {"peak_stash_count", r.peak_stash_count},
            {"peak_stash_bytes", r.peak_stash_bytes},
            {"num_transfers", r.num_transfers},
            {"remat_policy", RematPolicyName(r.remat)}};
  if (include_timeline) {
    Json events = Json::array();
    for (const TimelineEvent& e : r.timeline) {
      events.push_back({{"actor", e.actor},
                        {"index", e.index},
                        {"op", InstrKindName(e.kind)},
                        {"category", e.category},
                        {"label", e.label},
                        {"start", e.start},
                        {"end", e.end}});
    }
    j["timeline"] = std::move(events);
  }
  return internal::Dump(j);
}

namespace {

std::string_view Color(std::string_view category) {
  if (category == "fwd") return "#4c78a8";
  if (category == "bwd") return "#f58518";
  if (category == "epilogue") return "#54a24b";
  return "#9d9d9d";
}

std::string Escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<':
        out += "&lt;";
        break;
      case '>':
        out += "&gt;";
        break;
      case '&':
        out += "&amp;";
        break;
      case '"':
        out += "&quot;";
        break;
      default:
        out += c;
    }
  }
  return out;
}

}  // namespace

std::string RenderTimelineSvg(const SimReport& r) {
  constexpr double kWidth = 1200.0, kLeft = 60.0, kRow = 28.0, kGap = 6.0;
  const double scale = r.step_time_s > 0.0 ? kWidth / r.step_time_s : 0.0;
  const double height = r.num_actors * (kRow + kGap) + kGap;
  std::string out = fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{:.0f}\" height=\"{:.0f}\" "
      "font-family=\"monospace\" font-size=\"11\">\n",
      kLeft + kWidth + 10.0, height);
  for (int a = 0; a < r.num_actors; ++a) {
    const double y = kGap + a * (kRow + kGap);
    out += fmt::format("<g class=\"actor\" id=\"actor{}\">\n", a);
    out += fmt::format("<text x=\"4\" y=\"{:.1f}\">actor {}</text>\n", y + kRow * 0.65, a);
    out += fmt::format(
        "<rect class=\"idle\" x=\"{:.0f}\" y=\"{:.1f}\" width=\"{:.0f}\" height=\"{:.0f}\" "
        "fill=\"#f2f2f2\"/>\n",
        kLeft, y, kWidth, kRow);
    for (const TimelineEvent& e : r.timeline) {
      if (e.actor != a || !(e.end > e.start)) continue;
      out += fmt::format(
          "<rect class=\"instr {}\" x=\"{:.3f}\" y=\"{:.1f}\" width=\"{:.3f}\" height=\"{:.0f}\" "
          "fill=\"{}\" stroke=\"#ffffff\" stroke-width=\"0.5\"><title>{}</title></rect>\n",
          e.category, kLeft + e.start * scale, y, (e.end - e.start) * scale, kRow,
          Color(e.category), Escape(e.label));
    }
    out += "</g>\n";
  }
  out += "</svg>\n";
  return out;
}

MemoryComparison ComparePeakMemory(std::shared_ptr<const StagePartition> partition, int P, int M,
                                   CostModel cm) {
  MemoryComparison out;
  for (const char* name : {"gpipe", "1f1b"}) {
    Plan plan = BuildPlan(partition, MakeSchedule(name, P, M, 1));
    const SimReport r = Simulate(plan.comms, plan.graph, cm);
    MemoryRow& row = std::string_view(name) == "gpipe" ? out.gpipe : out.one_f_one_b;
    row.schedule = name;
    row.peak_stash_count = r.peak_stash_count[0];
    row.peak_stash_bytes = r.peak_stash_bytes[0];
    row.peak_mem_bytes = r.peak_mem_bytes[0];
  }
  return out;
}

RematRun SimulateWithRematFallback(const CommPlan& cp, const TaskGraph& tg, CostModel cm) {
  try {
    return {Simulate(cp, tg, cm), cm.remat != RematPolicy::kNone};
  } catch (const MemoryCapacityError&) {
    if (cm.remat != RematPolicy::kNone) throw;
  }
  cm.remat = RematPolicy::kFullPerStage;
  return {Simulate(cp, tg, cm), true};
}

RematOverhead MeasureRematOverhead(std::shared_ptr<const StagePartition> partition,
                                   const Schedule& schedule, CostModel cm) {
  Plan plan = BuildPlan(std::move(partition), schedule);
  RematOverhead out;
  cm.remat = RematPolicy::kNone;
  out.step_without_s = Simulate(plan.comms, plan.graph, cm).step_time_s;
  cm.remat = RematPolicy::kFullPerStage;
  out.step_with_s = Simulate(plan.comms, plan.graph, cm).step_time_s;
  return out;
}

std::vector<SweepRow> Sweep(const SweepGrid& grid) {
  std::vector<SweepRow> rows;
  std::vector<int> mbs_grid = grid.microbatch_rows;
  if (mbs_grid.empty()) mbs_grid.push_back(grid.model.microbatch_rows);
  for (int P : grid.actors) {
    for (int M : grid.microbatches) {
      for (int V : grid.circular_repeats) {
        for (int mbs : mbs_grid) {
          for (double d : grid.dispatch_overhead_s) {
            SweepRow row;
            row.P = P;
            row.M = M;
            row.V = V;
            row.mbs = mbs;
            row.dispatch_overhead_s = d;
            const int S = P * V;
            try {
              if (P < 1 || M < 1 || V < 1 || mbs < 1) {
                throw ValidationError("P, M, V and microbatch rows must be positive");
              }
              if (grid.model.layers % S != 0) {
                throw ValidationError(fmt::format("{} layers do not split into {} equal stages",
                                                  grid.model.layers, S));
              }
              ModelConfig model = grid.model;
              model.microbatch_rows = mbs;
              model.yield_every = 0;
              model.yield_after.clear();
              for (int k = 1; k < S; ++k) model.yield_after.push_back(k * model.layers / S);
              Plan plan = BuildPlan(PartitionModel(model), MakeSchedule(grid.schedule, P, M, V));
              CostModel cm = grid.cost;
              cm.dispatch_overhead_s = d;
              const SimReport r = Simulate(plan.comms, plan.graph, cm);
              row.ok = true;
              row.step_time_s = r.step_time_s;
              row.bubble_fraction = r.bubble_fraction;
              row.peak_mem_bytes =
                  *std::max_element(r.peak_mem_bytes.begin(), r.peak_mem_bytes.end());
            } catch (const Error& e) {
              row.note = e.what();
            }
            rows.push_back(std::move(row));
          }
        }
      }
    }
  }
  return rows;
}

std::string SweepToCsv(const std::vector<SweepRow>& rows) {
  std::string out =
      "P,M,V,mbs,dispatch_overhead_s,ok,step_time_s,bubble_fraction,peak_mem_bytes,note\n";
  for (const SweepRow& r : rows) {
    std::string note = r.note;
    std::replace(note.begin(), note.end(), '"', '\'');
    out += fmt::format("{},{},{},{},{},{},{},{},{},\"{}\"\n", r.P, r.M, r.V, r.mbs,
                       r.dispatch_overhead_s, r.ok ? 1 : 0, r.step_time_s, r.bubble_fraction,
                       r.peak_mem_bytes, note);
  }
  return out;
}

std::string SweepToJson(const std::vector<SweepRow>& rows) {
  Json arr = Json::array();
  for (const SweepRow& r : rows) {
    Json j = {{"P", r.P},
              {"M", r.M},
              {"V", r.V},
              {"mbs", r.mbs},
              {"dispatch_overhead_s", r.dispatch_overhead_s},
              {"ok", r.ok}};
    if (r.ok) {
      j["step_time_s"] = r.step_time_s;
      j["bubble_fraction"] = r.bubble_fraction;
      j["peak_mem_bytes"] = r.peak_mem_bytes;
    } else {
      j["note"] = r.note;
    }
    arr.push_back(std::move(j));
  }
  return internal::Dump({{"version", 1}, {"rows", std::move(arr)}});
}

}  // namespace mpmd
