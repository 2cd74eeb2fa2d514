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

#include "mpmd/schedules.h"

#include <fmt/format.h>

#include <algorithm>
#include <map>
#include <set>

#include "json_util.h"
#include "mpmd/errors.h"

namespace mpmd {

using internal::Json;

std::string_view DirectionName(Direction d) { return d == Direction::kFwd ? "fwd" : "bwd"; }

std::string TaskId::ToString() const {
  return fmt::format("{}({},{})", ty == Direction::kFwd ? 'f' : 'b', i, stage);
}

namespace {

void CheckShape(int P, int M) {
  if (P < 1) throw ValidationError(fmt::format("parallel.actors: must be positive, got {}", P));
  if (M < 1) {
    throw ValidationError(fmt::format("parallel.microbatches: must be positive, got {}", M));
  }
}

Schedule Empty(std::string name, int P, int M, int S) {
  Schedule s;
  s.name = std::move(name);
  s.num_actors = P;
  s.num_microbatches = M;
  s.num_stages = S;
  s.per_actor.assign(static_cast<size_t>(P), {});
  return s;
}

}  // namespace

Schedule GPipe(int P, int M) {
  CheckShape(P, M);
  Schedule s = Empty("gpipe", P, M, P);
  for (int a = 0; a < P; ++a) {
    auto& list = s.per_actor[static_cast<size_t>(a)];
    for (int i = 0; i < M; ++i) list.push_back(Fwd(i, a));
    for (int i = 0; i < M; ++i) list.push_back(Bwd(i, a));
  }
  return s;
}

Schedule OneFOneB(int P, int M) {
  CheckShape(P, M);
  Schedule s = Empty("1f1b", P, M, P);
  for (int a = 0; a < P; ++a) {
    auto& list = s.per_actor[static_cast<size_t>(a)];
    const int warmup = std::min(P - 1 - a, M);
    for (int i = 0; i < warmup; ++i) list.push_back(Fwd(i, a));
    for (int k = 0; k + warmup < M; ++k) {
      list.push_back(Fwd(k + warmup, a));
      list.push_back(Bwd(k, a));
    }
    for (int k = M - warmup; k < M; ++k) list.push_back(Bwd(k, a));
  }
  return s;
}

Schedule Interleaved1F1B(int P, int M, int V) {
  CheckShape(P, M);
  if (V < 1) {
    throw ValidationError(fmt::format("parallel.circular_repeat: must be positive, got {}", V));
  }
  if (V == 1) {
    Schedule s = OneFOneB(P, M);
    s.name = "interleaved";
    return s;
  }
  if (M % P != 0) {
    throw ValidationError(
        fmt::format("parallel.microbatches: M must be divisible by P for interleaved schedules "
                    "(M={}, P={})",
                    M, P));
  }
  Schedule s = Empty("interleaved", P, M, P * V);
  const int total = M * V;
  const int group = P * V;
  auto chunk_task = [&](int k, int a, bool forward) {
    const int in_group = k % group;
    int chunk = in_group / P;
    if (!forward) chunk = V - 1 - chunk;
    const int mb = (k / group) * P + in_group % P;
    const int stage = chunk * P + a;
    return forward ? Fwd(mb, stage) : Bwd(mb, stage);
  };
  for (int a = 0; a < P; ++a) {
    auto& list = s.per_actor[static_cast<size_t>(a)];
    const int warmup = std::min(total, (P - a - 1) * 2 + (V - 1) * P);
    for (int k = 0; k < warmup; ++k) list.push_back(chunk_task(k, a, true));
    for (int k = 0; k + warmup < total; ++k) {
      list.push_back(chunk_task(k + warmup, a, true));
      list.push_back(chunk_task(k, a, false));
    }
    for (int k = total - warmup; k < total; ++k) list.push_back(chunk_task(k, a, false));
  }
  return s;
}

Schedule MakeSchedule(std::string_view name, int P, int M, int V) {
  if (name != "interleaved" && V != 1) {
    throw ValidationError(
        fmt::format("parallel.circular_repeat: {} requires circular_repeat = 1, got {}", name, V));
  }
  if (name == "gpipe") return GPipe(P, M);
  if (name == "1f1b") return OneFOneB(P, M);
  if (name == "interleaved") return Interleaved1F1B(P, M, V);
  throw ValidationError(fmt::format(
      "parallel.schedule: unknown schedule '{}' (expected gpipe, 1f1b or interleaved)", name));
}

std::string ValidationReport::ToString() const {
  if (ok()) return "valid";
  std::string out;
  for (const Violation& v : violations) {
    if (!out.empty()) out += "; ";
    out += v.kind + ": " + v.detail;
  }
  return out;
}

ValidationReport Validate(const Schedule& s) {
  ValidationReport r;
  auto add = [&](std::string kind, std::string detail) {
    r.violations.push_back({std::move(kind), std::move(detail)});
  };
  const int P = s.num_actors, M = s.num_microbatches, S = s.num_stages;
  if (P < 1 || M < 1 || S < 1 || S % P != 0 || static_cast<int>(s.per_actor.size()) != P) {
    add("actor count mismatch",
        fmt::format("P={} M={} S={} with {} actor lists; S must be a positive multiple of P", P, M,
                    S, s.per_actor.size()));
    return r;
  }

  std::map<TaskId, int> where;
  for (int a = 0; a < P; ++a) {
    for (const TaskId& t : s.per_actor[static_cast<size_t>(a)]) {
      if (t.i < 0 || t.i >= M || t.stage < 0 || t.stage >= S) {
        add("bounds", fmt::format("{} on actor {} outside M={} S={}", t.ToString(), a, M, S));
        continue;
      }
      auto [it, inserted] = where.emplace(t, a);
      if (!inserted) {
        add("task appears twice",
            fmt::format("{} on actors {} and {}", t.ToString(), it->second, a));
      }
    }
  }
  for (int i = 0; i < M; ++i) {
    for (int st = 0; st < S; ++st) {
      for (TaskId t : {Fwd(i, st), Bwd(i, st)}) {
        if (!where.contains(t)) add("coverage", fmt::format("{} is missing", t.ToString()));
      }
    }
  }
  for (const auto& [t, a] : where) {
    if (t.ty == Direction::kBwd) {
      auto f = where.find(Fwd(t.i, t.stage));
      if (f != where.end() && f->second != a) {
        add("fwd/bwd co-location", fmt::format("{} on actor {} but {} on actor {}", t.ToString(), a,
                                               Fwd(t.i, t.stage).ToString(), f->second));
        continue;
      }
    }
    if (a != s.stage_to_actor(t.stage)) {
      add("placement", fmt::format("{} on actor {}, expected actor {}", t.ToString(), a,
                                   s.stage_to_actor(t.stage)));
    }
  }
  if (!r.ok()) return r;

  // Greedy Kahn over per-actor heads; a ready head is always safe to take.
  std::set<TaskId> done;
  auto deps_met = [&](const TaskId& t, TaskId* missing) {
    std::vector<TaskId> deps;
    if (t.ty == Direction::kFwd) {
      if (t.stage > 0) deps.push_back(Fwd(t.i, t.stage - 1));
    } else {
      deps.push_back(Fwd(t.i, t.stage));
      if (t.stage + 1 < S) deps.push_back(Bwd(t.i, t.stage + 1));
    }
    for (const TaskId& d : deps) {
      if (!done.contains(d)) {
        *missing = d;
        return false;
      }
    }
    return true;
  };
  std::vector<size_t> head(static_cast<size_t>(P), 0);
  const size_t total = static_cast<size_t>(s.num_tasks());
  r.order.reserve(total);
  while (r.order.size() < total) {
    bool progressed = false;
    for (int a = 0; a < P && !progressed; ++a) {
      const auto& list = s.per_actor[static_cast<size_t>(a)];
      size_t& h = head[static_cast<size_t>(a)];
      TaskId missing;
      if (h < list.size() && deps_met(list[h], &missing)) {
        done.insert(list[h]);
        r.order.push_back(list[h]);
        ++h;
        progressed = true;
      }
    }
    if (progressed) continue;
    std::string chain;
    for (int a = 0; a < P; ++a) {
      const auto& list = s.per_actor[static_cast<size_t>(a)];
      const size_t h = head[static_cast<size_t>(a)];
      if (h >= list.size()) continue;
      TaskId missing;
      deps_met(list[h], &missing);
      if (!chain.empty()) chain += ", ";
      chain += fmt::format("actor {} blocked at {} waiting for {}", a, list[h].ToString(),
                           missing.ToString());
    }
    add("dependency cycle", chain);
    r.order.clear();
    break;
  }
  return r;
}

void ValidateOrThrow(const Schedule& s) {
  ValidationReport r = Validate(s);
  if (!r.ok()) throw ValidationError("invalid schedule: " + r.ToString());
}

std::string ScheduleToJson(const Schedule& s) {
  Json actors = Json::array();
  for (const auto& list : s.per_actor) {
    Json tasks = Json::array();
    for (const TaskId& t : list) {
      tasks.push_back({{"i", t.i}, {"ty", DirectionName(t.ty)}, {"stage", t.stage}});
    }
    actors.push_back(std::move(tasks));
  }
  return internal::Dump({{"version", 1}, {"actors", std::move(actors)}});
}

namespace {

int IntField(const Json& obj, const char* key, const std::string& path) {
  auto it = obj.find(key);
  if (it == obj.end()) throw ValidationError(fmt::format("{}.{}: missing", path, key));
  if (!it->is_number_integer()) {
    throw ValidationError(fmt::format("{}.{}: expected an integer", path, key));
  }
  return it->get<int>();
}

}  // namespace

Schedule ScheduleFromJson(std::string_view text, std::string_view origin) {
  const Json j = internal::ParseJson(text, origin);
  const std::string o(origin);
  if (!j.is_object()) throw ValidationError(o + ": expected a JSON object");
  if (auto v = j.find("version"); v != j.end() && *v != 1) {
    throw ValidationError(
        fmt::format("{}: version: unsupported schedule version {}", o, v->dump()));
  }
  auto actors = j.find("actors");
  if (actors == j.end() || !actors->is_array()) {
    throw ValidationError(o + ": actors: expected a list of per-actor task lists");
  }
  if (actors->empty()) {
    throw ValidationError(o + ": actors: actor count mismatch, the actor list is empty");
  }
  Schedule s;
  s.name = "file";
  s.num_actors = static_cast<int>(actors->size());
  int max_stage = -1, max_i = -1;
  for (size_t a = 0; a < actors->size(); ++a) {
    const Json& list = (*actors)[a];
    const std::string apath = fmt::format("{}: actors[{}]", o, a);
    if (!list.is_array()) throw ValidationError(apath + ": expected a list of tasks");
    std::vector<TaskId> tasks;
    for (size_t k = 0; k < list.size(); ++k) {
      const Json& t = list[k];
      const std::string path = fmt::format("{}[{}]", apath, k);
      if (!t.is_object()) throw ValidationError(path + ": expected an object");
      TaskId id;
      id.i = IntField(t, "i", path);
      id.stage = IntField(t, "stage", path);
      auto ty = t.find("ty");
      if (ty == t.end() || !ty->is_string() || (*ty != "fwd" && *ty != "bwd")) {
        throw ValidationError(path + ".ty: expected \"fwd\" or \"bwd\"");
      }
      id.ty = *ty == "fwd" ? Direction::kFwd : Direction::kBwd;
      if (id.i < 0 || id.stage < 0) {
        throw ValidationError(path + ": i and stage must be non-negative");
      }
      max_stage = std::max(max_stage, id.stage);
      max_i = std::max(max_i, id.i);
      tasks.push_back(id);
    }
    s.per_actor.push_back(std::move(tasks));
  }
  s.num_stages = max_stage + 1;
  s.num_microbatches = max_i + 1;
  if (s.num_stages < s.num_actors || s.num_stages % s.num_actors != 0) {
    throw ValidationError(
        fmt::format("{}: actors: actor count mismatch, {} stages cannot be spread over {} actors",
                    o, s.num_stages, s.num_actors));
  }
  ValidationReport r = Validate(s);
  if (!r.ok()) throw ValidationError(fmt::format("{}: invalid schedule: {}", o, r.ToString()));
  return s;
}

Schedule LoadSchedule(const std::string& path) {
  return ScheduleFromJson(internal::ReadFile(path, "parallel.schedule_file"), path);
}

}  // namespace mpmd
