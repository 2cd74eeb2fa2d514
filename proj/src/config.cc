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

#include <fmt/format.h>

#include <cmath>
#include <filesystem>
#include <limits>
#include <map>
#include <set>

#include "json_util.h"
#include "mpmd/driver.h"
#include "mpmd/errors.h"

namespace mpmd {
namespace {

using internal::Json;
using internal::OrderedJson;

// Line of every object key, by dotted path ("parallel.M", "sweep.actors").
class KeyLines {
 public:
  explicit KeyLines(std::string_view text) {
    struct Frame {
      bool object;
      std::string key;
      int index = 0;
    };
    std::vector<Frame> stack;
    int line = 1;
    for (size_t i = 0; i < text.size(); ++i) {
      const char c = text[i];
      if (c == '\n') {
        ++line;
      } else if (c == '{' || c == '[') {
        stack.push_back({c == '{', "", 0});
      } else if (c == '}' || c == ']') {
        if (!stack.empty()) stack.pop_back();
      } else if (c == ',' && !stack.empty() && !stack.back().object) {
        ++stack.back().index;
      } else if (c == '"') {
        std::string s;
        size_t j = i + 1;
        for (; j < text.size() && text[j] != '"'; ++j) {
          if (text[j] == '\\' && j + 1 < text.size()) ++j;
          s.push_back(text[j]);
        }
        size_t k = j + 1;
        while (k < text.size() &&
               (text[k] == ' ' || text[k] == '\t' || text[k] == '\r' || text[k] == '\n')) {
          ++k;
        }
        if (!stack.empty() && stack.back().object && k < text.size() && text[k] == ':') {
          stack.back().key = s;
          std::string path;
          for (const Frame& f : stack) {
            if (f.object) {
              if (!path.empty()) path += '.';
              path += f.key;
            } else {
              path += fmt::format("[{}]", f.index);
            }
          }
          lines_.try_emplace(path, line);
        }
        i = j;
      }
    }
  }

  int line(const std::string& path) const {
    auto it = lines_.find(path);
    return it == lines_.end() ? 0 : it->second;
  }

 private:
  std::map<std::string, int> lines_;
};

class Reader {
 public:
  Reader(std::string_view text, std::string_view origin) : origin_(origin), lines_(text) {}

  [[noreturn]] void Fail(const std::string& path, const std::string& what) const {
    const int line = lines_.line(path);
    if (line > 0) throw ValidationError(fmt::format("{}:{}: {}: {}", origin_, line, path, what));
    throw ValidationError(fmt::format("{}: {}: {}", origin_, path, what));
  }

  // Rejects keys outside `allowed`.
  void Keys(const Json& obj, const std::string& path, std::initializer_list<const char*> allowed) {
    if (!obj.is_object()) Fail(path, "must be an object");
    std::set<std::string> ok(allowed.begin(), allowed.end());
    for (auto it = obj.begin(); it != obj.end(); ++it) {
      if (!ok.contains(it.key())) Fail(Join(path, it.key()), "unknown key");
    }
  }

  static std::string Join(const std::string& path, const std::string& key) {
    return path.empty() ? key : path + "." + key;
  }

  void Int(const Json& obj, const std::string& path, const char* key, int& out, int min) {
    if (!obj.contains(key)) return;
    const Json& v = obj.at(key);
    const std::string p = Join(path, key);
    if (!v.is_number_integer()) Fail(p, "must be an integer");
    const int64_t x = v.get<int64_t>();
    if (x < min || x > std::numeric_limits<int>::max()) {
      Fail(p, fmt::format("must be at least {} (got {})", min, x));
    }
    out = static_cast<int>(x);
  }

  void U64(const Json& obj, const std::string& path, const char* key, uint64_t& out) {
    if (!obj.contains(key)) return;
    const Json& v = obj.at(key);
    if (!v.is_number_integer() ||
        (v.is_number_integer() && !v.is_number_unsigned() && v.get<int64_t>() < 0)) {
      Fail(Join(path, key), "must be a non-negative integer");
    }
    out = v.get<uint64_t>();
  }

  // null reads as infinity when `allow_inf`.
  void Num(const Json& obj, const std::string& path, const char* key, double& out,
           bool allow_inf = false) {
    if (!obj.contains(key)) return;
    const Json& v = obj.at(key);
    if (v.is_null() && allow_inf) {
      out = std::numeric_limits<double>::infinity();
      return;
    }
    if (!v.is_number()) {
      Fail(Join(path, key), allow_inf ? "must be a number or null" : "must be a number");
    }
    out = v.get<double>();
  }

  void Bool(const Json& obj, const std::string& path, const char* key, bool& out) {
    if (!obj.contains(key)) return;
    if (!obj.at(key).is_boolean()) Fail(Join(path, key), "must be true or false");
    out = obj.at(key).get<bool>();
  }

  void Str(const Json& obj, const std::string& path, const char* key, std::string& out) {
    if (!obj.contains(key)) return;
    if (!obj.at(key).is_string()) Fail(Join(path, key), "must be a string");
    out = obj.at(key).get<std::string>();
  }

  void IntList(const Json& obj, const std::string& path, const char* key, std::vector<int>& out,
               int min) {
    if (!obj.contains(key)) return;
    const Json& v = obj.at(key);
    const std::string p = Join(path, key);
    if (!v.is_array()) Fail(p, "must be an array of integers");
    out.clear();
    for (size_t i = 0; i < v.size(); ++i) {
      if (!v[i].is_number_integer() || v[i].get<int64_t>() < min) {
        Fail(p, fmt::format("element {} must be an integer of at least {}", i, min));
      }
      out.push_back(v[i].get<int>());
    }
  }

  void NumList(const Json& obj, const std::string& path, const char* key,
               std::vector<double>& out) {
    if (!obj.contains(key)) return;
    const Json& v = obj.at(key);
    const std::string p = Join(path, key);
    if (v.is_number()) {
      out = {v.get<double>()};
      return;
    }
    if (!v.is_array()) Fail(p, "must be a number or an array of numbers");
    out.clear();
    for (size_t i = 0; i < v.size(); ++i) {
      if (!v[i].is_number()) Fail(p, fmt::format("element {} must be a number", i));
      out.push_back(v[i].get<double>());
    }
  }

  const std::string& origin() const { return origin_; }

 private:
  std::string origin_;
  KeyLines lines_;
};

const Json* Section(const Json& root, const char* key) {
  if (!root.contains(key)) return nullptr;
  return &root.at(key);
}

void ReadCost(Reader& r, const Json& c, const std::string& path, CostModel& cost) {
  r.Keys(c, path,
         {"flops_per_second", "intra_actor_speedup", "link_latency_s", "link_bytes_per_second",
          "mem_capacity_bytes", "remat", "bwd_cost_factor", "dispatch_overhead_s", "uniform_fwd_s",
          "uniform_bwd_s"});
  r.NumList(c, path, "flops_per_second", cost.flops_per_second);
  r.Num(c, path, "intra_actor_speedup", cost.intra_actor_speedup);
  r.Num(c, path, "link_latency_s", cost.link_latency_s);
  r.Num(c, path, "link_bytes_per_second", cost.link_bytes_per_second, true);
  r.Num(c, path, "mem_capacity_bytes", cost.mem_capacity_bytes, true);
  if (c.contains("remat")) {
    std::string name;
    r.Str(c, path, "remat", name);
    try {
      cost.remat = ParseRematPolicy(name);
    } catch (const ValidationError&) {
      r.Fail(path + ".remat", fmt::format("unknown policy '{}'; expected none or full", name));
    }
  }
  r.Num(c, path, "bwd_cost_factor", cost.bwd_cost_factor);
  r.Num(c, path, "dispatch_overhead_s", cost.dispatch_overhead_s);
  r.Num(c, path, "uniform_fwd_s", cost.uniform_fwd_s);
  r.Num(c, path, "uniform_bwd_s", cost.uniform_bwd_s);
}

Json InfOrNumber(double v) { return std::isinf(v) ? Json(nullptr) : Json(v); }

bool KnownSchedule(const std::string& s) {
  return s == "gpipe" || s == "1f1b" || s == "interleaved";
}

// Checks that need more than one field.
void CrossCheck(const Reader& r, const RunConfig& c) {
  if (c.schedule_file.empty()) {
    if (!KnownSchedule(c.schedule)) {
      r.Fail("parallel.schedule",
             fmt::format("unknown schedule '{}'; expected gpipe, 1f1b or interleaved", c.schedule));
    }
    if (c.V > 1 && c.schedule != "interleaved") {
      r.Fail("parallel.V", fmt::format("V={} requires the interleaved schedule", c.V));
    }
    if (c.schedule == "interleaved" && c.V > 1 && c.M % c.P != 0) {
      r.Fail("parallel.M", fmt::format("M must be divisible by P for the interleaved schedule "
                                       "(M={}, P={})",
                                       c.M, c.P));
    }
  }
  if (!KnownSchedule(c.sweep.schedule)) {
    r.Fail("sweep.schedule",
           fmt::format("unknown schedule '{}'; expected gpipe, 1f1b or interleaved",
                       c.sweep.schedule));
  }
  if (c.drop_recv_actor >= c.P && c.schedule_file.empty()) {
    r.Fail("verify.drop_recv_actor",
           fmt::format("actor {} does not exist with P={}", c.drop_recv_actor, c.P));
  }
  try {
    c.cost.Validate(c.schedule_file.empty() ? c.P
                                            : static_cast<int>(c.cost.flops_per_second.size()));
  } catch (const ValidationError& e) {
    const std::string what = e.what();
    const size_t colon = what.find(':');
    r.Fail(colon == std::string::npos ? "cost" : what.substr(0, colon),
           colon == std::string::npos ? what : what.substr(colon + 2));
  }
}

void RequireFile(const std::string& path) {
  if (!std::filesystem::is_regular_file(path)) {
    throw ValidationError(fmt::format("parallel.schedule_file: file '{}' does not exist", path));
  }
}

}  // namespace

RunConfig ParseRunConfig(std::string_view text, std::string_view origin) {
  const Json root = internal::ParseJson(text, origin);
  Reader r(text, origin);
  r.Keys(root, "",
         {"version", "model", "parallel", "cost", "optimizer", "seed", "timeout_s", "outputs",
          "simulate", "verify", "sweep"});
  if (!root.contains("version")) {
    throw ValidationError(fmt::format("{}: version: missing (expected 1)", origin));
  }
  if (!root.at("version").is_number_integer() || root.at("version").get<int64_t>() != 1) {
    r.Fail("version", "unsupported version (expected 1)");
  }

  RunConfig c;
  if (const Json* m = Section(root, "model")) {
    r.Keys(*m, "model",
           {"layers", "width", "microbatch_rows", "yield_after", "yield_every", "tied", "bias",
            "elem_bytes"});
    r.Int(*m, "model", "layers", c.model.layers, 1);
    r.Int(*m, "model", "width", c.model.width, 1);
    r.Int(*m, "model", "microbatch_rows", c.model.microbatch_rows, 1);
    r.IntList(*m, "model", "yield_after", c.model.yield_after, 1);
    r.Int(*m, "model", "yield_every", c.model.yield_every, 0);
    r.Bool(*m, "model", "tied", c.model.tied);
    r.Bool(*m, "model", "bias", c.model.bias);
    int eb = static_cast<int>(c.model.elem_bytes);
    r.Int(*m, "model", "elem_bytes", eb, 1);
    c.model.elem_bytes = eb;
  }
  if (const Json* p = Section(root, "parallel")) {
    r.Keys(*p, "parallel", {"P", "M", "V", "schedule", "schedule_file", "commute"});
    r.Int(*p, "parallel", "P", c.P, 1);
    r.Int(*p, "parallel", "M", c.M, 1);
    r.Int(*p, "parallel", "V", c.V, 1);
    r.Str(*p, "parallel", "schedule", c.schedule);
    r.Str(*p, "parallel", "schedule_file", c.schedule_file);
    r.Bool(*p, "parallel", "commute", c.commute);
  }
  if (const Json* cost = Section(root, "cost")) ReadCost(r, *cost, "cost", c.cost);
  if (const Json* o = Section(root, "optimizer")) {
    r.Keys(*o, "optimizer", {"learning_rate", "momentum"});
    r.Num(*o, "optimizer", "learning_rate", c.optimizer.learning_rate);
    r.Num(*o, "optimizer", "momentum", c.optimizer.momentum);
  }
  r.U64(root, "", "seed", c.seed);
  r.Num(root, "", "timeout_s", c.timeout_s);
  if (!(c.timeout_s > 0.0)) r.Fail("timeout_s", "must be positive");
  if (const Json* o = Section(root, "outputs")) {
    r.Keys(*o, "outputs", {"dir"});
    r.Str(*o, "outputs", "dir", c.out_dir);
  }
  if (const Json* s = Section(root, "simulate")) {
    r.Keys(*s, "simulate", {"remat_compare"});
    r.Bool(*s, "simulate", "remat_compare", c.remat_compare);
  }
  if (const Json* v = Section(root, "verify")) {
    r.Keys(*v, "verify", {"max_delay_us", "drop_recv_actor"});
    r.Int(*v, "verify", "max_delay_us", c.max_delay_us, 0);
    r.Int(*v, "verify", "drop_recv_actor", c.drop_recv_actor, -1);
  }
  if (const Json* s = Section(root, "sweep")) {
    r.Keys(*s, "sweep",
           {"schedule", "actors", "microbatches", "circular_repeats", "microbatch_rows",
            "dispatch_overhead_s"});
    r.Str(*s, "sweep", "schedule", c.sweep.schedule);
    r.IntList(*s, "sweep", "actors", c.sweep.actors, 1);
    r.IntList(*s, "sweep", "microbatches", c.sweep.microbatches, 1);
    r.IntList(*s, "sweep", "circular_repeats", c.sweep.circular_repeats, 1);
    r.IntList(*s, "sweep", "microbatch_rows", c.sweep.microbatch_rows, 1);
    r.NumList(*s, "sweep", "dispatch_overhead_s", c.sweep.dispatch_overhead_s);
  }
  CrossCheck(r, c);
  return c;
}

RunConfig LoadRunConfig(const std::string& path) {
  RunConfig c = ParseRunConfig(internal::ReadFile(path, "config"), path);
  if (!c.schedule_file.empty()) {
    std::filesystem::path p(c.schedule_file);
    if (p.is_relative()) p = std::filesystem::path(path).parent_path() / p;
    c.schedule_file = p.lexically_normal().string();
    RequireFile(c.schedule_file);
  }
  return c;
}

std::string RunConfigToJson(const RunConfig& c) {
  Json j;
  j["version"] = 1;
  j["model"] = {{"layers", c.model.layers},
                {"width", c.model.width},
                {"microbatch_rows", c.model.microbatch_rows},
                {"yield_after", c.model.yield_after},
                {"yield_every", c.model.yield_every},
                {"tied", c.model.tied},
                {"bias", c.model.bias},
                {"elem_bytes", c.model.elem_bytes}};
  j["parallel"] = {{"P", c.P},
                   {"M", c.M},
                   {"V", c.V},
                   {"schedule", c.schedule},
                   {"schedule_file", c.schedule_file},
                   {"commute", c.commute}};
  j["cost"] = {{"flops_per_second", c.cost.flops_per_second},
               {"intra_actor_speedup", c.cost.intra_actor_speedup},
               {"link_latency_s", c.cost.link_latency_s},
               {"link_bytes_per_second", InfOrNumber(c.cost.link_bytes_per_second)},
               {"mem_capacity_bytes", InfOrNumber(c.cost.mem_capacity_bytes)},
               {"remat", RematPolicyName(c.cost.remat)},
               {"bwd_cost_factor", c.cost.bwd_cost_factor},
               {"dispatch_overhead_s", c.cost.dispatch_overhead_s},
               {"uniform_fwd_s", c.cost.uniform_fwd_s},
               {"uniform_bwd_s", c.cost.uniform_bwd_s}};
  j["optimizer"] = {{"learning_rate", c.optimizer.learning_rate},
                    {"momentum", c.optimizer.momentum}};
  j["seed"] = c.seed;
  j["timeout_s"] = c.timeout_s;
  j["outputs"] = {{"dir", c.out_dir}};
  j["simulate"] = {{"remat_compare", c.remat_compare}};
  j["verify"] = {{"max_delay_us", c.max_delay_us}, {"drop_recv_actor", c.drop_recv_actor}};
  j["sweep"] = {{"schedule", c.sweep.schedule},
                {"actors", c.sweep.actors},
                {"microbatches", c.sweep.microbatches},
                {"circular_repeats", c.sweep.circular_repeats},
                {"microbatch_rows", c.sweep.microbatch_rows},
                {"dispatch_overhead_s", c.sweep.dispatch_overhead_s}};
  return internal::Dump(j);
}

void SetConfigValue(RunConfig& c, std::string_view key, std::string_view value) {
  const std::string v(value);
  auto to_int = [&](int min) {
    size_t used = 0;
    long long x = 0;
    try {
      x = std::stoll(v, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != v.size() || v.empty() || x < min || x > std::numeric_limits<int>::max()) {
      throw ValidationError(
          fmt::format("{}: expected an integer of at least {}, got '{}'", key, min, v));
    }
    return static_cast<int>(x);
  };
  if (key == "out") {
    if (v.empty()) throw ValidationError("out: must not be empty");
    c.out_dir = v;
  } else if (key == "schedule_file") {
    RequireFile(v);
    c.schedule_file = v;
  } else if (key == "seed") {
    if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos) {
      throw ValidationError(fmt::format("seed: expected a non-negative integer, got '{}'", v));
    }
    try {
      c.seed = std::stoull(v);
    } catch (const std::exception&) {
      throw ValidationError(fmt::format("seed: out of range: '{}'", v));
    }
  } else if (key == "timeout_s") {
    size_t used = 0;
    double x = 0.0;
    try {
      x = std::stod(v, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != v.size() || v.empty() || !(x > 0.0)) {
      throw ValidationError(fmt::format("timeout_s: expected a positive number, got '{}'", v));
    }
    c.timeout_s = x;
  } else if (key == "max_delay_us") {
    c.max_delay_us = to_int(0);
  } else if (key == "drop_recv_actor") {
    c.drop_recv_actor = to_int(-1);
  } else {
    throw ValidationError(fmt::format("unknown setting '{}'", key));
  }
}

Schedule ResolveSchedule(const RunConfig& c) {
  if (!c.schedule_file.empty()) {
    RequireFile(c.schedule_file);
    try {
      return LoadSchedule(c.schedule_file);
    } catch (const ValidationError& e) {
      const std::string what = fmt::format("parallel.schedule_file: {}", e.what());
      if (what.find("dependency cycle") != std::string::npos) throw DeadlockError(what);
      throw ValidationError(what);
    }
  }
  if (!KnownSchedule(c.schedule)) {
    throw ValidationError(
        fmt::format("parallel.schedule: unknown schedule '{}'; expected gpipe, 1f1b or interleaved",
                    c.schedule));
  }
  if (c.V > 1 && c.schedule != "interleaved") {
    throw ValidationError(fmt::format("parallel.V: V={} requires the interleaved schedule", c.V));
  }
  if (c.schedule == "interleaved" && c.V > 1 && c.M % c.P != 0) {
    throw ValidationError(fmt::format(
        "parallel.M: M must be divisible by P for the interleaved schedule (M={}, P={})", c.M,
        c.P));
  }
  return MakeSchedule(c.schedule, c.P, c.M, c.V);
}

ModelConfig ResolveModel(const RunConfig& c, const Schedule& s) {
  ModelConfig m = c.model;
  const int S = s.num_stages;
  if (m.yield_after.empty() && m.yield_every == 0) {
    if (m.layers % S != 0) {
      throw ValidationError(fmt::format(
          "model.layers: {} layers do not split into {} equal stages; set model.yield_after",
          m.layers, S));
    }
    for (int k = 1; k < S; ++k) m.yield_after.push_back(k * m.layers / S);
  }
  return m;
}

Plan PlanFromConfig(const RunConfig& c) {
  const Schedule s = ResolveSchedule(c);
  const ModelConfig m = ResolveModel(c, s);
  auto partition = PartitionModel(m);
  if (partition->num_stages != s.num_stages) {
    throw ValidationError(
        fmt::format("{}: the model has {} stages but the schedule has {}",
                    m.yield_after.empty() ? "model.yield_every" : "model.yield_after",
                    partition->num_stages, s.num_stages));
  }
  c.cost.Validate(s.num_actors);
  PlanOptions options;
  options.commute = c.commute;
  return BuildPlan(partition, s, options);
}

}  // namespace mpmd
