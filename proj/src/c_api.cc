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

#include <cstdlib>
#include <cstring>
#include <string>

#include "mpmd/driver.h"
#include "mpmd/errors.h"
#include "mpmd/mpmd.h"

struct mpmd_config {
  mpmd::RunConfig config;
};

struct mpmd_plan {
  mpmd::Plan plan;
};

namespace {

thread_local std::string last_error;

mpmd_status Fail(mpmd_status status, std::string what) {
  last_error = std::move(what);
  return status;
}

char* Copy(std::string_view s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out == nullptr) return nullptr;
  std::memcpy(out, s.data(), s.size());
  out[s.size()] = '\0';
  return out;
}

template <typename F>
mpmd_status Guard(F&& body) {
  last_error.clear();
  try {
    body();
    return MPMD_OK;
  } catch (const std::bad_alloc&) {
    return Fail(MPMD_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    const int code = dynamic_cast<const mpmd::Error*>(&e) ? mpmd::ExitCodeFor(e) : 5;
    return Fail(static_cast<mpmd_status>(code), e.what());
  }
}

}  // namespace

extern "C" {

const char* mpmd_version(void) { return "0.1.0"; }

const char* mpmd_status_name(mpmd_status status) {
  switch (status) {
    case MPMD_OK:
      return "ok";
    case MPMD_ERR_VALIDATION:
      return "validation error";
    case MPMD_ERR_DEADLOCK:
      return "deadlock or liveness fault";
    case MPMD_ERR_MISMATCH:
      return "numerical mismatch";
    case MPMD_ERR_INVALID_ARGUMENT:
      return "invalid argument";
    case MPMD_ERR_INTERNAL:
      return "internal error";
  }
  return "unknown status";
}

const char* mpmd_last_error(void) { return last_error.c_str(); }

mpmd_status mpmd_config_default(mpmd_config** out) {
  if (out == nullptr) return Fail(MPMD_ERR_INVALID_ARGUMENT, "out is null");
  return Guard([&] { *out = new mpmd_config{}; });
}

mpmd_status mpmd_config_parse(const char* json, mpmd_config** out) {
  if (json == nullptr || out == nullptr) return Fail(MPMD_ERR_INVALID_ARGUMENT, "null argument");
  return Guard([&] { *out = new mpmd_config{mpmd::ParseRunConfig(json)}; });
}

mpmd_status mpmd_config_load(const char* path, mpmd_config** out) {
  if (path == nullptr || out == nullptr) return Fail(MPMD_ERR_INVALID_ARGUMENT, "null argument");
  return Guard([&] { *out = new mpmd_config{mpmd::LoadRunConfig(path)}; });
}

mpmd_status mpmd_config_set(mpmd_config* config, const char* key, const char* value) {
  if (config == nullptr || key == nullptr || value == nullptr) {
    return Fail(MPMD_ERR_INVALID_ARGUMENT, "null argument");
  }
  return Guard([&] { mpmd::SetConfigValue(config->config, key, value); });
}

mpmd_status mpmd_config_to_json(const mpmd_config* config, char** out) {
  if (config == nullptr || out == nullptr) return Fail(MPMD_ERR_INVALID_ARGUMENT, "null argument");
  return Guard([&] { *out = Copy(mpmd::RunConfigToJson(config->config)); });
}

void mpmd_config_free(mpmd_config* config) { delete config; }

mpmd_status mpmd_plan_build(const mpmd_config* config, mpmd_plan** out) {
  if (config == nullptr || out == nullptr) return Fail(MPMD_ERR_INVALID_ARGUMENT, "null argument");
  return Guard([&] { *out = new mpmd_plan{mpmd::PlanFromConfig(config->config)}; });
}

void mpmd_plan_free(mpmd_plan* plan) { delete plan; }

int mpmd_plan_num_actors(const mpmd_plan* plan) { return plan ? plan->plan.graph.num_actors : -1; }

int mpmd_plan_num_stages(const mpmd_plan* plan) { return plan ? plan->plan.graph.num_stages : -1; }

int mpmd_plan_num_tasks(const mpmd_plan* plan) {
  return plan ? static_cast<int>(plan->plan.graph.tasks.size()) : -1;
}

int mpmd_plan_num_buffers(const mpmd_plan* plan) {
  return plan ? static_cast<int>(plan->plan.graph.buffers.size()) : -1;
}

int mpmd_plan_num_transfers(const mpmd_plan* plan) {
  return plan ? plan->plan.comms.num_transfers() : -1;
}

int mpmd_plan_driver_messages(const mpmd_plan* plan) {
  return plan ? plan->plan.comms.driver_messages() : -1;
}

mpmd_status mpmd_plan_to_json(const mpmd_plan* plan, const char* what, char** out) {
  if (plan == nullptr || what == nullptr || out == nullptr) {
    return Fail(MPMD_ERR_INVALID_ARGUMENT, "null argument");
  }
  const std::string_view w = what;
  const mpmd::Plan& p = plan->plan;
  if (w == "schedule") return Guard([&] { *out = Copy(mpmd::ScheduleToJson(p.graph.schedule)); });
  if (w == "taskgraph") return Guard([&] { *out = Copy(mpmd::TaskGraphToJson(p.graph)); });
  if (w == "commplan") return Guard([&] { *out = Copy(mpmd::CommPlanToJson(p.comms, p.graph)); });
  return Fail(
      MPMD_ERR_INVALID_ARGUMENT,
      "what must be \"schedule\", \"taskgraph\" or \"commplan\", got \"" + std::string(w) + "\"");
}

mpmd_status mpmd_simulate(const mpmd_plan* plan, const mpmd_config* config, char** report_json) {
  if (plan == nullptr || config == nullptr || report_json == nullptr) {
    return Fail(MPMD_ERR_INVALID_ARGUMENT, "null argument");
  }
  return Guard([&] {
    const mpmd::Plan& p = plan->plan;
    const mpmd::SimReport r = mpmd::Simulate(p.comms, p.graph, config->config.cost);
    *report_json = Copy(mpmd::SimReportToJson(r));
  });
}

mpmd_status mpmd_run_command(const char* command, const mpmd_config* config, char** summary,
                             char** files) {
  if (command == nullptr || config == nullptr) {
    return Fail(MPMD_ERR_INVALID_ARGUMENT, "null argument");
  }
  last_error.clear();
  mpmd::CommandResult r;
  try {
    r = mpmd::RunCommand(command, config->config);
  } catch (const std::exception& e) {
    return Fail(MPMD_ERR_INTERNAL, e.what());
  }
  if (r.exit_code != 0) last_error = r.summary;
  if (summary != nullptr) *summary = Copy(r.summary);
  if (files != nullptr) {
    std::string joined;
    for (const std::string& f : r.files) joined += f + "\n";
    *files = Copy(joined);
  }
  return static_cast<mpmd_status>(r.exit_code);
}

void mpmd_string_free(char* s) { std::free(s); }

}  // extern "C"
