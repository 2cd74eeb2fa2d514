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

// mpmdpp: plan, simulate, verify and sweep pipeline-parallel training steps.

#include <cstdio>
#include <string>

#include "CLI11.hpp"
#include "mpmd/mpmd.h"

namespace {

struct Flags {
  std::string config;
  std::string out;
  std::string schedule_file;
  double timeout_s = 0.0;
  long long seed = -1;
  int drop_recv = -1;
  int max_delay_us = -1;
};

void Report(mpmd_status status) {
  std::fprintf(stderr, "mpmdpp: %s: %s\n", mpmd_status_name(status), mpmd_last_error());
}

int Run(const std::string& command, const Flags& f) {
  mpmd_config* config = nullptr;
  mpmd_status st =
      f.config.empty() ? mpmd_config_default(&config) : mpmd_config_load(f.config.c_str(), &config);
  if (st != MPMD_OK) {
    Report(st);
    return st;
  }
  auto set = [&](const char* key, const std::string& value) {
    if (st == MPMD_OK) st = mpmd_config_set(config, key, value.c_str());
  };
  if (!f.out.empty()) set("out", f.out);
  if (!f.schedule_file.empty()) set("schedule_file", f.schedule_file);
  if (f.timeout_s > 0.0) set("timeout_s", std::to_string(f.timeout_s));
  if (f.seed >= 0) set("seed", std::to_string(f.seed));
  if (f.drop_recv >= 0) set("drop_recv_actor", std::to_string(f.drop_recv));
  if (f.max_delay_us >= 0) set("max_delay_us", std::to_string(f.max_delay_us));
  if (st != MPMD_OK) {
    Report(st);
    mpmd_config_free(config);
    return st;
  }

  char* summary = nullptr;
  char* files = nullptr;
  st = mpmd_run_command(command.c_str(), config, &summary, &files);
  if (st == MPMD_OK || st == MPMD_ERR_MISMATCH) {
    std::fputs(summary, stdout);
    if (files[0] != '\0') std::printf("wrote:\n%s", files);
  } else if (summary != nullptr) {
    std::fprintf(stderr, "mpmdpp %s: %s", command.c_str(), summary);
  } else {
    Report(st);
  }
  mpmd_string_free(summary);
  mpmd_string_free(files);
  mpmd_config_free(config);
  return st;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Single-controller MPMD pipeline planner, simulator and executor", "mpmdpp"};
  app.set_version_flag("--version", mpmd_version());
  app.require_subcommand(1);

  Flags f;
  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", f.config, "JSON run configuration")->check(CLI::ExistingFile);
    sub->add_option("--out", f.out, "output directory");
    sub->add_option("--schedule-file", f.schedule_file, "schedule JSON replacing the named one")
        ->check(CLI::ExistingFile);
    sub->add_option("--seed", f.seed, "parameter and batch seed")->check(CLI::NonNegativeNumber);
  };

  CLI::App* plan = app.add_subcommand("plan", "write schedule, task graph and comm plan JSON");
  CLI::App* simulate =
      app.add_subcommand("simulate", "write a simulated report and an SVG timeline");
  CLI::App* verify =
      app.add_subcommand("verify", "compare the pipelined step with the serial reference");
  CLI::App* sweep = app.add_subcommand("sweep", "simulate a grid of configurations");
  for (CLI::App* sub : {plan, simulate, verify, sweep}) common(sub);
  verify->add_option("--timeout-s", f.timeout_s, "watchdog timeout in seconds")
      ->check(CLI::PositiveNumber);
  verify->add_option("--max-delay-us", f.max_delay_us, "random delay before each instruction")
      ->check(CLI::NonNegativeNumber);
  verify->add_option("--drop-recv", f.drop_recv, "remove the first receive of this actor")
      ->check(CLI::NonNegativeNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }
  for (CLI::App* sub : app.get_subcommands()) return Run(sub->get_name(), f);
  return 1;
}
