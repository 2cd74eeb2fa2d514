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

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "mpmd/errors.h"

namespace mpmd {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

const std::string kData = MPMD_TEST_DATA_DIR;

std::string Slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string FreshDir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("mpmd_driver_test_" + name);
  fs::remove_all(p);
  return p.string();
}

RunConfig Config(const std::string& name, const std::string& out) {
  RunConfig c = LoadRunConfig(kData + "/configs/" + name);
  c.out_dir = FreshDir(out);
  return c;
}

std::string ParseError(const std::string& text) {
  try {
    ParseRunConfig(text, "cfg.json");
  } catch (const ValidationError& e) {
    return e.what();
  }
  return "";
}

TEST(ConfigTest, DefaultsNeedOnlyTheVersion) {
  RunConfig c = ParseRunConfig(R"({"version": 1})");
  EXPECT_EQ(c.P, 2);
  EXPECT_EQ(c.schedule, "1f1b");
  EXPECT_TRUE(c.commute);
}

TEST(ConfigTest, SyntaxErrorsCarryLineAndColumn) {
  const std::string e = ParseError("{\n  \"version\": 1,\n  \"model\": {\"layers\": }\n}");
  EXPECT_NE(e.find("cfg.json:3:"), std::string::npos) << e;
}

TEST(ConfigTest, UnknownKeysAreRejectedWithTheirLine) {
  const std::string e =
      ParseError("{\n  \"version\": 1,\n  \"model\": {\n    \"depth\": 3\n  }\n}");
  EXPECT_EQ(e, "cfg.json:4: model.depth: unknown key");
}

TEST(ConfigTest, ErrorsCiteTheField) {
  EXPECT_NE(ParseError("{}").find("version"), std::string::npos);
  EXPECT_NE(ParseError(R"({"version": 2})").find("version"), std::string::npos);
  EXPECT_NE(ParseError(R"({"version": 1, "parallel": {"P": 0}})").find("parallel.P"),
            std::string::npos);
  EXPECT_NE(ParseError(R"({"version": 1, "parallel": {"M": "four"}})").find("parallel.M"),
            std::string::npos);
  EXPECT_NE(ParseError(R"({"version": 1, "parallel": {"schedule": "zb"}})")
                .find("parallel.schedule: unknown schedule 'zb'"),
            std::string::npos);
  EXPECT_NE(ParseError(R"({"version": 1, "parallel": {"V": 2}})").find("parallel.V"),
            std::string::npos);
  EXPECT_NE(ParseError(R"({"version": 1, "cost": {"flops_per_second": [1, 2, 3]}})")
                .find("cost.flops_per_second"),
            std::string::npos);
  EXPECT_NE(ParseError(R"({"version": 1, "cost": {"remat": "some"}})").find("cost.remat"),
            std::string::npos);
  EXPECT_NE(ParseError(R"({"version": 1, "model": {"tied": 1}})").find("model.tied"),
            std::string::npos);
  EXPECT_NE(ParseError(R"({"version": 1, "timeout_s": 0})").find("timeout_s"), std::string::npos);
}

TEST(ConfigTest, InterleavedNeedsMDivisibleByP) {
  const std::string e = ParseError(
      "{\"version\": 1,\n \"parallel\": {\"P\": 2, \"M\": 3, \"V\": 2, \"schedule\": "
      "\"interleaved\"}}");
  EXPECT_NE(e.find("M must be divisible by P"), std::string::npos) << e;
  EXPECT_NE(e.find("cfg.json:2: parallel.M"), std::string::npos) << e;
}

TEST(ConfigTest, NullMeansUnlimited) {
  RunConfig c = ParseRunConfig(R"({"version": 1, "cost": {"mem_capacity_bytes": null}})");
  EXPECT_TRUE(std::isinf(c.cost.mem_capacity_bytes));
}

TEST(ConfigTest, JsonRoundTrip) {
  RunConfig c = LoadRunConfig(kData + "/configs/sweep_circular_repeat.json");
  c.cost.remat = RematPolicy::kFullPerStage;
  c.seed = 99;
  const std::string text = RunConfigToJson(c);
  EXPECT_EQ(RunConfigToJson(ParseRunConfig(text)), text);
}

TEST(ConfigTest, ScheduleFileIsResolvedAgainstTheConfig) {
  RunConfig c = LoadRunConfig(kData + "/configs/interleaved_listing.json");
  EXPECT_TRUE(fs::is_regular_file(c.schedule_file)) << c.schedule_file;
  EXPECT_THROW(SetConfigValue(c, "schedule_file", "/nonexistent/schedule.json"), ValidationError);
}

TEST(ConfigTest, Overrides) {
  RunConfig c;
  SetConfigValue(c, "seed", "12");
  SetConfigValue(c, "timeout_s", "2.5");
  SetConfigValue(c, "out", "x");
  EXPECT_EQ(c.seed, 12u);
  EXPECT_DOUBLE_EQ(c.timeout_s, 2.5);
  EXPECT_EQ(c.out_dir, "x");
  EXPECT_THROW(SetConfigValue(c, "seed", "-1"), ValidationError);
  EXPECT_THROW(SetConfigValue(c, "timeout_s", "0"), ValidationError);
  EXPECT_THROW(SetConfigValue(c, "colour", "red"), ValidationError);
}

TEST(ConfigTest, LayersMustSplitEvenlyWithoutYields) {
  RunConfig c = ParseRunConfig(R"({"version": 1, "model": {"layers": 3}})");
  try {
    PlanFromConfig(c);
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("model.layers"), std::string::npos);
  }
  c.model.yield_after = {1, 2};
  try {
    PlanFromConfig(c);
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("model.yield_after"), std::string::npos);
  }
  c.model.yield_after = {2};
  EXPECT_NO_THROW(PlanFromConfig(c));
}

TEST(DriverTest, PlanWritesThreeDeterministicArtifacts) {
  RunConfig c = Config("gpipe_p2m2.json", "plan_a");
  CommandResult a = CmdPlan(c);
  c.out_dir = FreshDir("plan_b");
  CommandResult b = CmdPlan(c);
  ASSERT_EQ(a.files.size(), 3u);
  ASSERT_EQ(b.files.size(), 3u);
  for (size_t k = 0; k < 3; ++k) {
    EXPECT_EQ(fs::path(a.files[k]).filename(), fs::path(b.files[k]).filename());
    EXPECT_EQ(Slurp(a.files[k]), Slurp(b.files[k]));
  }
  EXPECT_EQ(fs::path(a.files[0]).filename(), "schedule.json");
  EXPECT_NE(a.summary.find("channel messages 4"), std::string::npos) << a.summary;
  const json s = json::parse(Slurp(a.files[0]));
  EXPECT_EQ(s["actors"].size(), 2u);
}

TEST(DriverTest, PlanFromTheListingUsesTwoStagesPerActor) {
  CommandResult r = RunCommand("plan", Config("interleaved_listing.json", "listing"));
  ASSERT_EQ(r.exit_code, 0) << r.summary;
  EXPECT_NE(r.summary.find("P=2 M=2 S=4"), std::string::npos) << r.summary;
}

TEST(DriverTest, InvalidConfigExitsOne) {
  RunConfig c;
  c.schedule = "interleaved";
  c.P = 2;
  c.M = 3;
  c.V = 2;
  CommandResult r = RunCommand("plan", c);
  EXPECT_EQ(r.exit_code, 1);
  EXPECT_NE(r.summary.find("M must be divisible by P"), std::string::npos);
  EXPECT_EQ(RunCommand("train", RunConfig{}).exit_code, 1);
}

TEST(DriverTest, CyclicScheduleFileExitsTwo) {
  const std::string dir = FreshDir("cyclic");
  fs::create_directories(dir);
  const std::string path = dir + "/cyclic.json";
  std::ofstream(path) << R"({"version": 1, "actors": [
    [{"i":0,"ty":"fwd","stage":0},{"i":0,"ty":"bwd","stage":0}],
    [{"i":0,"ty":"bwd","stage":1},{"i":0,"ty":"fwd","stage":1}]]})";
  RunConfig c;
  c.model.layers = 2;
  c.out_dir = dir;
  SetConfigValue(c, "schedule_file", path);
  CommandResult r = RunCommand("plan", c);
  EXPECT_EQ(r.exit_code, 2) << r.summary;
}

TEST(DriverTest, SimulateReportsTheClosedFormBubble) {
  CommandResult r = CmdSimulate(Config("bubble_p4m8.json", "bubble"));
  ASSERT_EQ(r.files.size(), 2u);
  const json j = json::parse(Slurp(r.files[0]));
  EXPECT_NEAR(j["bubble_fraction"].get<double>(), 3.0 / 11.0, 1e-12);
  const std::string svg = Slurp(r.files[1]);
  size_t rows = 0;
  for (size_t p = svg.find("class=\"actor\""); p != std::string::npos;
       p = svg.find("class=\"actor\"", p + 1)) {
    ++rows;
  }
  EXPECT_EQ(rows, 4u);
}

TEST(DriverTest, RematComparePairHasRatioFourThirds) {
  CommandResult r = CmdSimulate(Config("remat_compare.json", "remat"));
  ASSERT_EQ(r.files.size(), 5u);
  const json j = json::parse(Slurp(r.files.back()));
  EXPECT_NEAR(j["ratio"].get<double>(), 4.0 / 3.0, 1e-9);
  EXPECT_EQ(json::parse(Slurp(r.files[2]))["remat_policy"], "none");
  EXPECT_EQ(json::parse(Slurp(r.files[3]))["remat_policy"], "full");
}

TEST(DriverTest, MemoryCapacityFailureIsNonzero) {
  RunConfig c = Config("bubble_p4m8.json", "capacity");
  c.cost.mem_capacity_bytes = 16;
  CommandResult r = RunCommand("simulate", c);
  EXPECT_EQ(r.exit_code, 1);
  EXPECT_NE(r.summary.find("remat"), std::string::npos) << r.summary;
}

TEST(DriverTest, VerifyDefaultConfigPasses) {
  RunConfig c;
  c.out_dir = FreshDir("verify_default");
  CommandResult r = RunCommand("verify", c);
  ASSERT_EQ(r.exit_code, 0) << r.summary;
  const json j = json::parse(Slurp(r.files[0]));
  EXPECT_TRUE(j["ok"].get<bool>());
  EXPECT_LE(j["max_rel_error"].get<double>(), 1e-12);
  EXPECT_EQ(j["stats"]["driver_messages"], 4);
}

TEST(DriverTest, VerifyWithDroppedReceiveIsALivenessFault) {
  RunConfig c;
  c.out_dir = FreshDir("verify_drop");
  c.timeout_s = 5.0;
  c.drop_recv_actor = 1;
  CommandResult r = RunCommand("verify", c);
  EXPECT_EQ(r.exit_code, 2);
  EXPECT_NE(r.summary.find("not in the object store"), std::string::npos) << r.summary;
}

TEST(DriverTest, VerifyWithoutCommutingSendsMoreTiedGradients) {
  RunConfig off = Config("tied_no_commute.json", "tied_off");
  CommandResult a = RunCommand("verify", off);
  RunConfig on = off;
  on.commute = true;
  on.out_dir = FreshDir("tied_on");
  CommandResult b = RunCommand("verify", on);
  ASSERT_EQ(a.exit_code, 0) << a.summary;
  ASSERT_EQ(b.exit_code, 0) << b.summary;
  const json ja = json::parse(Slurp(a.files[0]));
  const json jb = json::parse(Slurp(b.files[0]));
  EXPECT_EQ(ja["stats"]["param_grad_messages"]["v1"], 8);
  EXPECT_EQ(jb["stats"]["param_grad_messages"]["v1"], 1);
  EXPECT_GT(ja["stats"]["channel_messages"].get<int>(), jb["stats"]["channel_messages"].get<int>());
}

TEST(DriverTest, VerifyRejectsLargeModels) {
  RunConfig c;
  c.model.width = 1000;
  CommandResult r = RunCommand("verify", c);
  EXPECT_EQ(r.exit_code, 1);
  EXPECT_NE(r.summary.find("verify limit"), std::string::npos) << r.summary;
}

TEST(DriverTest, VerifyWithDelaysIsDeterministic) {
  RunConfig c = Config("gpipe_p2m2.json", "delays");
  c.max_delay_us = 200;
  CommandResult a = CmdVerify(c);
  const std::string first = Slurp(a.files[0]);
  CommandResult b = CmdVerify(c);
  EXPECT_EQ(a.exit_code, 0);
  EXPECT_EQ(first, Slurp(b.files[0]));
}

TEST(DriverTest, EmptySweepWritesAnEmptyTable) {
  RunConfig c;
  c.out_dir = FreshDir("sweep_empty");
  CommandResult r = RunCommand("sweep", c);
  ASSERT_EQ(r.exit_code, 0);
  const std::string csv = Slurp(r.files[0]);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1);
  EXPECT_TRUE(json::parse(Slurp(r.files[1]))["rows"].empty());
}

TEST(DriverTest, MicrobatchSweepMatchesTheClosedForm) {
  CommandResult r = CmdSweep(Config("sweep_microbatches.json", "sweep_m"));
  const json rows = json::parse(Slurp(r.files[1]))["rows"];
  ASSERT_EQ(rows.size(), 8u);
  for (const json& row : rows) {
    ASSERT_TRUE(row["ok"].get<bool>());
    const double P = row["P"], M = row["M"], V = row["V"];
    EXPECT_NEAR(row["bubble_fraction"].get<double>(), (P - 1) / (V * M + P - 1), 1e-9);
  }
}

TEST(DriverTest, CircularRepeatSweepIsUShapedOnlyWithOverhead) {
  CommandResult r = CmdSweep(Config("sweep_circular_repeat.json", "sweep_v"));
  const json rows = json::parse(Slurp(r.files[1]))["rows"];
  std::map<double, std::vector<double>> by_overhead;
  for (const json& row : rows) {
    ASSERT_TRUE(row["ok"].get<bool>());
    by_overhead[row["dispatch_overhead_s"].get<double>()].push_back(row["step_time_s"]);
  }
  const std::vector<double>& flat = by_overhead.at(0.0);
  for (size_t k = 1; k < flat.size(); ++k) EXPECT_LE(flat[k], flat[k - 1] + 1e-12);
  const std::vector<double>& u = by_overhead.at(0.05);
  const size_t best = static_cast<size_t>(std::min_element(u.begin(), u.end()) - u.begin());
  EXPECT_GT(best, 0u);
  EXPECT_LT(best, u.size() - 1);
}

TEST(DriverTest, ExitCodes) {
  EXPECT_EQ(ExitCodeFor(ValidationError("x")), 1);
  EXPECT_EQ(ExitCodeFor(MemoryCapacityError("x")), 1);
  EXPECT_EQ(ExitCodeFor(DeadlockError("x")), 2);
  EXPECT_EQ(ExitCodeFor(LivenessFault("x")), 2);
  EXPECT_EQ(ExitCodeFor(NumericalMismatch("x")), 3);
}

}  // namespace
}  // namespace mpmd
