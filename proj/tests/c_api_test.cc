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

#include <gtest/gtest.h>

#include <filesystem>
#include <string>

#include "mpmd/mpmd.h"

namespace {

const std::string kData = MPMD_TEST_DATA_DIR;

std::string Take(char* s) {
  std::string out = s ? s : "";
  mpmd_string_free(s);
  return out;
}

struct ConfigPtr {
  mpmd_config* p = nullptr;
  ~ConfigPtr() { mpmd_config_free(p); }
};

struct PlanPtr {
  mpmd_plan* p = nullptr;
  ~PlanPtr() { mpmd_plan_free(p); }
};

TEST(CApiTest, DefaultPlanAccessors) {
  ConfigPtr c;
  ASSERT_EQ(mpmd_config_default(&c.p), MPMD_OK);
  PlanPtr plan;
  ASSERT_EQ(mpmd_plan_build(c.p, &plan.p), MPMD_OK) << mpmd_last_error();
  EXPECT_EQ(mpmd_plan_num_actors(plan.p), 2);
  EXPECT_EQ(mpmd_plan_num_stages(plan.p), 2);
  EXPECT_EQ(mpmd_plan_driver_messages(plan.p), 4);
  EXPECT_EQ(mpmd_plan_num_transfers(plan.p), 8);
  EXPECT_GT(mpmd_plan_num_tasks(plan.p), 0);
  EXPECT_GT(mpmd_plan_num_buffers(plan.p), 0);
  EXPECT_STREQ(mpmd_last_error(), "");
}

TEST(CApiTest, PlanJsonKinds) {
  ConfigPtr c;
  ASSERT_EQ(mpmd_config_load((kData + "/configs/gpipe_p2m2.json").c_str(), &c.p), MPMD_OK);
  PlanPtr plan;
  ASSERT_EQ(mpmd_plan_build(c.p, &plan.p), MPMD_OK);
  for (const char* what : {"schedule", "taskgraph", "commplan"}) {
    char* out = nullptr;
    ASSERT_EQ(mpmd_plan_to_json(plan.p, what, &out), MPMD_OK) << what;
    EXPECT_EQ(Take(out).front(), '{');
  }
  char* out = nullptr;
  EXPECT_EQ(mpmd_plan_to_json(plan.p, "svg", &out), MPMD_ERR_INVALID_ARGUMENT);
  EXPECT_NE(std::string(mpmd_last_error()).find("svg"), std::string::npos);
}

TEST(CApiTest, ParseErrorsSetLastError) {
  mpmd_config* c = nullptr;
  EXPECT_EQ(mpmd_config_parse("{\"version\": 1, \"parallel\": {\"P\": -1}}", &c),
            MPMD_ERR_VALIDATION);
  EXPECT_EQ(c, nullptr);
  EXPECT_NE(std::string(mpmd_last_error()).find("parallel.P"), std::string::npos);
  EXPECT_EQ(mpmd_config_parse(nullptr, &c), MPMD_ERR_INVALID_ARGUMENT);
  EXPECT_EQ(mpmd_config_load("/nonexistent.json", &c), MPMD_ERR_VALIDATION);
}

TEST(CApiTest, SetAndSerialize) {
  ConfigPtr c;
  ASSERT_EQ(mpmd_config_default(&c.p), MPMD_OK);
  ASSERT_EQ(mpmd_config_set(c.p, "seed", "41"), MPMD_OK);
  EXPECT_EQ(mpmd_config_set(c.p, "seed", "x"), MPMD_ERR_VALIDATION);
  char* json = nullptr;
  ASSERT_EQ(mpmd_config_to_json(c.p, &json), MPMD_OK);
  const std::string text = Take(json);
  EXPECT_NE(text.find("\"seed\": 41"), std::string::npos) << text;
  ConfigPtr back;
  EXPECT_EQ(mpmd_config_parse(text.c_str(), &back.p), MPMD_OK) << mpmd_last_error();
}

TEST(CApiTest, SimulateBubble) {
  ConfigPtr c;
  ASSERT_EQ(mpmd_config_load((kData + "/configs/bubble_p4m8.json").c_str(), &c.p), MPMD_OK);
  PlanPtr plan;
  ASSERT_EQ(mpmd_plan_build(c.p, &plan.p), MPMD_OK);
  char* report = nullptr;
  ASSERT_EQ(mpmd_simulate(plan.p, c.p, &report), MPMD_OK);
  EXPECT_NE(Take(report).find("\"bubble_fraction\": 0.2727272727"), std::string::npos);
}

TEST(CApiTest, RunCommandReturnsTheExitCode) {
  ConfigPtr c;
  ASSERT_EQ(mpmd_config_default(&c.p), MPMD_OK);
  const std::string dir = (std::filesystem::temp_directory_path() / "mpmd_c_api_test").string();
  ASSERT_EQ(mpmd_config_set(c.p, "out", dir.c_str()), MPMD_OK);
  char* summary = nullptr;
  char* files = nullptr;
  ASSERT_EQ(mpmd_run_command("verify", c.p, &summary, &files), MPMD_OK);
  EXPECT_NE(Take(summary).find("ok"), std::string::npos);
  EXPECT_NE(Take(files).find("verify.json"), std::string::npos);

  ASSERT_EQ(mpmd_config_set(c.p, "drop_recv_actor", "1"), MPMD_OK);
  ASSERT_EQ(mpmd_config_set(c.p, "timeout_s", "5"), MPMD_OK);
  EXPECT_EQ(mpmd_run_command("verify", c.p, nullptr, nullptr), MPMD_ERR_DEADLOCK);
  EXPECT_NE(std::string(mpmd_last_error()).find("object store"), std::string::npos);
  EXPECT_EQ(mpmd_run_command("nope", c.p, nullptr, nullptr), MPMD_ERR_VALIDATION);
}

TEST(CApiTest, StatusNames) {
  EXPECT_STREQ(mpmd_status_name(MPMD_OK), "ok");
  EXPECT_STREQ(mpmd_status_name(MPMD_ERR_MISMATCH), "numerical mismatch");
  EXPECT_NE(std::string(mpmd_version()), "");
}

}  // namespace
