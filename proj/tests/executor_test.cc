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

#include "mpmd/executor.h"

#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <random>
#include <sstream>

#include "mpmd/errors.h"
#include "mpmd/plan.h"
#include "support/fd_oracle.h"
#include "support/generators.h"

namespace mpmd {
namespace {

constexpr double kTol = 1e-12;

ModelConfig Ffn(int layers, int stages, int width = 8, bool tied = false) {
  ModelConfig c;
  c.layers = layers;
  c.width = width;
  c.microbatch_rows = 2;
  c.tied = tied;
  for (int k = 1; k < stages; ++k) c.yield_after.push_back(k * layers / stages);
  return c;
}

struct Fixture {
  StagedGraph model;
  Plan plan;
  TensorMap params;
  TensorMap batch;
};

Fixture Make(const ModelConfig& c, const Schedule& s, uint64_t seed, PlanOptions opts = {}) {
  Fixture out{BuildModel(c), {}, {}, {}};
  out.plan = BuildPlan(PartitionModel(c), s, opts);
  out.params = InitParams(out.model, seed);
  out.batch = MakeBatch(out.model, s.num_microbatches, seed + 1);
  return out;
}

std::string ReadText(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

TEST(ExecutorTest, TwoStageOneFOneBMatchesReference) {
  Fixture s = Make(Ffn(2, 2), OneFOneB(2, 2), 1);
  PipelinedRun run = RunPipelined(s.plan.comms, s.plan.graph, s.params, s.batch);
  StepResult ref = RunReference(s.model, s.params, s.batch, 2);
  Comparison c = Compare(run.result, ref);
  EXPECT_TRUE(c.within(kTol)) << c.worst << " " << c.max_rel_error;
  EXPECT_EQ(run.result.grads.size(), s.model.params().size());
  EXPECT_EQ(run.result.losses.size(), 2u);
}

TEST(ExecutorTest, ReferenceWithOneMicrobatchIsAPlainStep) {
  ModelConfig c = Ffn(3, 1, 5);
  c.bias = true;
  StagedGraph g = BuildModel(c);
  TensorMap params = InitParams(g, 3);
  TensorMap batch = MakeBatch(g, 1, 4);
  ValueEnv leaves(params.begin(), params.end());
  for (const auto& [v, t] : batch) leaves.emplace(v, t);
  StepResult r = RunReference(g, params, batch, 1);
  const auto analytic = testing::AnalyticGrads(g, leaves);
  const auto fd = testing::FiniteDifferenceGrads(g, leaves);
  for (const auto& [p, grad] : r.grads) {
    EXPECT_LE(RelativeError(grad, analytic.at(p)), kTol);
    EXPECT_LE(RelativeError(grad, fd.at(p)), 1e-6);
  }
  EXPECT_DOUBLE_EQ(r.losses.at(0), testing::EvalLoss(g, leaves));
  // One momentum step from zero velocity is plain SGD.
  OptimizerConfig opt;
  for (const auto& [p, np] : r.new_params) {
    for (int64_t k = 0; k < np.size(); ++k) {
      EXPECT_DOUBLE_EQ(np[k], params.at(p)[k] - opt.learning_rate * r.grads.at(p)[k]);
    }
  }
}

TEST(ExecutorTest, MicrobatchCountDoesNotChangeSummedGrads) {
  ModelConfig c2 = Ffn(2, 1, 4);
  c2.microbatch_rows = 4;
  ModelConfig c4 = c2;
  c4.microbatch_rows = 2;
  StagedGraph g2 = BuildModel(c2), g4 = BuildModel(c4);
  TensorMap params = InitParams(g2, 8);
  TensorMap batch = MakeBatch(g2, 2, 9);  // 8 rows either way
  StepResult a = RunReference(g2, params, batch, 2);
  StepResult b = RunReference(g4, params, batch, 4);
  for (const auto& [p, g] : a.grads) EXPECT_LE(RelativeError(b.grads.at(p), g), kTol);
  EXPECT_NEAR(a.losses[0] + a.losses[1], b.losses[0] + b.losses[1] + b.losses[2] + b.losses[3],
              1e-12);
}

TEST(ExecutorTest, UnevenBatchIsRejected) {
  StagedGraph g = BuildModel(Ffn(2, 1));
  TensorMap params = InitParams(g, 1);
  TensorMap batch = MakeBatch(g, 3, 1);
  EXPECT_THROW(RunReference(g, params, batch, 4), ValidationError);
}

// Fixed seed, 2-stage FFN of width 8, batch 4, M = 2. Set
// MPMD_REGENERATE_GOLDEN=1 to rewrite the fixture.
TEST(ExecutorTest, GoldenFixture) {
  const std::string path = std::string(MPMD_TEST_DATA_DIR) + "/golden_ffn2_w8_b4_m2_seed7.json";
  ModelConfig c = Ffn(2, 2, 8);
  c.microbatch_rows = 2;
  StagedGraph g = BuildModel(c);
  TensorMap params = InitParams(g, 7);
  TensorMap batch = MakeBatch(g, 2, 8);
  StepResult ref = RunReference(g, params, batch, 2);
  if (std::getenv("MPMD_REGENERATE_GOLDEN")) {
    std::ofstream(path) << StepResultToJson(ref);
  }
  const std::string text = ReadText(path);
  ASSERT_FALSE(text.empty()) << path;
  StepResult golden = StepResultFromJson(text, path);
  Comparison cmp = Compare(ref, golden);
  EXPECT_TRUE(cmp.within(kTol)) << cmp.worst;
  Plan plan = BuildPlan(PartitionModel(c), OneFOneB(2, 2));
  PipelinedRun run = RunPipelined(plan.comms, plan.graph, params, batch);
  EXPECT_TRUE(Compare(run.result, golden).within(kTol));
}

TEST(ExecutorTest, CommutingPreservesResultsAndSavesMessages) {
  for (int M : {2, 4, 8}) {
    const ModelConfig c = Ffn(2, 2, 4, /*tied=*/true);
    Fixture on = Make(c, OneFOneB(2, M), 5, {.commute = true});
    Fixture off = Make(c, OneFOneB(2, M), 5, {.commute = false});
    PipelinedRun a = RunPipelined(on.plan.comms, on.plan.graph, on.params, on.batch);
    PipelinedRun b = RunPipelined(off.plan.comms, off.plan.graph, off.params, off.batch);
    StepResult ref = RunReference(on.model, on.params, on.batch, M);
    EXPECT_TRUE(Compare(a.result, ref).within(kTol));
    EXPECT_TRUE(Compare(b.result, ref).within(kTol));
    EXPECT_TRUE(Compare(a.result, b.result).within(kTol));
    EXPECT_LT(a.stats.channel_messages, b.stats.channel_messages);
    const auto& shared = on.plan.partition->shared_params;
    ASSERT_EQ(shared.size(), 1u);
    const ValueId tied = shared.begin()->first;
    EXPECT_EQ(a.stats.param_grad_messages[tied], 1);
    EXPECT_EQ(b.stats.param_grad_messages[tied], M);
  }
}

TEST(ExecutorTest, DelaysDoNotChangeResults) {
  Fixture s = Make(Ffn(4, 4, 4), Interleaved1F1B(2, 4, 2), 11);
  PipelinedRun base = RunPipelined(s.plan.comms, s.plan.graph, s.params, s.batch);
  for (uint64_t seed = 1; seed <= 5; ++seed) {
    ExecutorOptions opts;
    opts.max_delay_us = 200;
    opts.delay_seed = seed;
    PipelinedRun r = RunPipelined(s.plan.comms, s.plan.graph, s.params, s.batch, opts);
    EXPECT_EQ(r.result.losses, base.result.losses);
    for (const auto& [p, g] : base.result.grads) {
      EXPECT_TRUE(
          std::equal(g.data().begin(), g.data().end(), r.result.grads.at(p).data().begin()));
    }
  }
}

TEST(ExecutorTest, FusedRunsTalkToTheDriverTwicePerActor) {
  for (int P : {1, 2, 4}) {
    Fixture s = Make(Ffn(4, P, 4), OneFOneB(P, 4), 2);
    PipelinedRun r = RunPipelined(s.plan.comms, s.plan.graph, s.params, s.batch);
    EXPECT_EQ(r.stats.driver_messages, 2 * P);
    Fixture u = Make(Ffn(4, P, 4), OneFOneB(P, 4), 2, {.fuse = false});
    PipelinedRun ru = RunPipelined(u.plan.comms, u.plan.graph, u.params, u.batch);
    EXPECT_EQ(ru.stats.driver_messages, u.plan.comms.driver_messages());
    EXPECT_GT(ru.stats.driver_messages, 2 * P);
    EXPECT_TRUE(Compare(ru.result, r.result).within(0.0));
  }
}

TEST(ExecutorTest, PeakLiveStash) {
  for (auto [name, expect] : {std::pair{"gpipe", 8}, std::pair{"1f1b", 4}}) {
    Fixture s = Make(Ffn(4, 4, 4), MakeSchedule(name, 4, 8, 1), 3);
    PipelinedRun r = RunPipelined(s.plan.comms, s.plan.graph, s.params, s.batch);
    EXPECT_EQ(r.stats.peak_live_stash[0], expect) << name;
  }
}

TEST(ExecutorTest, FinalStoresHoldOnlyPersistentStateAndOutputs) {
  Fixture s = Make(Ffn(4, 2, 4, true), OneFOneB(2, 4), 3);
  PipelinedRun r = RunPipelined(s.plan.comms, s.plan.graph, s.params, s.batch);
  for (int a = 0; a < 2; ++a) {
    std::set<BufferId> expected;
    for (const Buffer& b : s.plan.graph.buffers) {
      if (b.actor == a && (b.persistent() || b.is_output)) expected.insert(b.id);
    }
    EXPECT_EQ(r.stats.live_at_end[a], expected);
  }
}

void EraseFirst(CommPlan& cp, int actor, InstrKind kind) {
  auto& instrs = cp.programs[static_cast<size_t>(actor)].instrs;
  for (auto it = instrs.begin(); it != instrs.end(); ++it) {
    if (it->kind == kind) {
      instrs.erase(it);
      return;
    }
  }
}

TEST(ExecutorTest, MissingReceiveIsALivenessFault) {
  Fixture s = Make(Ffn(2, 2), GPipe(2, 2), 1);
  CommPlan cp = s.plan.comms;
  EraseFirst(cp, 1, InstrKind::kRecvWait);
  ExecutorOptions opts;
  opts.timeout_s = 5.0;
  try {
    RunPipelined(cp, s.plan.graph, s.params, s.batch, opts);
    FAIL();
  } catch (const LivenessFault& e) {
    EXPECT_NE(std::string(e.what()).find("not in the object store"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("instruction"), std::string::npos);
  }
}

TEST(ExecutorTest, WatchdogReportsBlockedWorkers) {
  Fixture s = Make(Ffn(2, 2), GPipe(2, 2), 1);
  CommPlan cp = s.plan.comms;
  EraseFirst(cp, 0, InstrKind::kSendStart);
  ExecutorOptions opts;
  opts.timeout_s = 0.3;
  try {
    RunPipelined(cp, s.plan.graph, s.params, s.batch, opts);
    FAIL();
  } catch (const DeadlockError& e) {
    const std::string what = e.what();
    EXPECT_NE(what.find("watchdog"), std::string::npos);
    EXPECT_NE(what.find("actor 1 blocked at instruction"), std::string::npos) << what;
  }
}

TEST(ExecutorTest, ChannelOrderViolationIsAFault) {
  Fixture s = Make(Ffn(2, 2), GPipe(2, 2), 1);
  CommPlan cp = s.plan.comms;
  auto& instrs = cp.programs[1].instrs;
  std::vector<size_t> starts;
  for (size_t i = 0; i < instrs.size(); ++i) {
    if (instrs[i].kind == InstrKind::kRecvStart) starts.push_back(i);
  }
  std::swap(instrs[starts[0]].buffer, instrs[starts[1]].buffer);
  EXPECT_THROW(RunPipelined(cp, s.plan.graph, s.params, s.batch), LivenessFault);
}

TEST(ExecutorTest, StepResultJsonRoundTrip) {
  StagedGraph g = BuildModel(Ffn(2, 1, 3));
  TensorMap params = InitParams(g, 1);
  StepResult r = RunReference(g, params, MakeBatch(g, 2, 2), 2);
  StepResult back = StepResultFromJson(StepResultToJson(r));
  EXPECT_TRUE(Compare(back, r).within(0.0));
  EXPECT_THROW(StepResultFromJson("{\"losses\": 3}"), ValidationError);
}

TEST(ExecutorPropertyTest, PipelinedMatchesReference) {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 60; ++trial) {
    const testing::VerifyCase c = testing::RandomVerifyCase(rng);
    const Schedule s = MakeSchedule(c.schedule, c.P, c.M, c.V);
    Fixture setup = Make(c.model, s, c.seed, {.commute = c.commute});
    PipelinedRun run = RunPipelined(setup.plan.comms, setup.plan.graph, setup.params, setup.batch);
    StepResult ref = RunReference(setup.model, setup.params, setup.batch, c.M);
    Comparison cmp = Compare(run.result, ref);
    ASSERT_TRUE(cmp.within(kTol)) << c.ToString() << ": " << cmp.worst << " " << cmp.max_rel_error;
    EXPECT_EQ(run.stats.driver_messages, 2 * c.P);
  }
}

TEST(ExecutorPropertyTest, RandomGraphsMatchReference) {
  std::mt19937_64 rng(77);
  int ran = 0;
  for (int trial = 0; trial < 40; ++trial) {
    StagedGraph g = testing::RandomGraph(3, 4, rng);
    const int S = g.num_markers() + 1;
    auto p = std::make_shared<const StagePartition>(DeriveBackward(PartitionStages(g)));
    if (p->num_stages != S || S > 4) continue;
    const int M = 1 + static_cast<int>(rng() % 4);
    Plan plan = BuildPlan(p, testing::RandomSchedule(S, M, 1, rng), {.commute = rng() % 2 == 0});
    TensorMap params = InitParams(g, trial);
    TensorMap batch = MakeBatch(g, M, trial + 100);
    PipelinedRun run = RunPipelined(plan.comms, plan.graph, params, batch);
    Comparison cmp = Compare(run.result, RunReference(g, params, batch, M));
    ASSERT_TRUE(cmp.within(kTol)) << "trial " << trial << ": " << cmp.worst;
    ++ran;
  }
  EXPECT_GT(ran, 10);
}

}  // namespace
}  // namespace mpmd
