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

#include "mpmd/taskgraph.h"

#include <fmt/format.h>
#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "mpmd/errors.h"
#include "support/generators.h"

namespace mpmd {
namespace {

std::shared_ptr<const StagePartition> Partition(const ModelConfig& c) {
  return std::make_shared<const StagePartition>(DeriveBackward(PartitionStages(BuildModel(c))));
}

ModelConfig Ffn(int layers, int stages, bool tied = false) {
  ModelConfig c;
  c.layers = layers;
  c.width = 4;
  c.tied = tied;
  for (int b = 1; b < stages; ++b) c.yield_after.push_back(b * layers / stages);
  return c;
}

TaskGraph Placed(TaskGraph tg) { return InferOuterPlacement(std::move(tg)); }

TEST(UnrollTest, TwoStageOneFOneBCounts) {
  auto p = Partition(Ffn(2, 2));
  TaskGraph tg = Unroll(p, OneFOneB(2, 2));
  EXPECT_EQ(tg.CountTasks(TaskKind::kLoop), 8);
  EXPECT_EQ(tg.CountBuffers(BufferKind::kActivation), 2);
  EXPECT_EQ(tg.CountBuffers(BufferKind::kActivationGrad), 2);
  EXPECT_EQ(tg.CountBuffers(BufferKind::kStash), 4);
  EXPECT_EQ(tg.CountBuffers(BufferKind::kLoss), 3);  // two microbatch losses, one concat
  // Chains of length 2 for each of the two weights: one partial, one total.
  EXPECT_EQ(tg.CountBuffers(BufferKind::kParamGradPartial), 2);
  EXPECT_EQ(tg.CountBuffers(BufferKind::kParamGradTotal), 2);
  for (const Buffer& b : tg.buffers) {
    if (b.kind == BufferKind::kParamGradTotal) {
      const Buffer& prev = tg.buffer(tg.task(b.producer).consumes.back());
      EXPECT_TRUE(prev.accumulator);
      EXPECT_TRUE(prev.producer.valid());
      EXPECT_TRUE(tg.buffer(tg.task(prev.producer).consumes.back()).kind !=
                  BufferKind::kParamGradPartial);
    }
  }
}

// Independent count from the partition: every (microbatch, crossing) pair
// contributes one activation and one gradient bundle, every (microbatch,
// stage) with a non-empty stash one stash buffer.
TEST(UnrollTest, CountsMatchEnumeration) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 30; ++trial) {
    const int P = 1 + static_cast<int>(rng() % 3);
    const int V = 1 + static_cast<int>(rng() % 2);
    const int M = P * (1 + static_cast<int>(rng() % 3));
    auto p = std::make_shared<const StagePartition>(
        DeriveBackward(PartitionStages(BuildModel(testing::RandomModelConfig(6, 5, P * V, rng)))));
    TaskGraph tg = Unroll(p, testing::RandomSchedule(P, M, V, rng));
    int crossings = static_cast<int>(p->crossings.size());
    int stashes = 0;
    for (const auto& b : p->backward) stashes += b.stash.empty() ? 0 : 1;
    EXPECT_EQ(tg.CountBuffers(BufferKind::kActivation), M * crossings);
    EXPECT_EQ(tg.CountBuffers(BufferKind::kActivationGrad), M * crossings);
    EXPECT_EQ(tg.CountBuffers(BufferKind::kStash), M * stashes);
    EXPECT_EQ(tg.CountTasks(TaskKind::kLoop), 2 * M * P * V);
    EXPECT_EQ(tg.CountTasks(TaskKind::kOptimizerUpdate), static_cast<int>(p->param_stages.size()));
  }
}

TEST(UnrollTest, SingleActorHasNoTransfers) {
  TaskGraph tg = Placed(Unroll(Partition(Ffn(1, 1)), GPipe(1, 1)));
  EXPECT_EQ(tg.CountTasks(TaskKind::kLoop), 2);
  EXPECT_EQ(tg.CrossActorTransfers(), 0);
}

std::vector<std::string> Signature(const TaskGraph& tg) {
  std::vector<std::string> out;
  for (const Task& t : tg.tasks) {
    std::vector<std::string> in, prod;
    for (BufferId b : t.consumes) in.push_back(tg.buffer(b).name);
    for (BufferId b : t.produces) {
      prod.push_back(tg.buffer(b).kind == BufferKind::kParamGradPartial ||
                             tg.buffer(b).kind == BufferKind::kParamGradTotal
                         ? "grad"
                         : tg.buffer(b).name);
    }
    std::sort(in.begin(), in.end());
    std::sort(prod.begin(), prod.end());
    std::string s = t.name + ":";
    for (const auto& x : in) {
      if (x.rfind("acc", 0) != 0 && x.rfind("grad_total", 0) != 0) s += x + ",";
    }
    s += "|";
    for (const auto& x : prod) s += x + ",";
    out.push_back(s);
  }
  std::sort(out.begin(), out.end());
  return out;
}

TEST(UnrollTest, StructureIndependentOfScheduleOrder) {
  auto p = Partition(Ffn(4, 4));
  TaskGraph a = Unroll(p, GPipe(4, 4));
  TaskGraph b = Unroll(p, OneFOneB(4, 4));
  EXPECT_EQ(Signature(a), Signature(b));
  EXPECT_EQ(a.buffers.size(), b.buffers.size());
  auto names = [](const TaskGraph& tg) {
    std::vector<std::string> out;
    for (TaskRef r : tg.actor_order.back()) out.push_back(tg.task(r).name);
    return out;
  };
  EXPECT_NE(names(a), names(b));
}

TEST(UnrollTest, StageCountMismatch) {
  auto p = Partition(Ffn(2, 2));
  EXPECT_THROW(Unroll(p, GPipe(4, 2)), ValidationError);
}

TEST(CommuteTest, TiedParameterTransfersDrop) {
  auto p = Partition(Ffn(4, 4, /*tied=*/true));
  ASSERT_EQ(p->shared_params.size(), 1u);
  const ValueId tied = p->shared_params.begin()->first;
  TaskGraph naive = Placed(Unroll(p, OneFOneB(4, 4)));
  TaskGraph commuted = Placed(CommuteGradAccumulation(Unroll(p, OneFOneB(4, 4))));
  EXPECT_EQ(naive.CrossActorGradTransfers(tied), 4);
  EXPECT_EQ(commuted.CrossActorGradTransfers(tied), 1);
  EXPECT_LE(commuted.CrossActorTransfers(), naive.CrossActorTransfers());
  EXPECT_EQ(commuted.CountTasks(TaskKind::kGradMerge), 1);
  for (const Task& t : commuted.tasks) {
    if (t.kind == TaskKind::kGradMerge) EXPECT_EQ(t.actor, 0);
  }
}

TEST(CommuteTest, IdentityWithoutSharedParams) {
  auto p = Partition(Ffn(3, 3));
  TaskGraph a = Unroll(p, OneFOneB(3, 3));
  TaskGraph b = CommuteGradAccumulation(a);
  EXPECT_EQ(Signature(a), Signature(b));
  EXPECT_EQ(a.buffers.size(), b.buffers.size());
}

TEST(CommuteTest, ThreeWaySharing) {
  GraphBuilder b;
  ValueId x = b.Input({{2, 3}});
  ValueId w = b.Parameter({{3, 3}}, "w");
  ValueId h = b.Yield(b.Relu(b.Matmul(x, w)));
  h = b.Yield(b.Relu(b.Matmul(h, w)));
  h = b.Matmul(h, w);
  b.MarkOutput(b.SubSampleLoss(h, b.Input({{2, 3}})));
  auto p = std::make_shared<const StagePartition>(DeriveBackward(PartitionStages(b.Build())));
  ASSERT_EQ(p->shared_params.at(w).size(), 3u);
  TaskGraph naive = Placed(Unroll(p, GPipe(3, 5)));
  TaskGraph commuted = Placed(CommuteGradAccumulation(Unroll(p, GPipe(3, 5))));
  EXPECT_EQ(naive.CrossActorGradTransfers(w), 10);
  EXPECT_EQ(commuted.CrossActorGradTransfers(w), 2);
  EXPECT_EQ(commuted.CountTasks(TaskKind::kGradMerge), 2);
}

TEST(PlacementTest, UpdatesFollowGradients) {
  auto p = Partition(Ffn(2, 2));
  TaskGraph tg = Placed(Unroll(p, OneFOneB(2, 2)));
  for (const Task& t : tg.tasks) {
    if (t.kind != TaskKind::kOptimizerUpdate) continue;
    const int stage = p->param_stages.at(t.param).front();
    EXPECT_EQ(t.actor, stage % 2);
  }
  for (const Buffer& b : tg.buffers) {
    if (!b.learning_rate) continue;
    for (TaskRef c : b.consumers) EXPECT_EQ(tg.task(c).actor, b.actor);
  }
  // One lr replica per actor, none transferred.
  int lr = 0;
  for (const Buffer& b : tg.buffers) lr += b.learning_rate ? 1 : 0;
  EXPECT_EQ(lr, 2);
  for (const Task& t : tg.tasks) {
    if (t.kind == TaskKind::kLossConcat) EXPECT_EQ(t.actor, 1);
  }
  // Epilogue after loop tasks, merges < updates < loss-concat.
  for (const auto& order : tg.actor_order) {
    int phase = 0;
    for (TaskRef r : order) {
      const int k = static_cast<int>(tg.task(r).kind);
      EXPECT_GE(k, phase);
      phase = k;
    }
  }
}

TEST(PlacementTest, PinConflictNamesOps) {
  auto p = Partition(Ffn(2, 2));
  const ValueId w0 = p->param_stages.begin()->first;
  OuterPlacementOptions opts;
  opts.param_pins[w0] = 1;
  try {
    InferOuterPlacement(Unroll(p, OneFOneB(2, 2)), opts);
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find(fmt::format("op {}", p->graph.producer(w0).id.value())),
              std::string::npos)
        << e.what();
  }
  opts.param_pins[w0] = 0;
  EXPECT_NO_THROW(InferOuterPlacement(Unroll(p, OneFOneB(2, 2)), opts));
}

TEST(TaskGraphPropertyTest, PassesPreserveInvariants) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 40; ++trial) {
    const int P = 1 + static_cast<int>(rng() % 4);
    const int V = 1 + static_cast<int>(rng() % 2);
    const int M = 1 + static_cast<int>(rng() % 8);
    ModelConfig c = testing::RandomModelConfig(8, 4, P * V, rng);
    auto p = std::make_shared<const StagePartition>(DeriveBackward(PartitionStages(BuildModel(c))));
    const Schedule s = testing::RandomSchedule(P, M, V, rng);
    TaskGraph naive = Unroll(p, s);
    EXPECT_NO_THROW(naive.TopologicalOrder());
    TaskGraph comm = CommuteGradAccumulation(naive);
    EXPECT_NO_THROW(comm.TopologicalOrder());
    TaskGraph pn = InferOuterPlacement(naive);
    TaskGraph pc = InferOuterPlacement(comm);
    EXPECT_LE(pc.CrossActorTransfers(), pn.CrossActorTransfers());
    for (const TaskGraph* tg : {&pn, &pc}) {
      for (const Task& t : tg->tasks) {
        EXPECT_GE(t.actor, 0);
        EXPECT_LT(t.actor, P);
      }
    }
  }
}

TEST(TaskGraphJsonTest, Deterministic) {
  auto p = Partition(Ffn(4, 2, true));
  const std::string a = TaskGraphToJson(Placed(Unroll(p, GPipe(2, 2))));
  const std::string b = TaskGraphToJson(Placed(Unroll(p, GPipe(2, 2))));
  EXPECT_EQ(a, b);
  EXPECT_NE(a.find("\"edges\""), std::string::npos);
}

}  // namespace
}  // namespace mpmd
