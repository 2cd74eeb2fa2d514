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

#include "mpmd/ops.h"

#include <gtest/gtest.h>

#include <random>

#include "mpmd/errors.h"
#include "support/fd_oracle.h"
#include "support/generators.h"

namespace mpmd {
namespace {

double MaxRelative(const std::map<ValueId, Tensor>& a, const std::map<ValueId, Tensor>& b) {
  double worst = 0.0;
  for (const auto& [v, t] : b) worst = std::max(worst, RelativeError(a.at(v), t));
  return worst;
}

TEST(KernelTest, ForwardValues) {
  OpNode mm{OpId(0), OpKind::kMatmul, {}, ValueId(0), {{1, 2}}};
  Tensor a({1, 2}, {1, 2});
  Tensor b({2, 2}, {1, 0, 3, 1});
  const Tensor* in[] = {&a, &b};
  Tensor c = EvaluateOp(mm, in);
  EXPECT_EQ(c[0], 7.0);
  EXPECT_EQ(c[1], 2.0);

  OpNode loss{OpId(1), OpKind::kSubSampleLoss, {}, ValueId(1), {{}}};
  Tensor t({1, 2}, {0, 0});
  const Tensor* lin[] = {&a, &t};
  EXPECT_EQ(EvaluateOp(loss, lin)[0], 2.5);

  OpNode cat{OpId(2), OpKind::kConcat, {}, ValueId(2), {{1, 4}}};
  const Tensor* cin[] = {&a, &a};
  EXPECT_EQ(EvaluateOp(cat, cin).dims(), (std::vector<int64_t>{1, 4}));

  OpNode bc{OpId(3), OpKind::kBroadcast, {}, ValueId(3), {{3, 2}}};
  const Tensor* bin[] = {&a};
  Tensor bb = EvaluateOp(bc, bin);
  EXPECT_EQ(bb.at(2, 1), 2.0);

  OpNode leaf{OpId(4), OpKind::kInputRead, {}, ValueId(4), {{1}}};
  EXPECT_THROW(EvaluateOp(leaf, {}), Error);
}

TEST(GradientTest, TwoStageWidthFourMatchesFiniteDifferences) {
  ModelConfig c;
  c.layers = 2;
  c.width = 4;
  c.yield_after = {1};
  StagedGraph g = BuildModel(c);
  ValueEnv leaves = testing::RandomLeaves(g, 11);
  auto analytic = testing::AnalyticGrads(g, leaves);
  auto fd = testing::FiniteDifferenceGrads(g, leaves);
  EXPECT_LT(MaxRelative(analytic, fd), 1e-6);
}

TEST(GradientTest, TiedBiasModel) {
  ModelConfig c;
  c.layers = 3;
  c.width = 5;
  c.tied = true;
  c.bias = true;
  c.yield_every = 1;
  StagedGraph g = BuildModel(c);
  ValueEnv leaves = testing::RandomLeaves(g, 3);
  EXPECT_LT(
      MaxRelative(testing::AnalyticGrads(g, leaves), testing::FiniteDifferenceGrads(g, leaves)),
      1e-6);
}

TEST(GradientPropertyTest, RandomGraphsMatchFiniteDifferences) {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 60; ++trial) {
    StagedGraph g = testing::RandomGraph(4, 8, rng);
    ValueEnv leaves = testing::RandomLeaves(g, rng());
    EXPECT_LT(
        MaxRelative(testing::AnalyticGrads(g, leaves), testing::FiniteDifferenceGrads(g, leaves)),
        1e-5)
        << "trial " << trial;
  }
}

TEST(RunForwardTest, MissingLeafIsAnError) {
  ModelConfig c;
  StagedGraph g = BuildModel(c);
  ValueEnv env;
  std::vector<size_t> all(g.ops().size());
  for (size_t i = 0; i < all.size(); ++i) all[i] = i;
  EXPECT_THROW(RunForward(g, all, env), Error);
}

}  // namespace
}  // namespace mpmd
