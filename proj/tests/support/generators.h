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

#ifndef MPMD_TESTS_SUPPORT_GENERATORS_H_
#define MPMD_TESTS_SUPPORT_GENERATORS_H_

#include <cstdint>
#include <random>
#include <string>

#include "mpmd/ir.h"
#include "mpmd/schedules.h"

namespace mpmd::testing {

// A valid schedule drawn from a uniformly random ready-task choice at every
// step of a topological sweep.
Schedule RandomSchedule(int P, int M, int V, std::mt19937_64& rng);

// Graph with up to `max_stages` stages mixing the whole op vocabulary,
// including side branches that cross more than one stage boundary.
StagedGraph RandomGraph(int max_stages, int max_width, std::mt19937_64& rng);

ModelConfig RandomModelConfig(int max_layers, int max_width, int stages, std::mt19937_64& rng);

// One randomized end-to-end configuration: widths <= 16, at most 4 layers,
// P <= 4, M <= 8, any schedule family with V <= 2.
struct VerifyCase {
  ModelConfig model;
  std::string schedule;
  int P = 1;
  int M = 1;
  int V = 1;
  bool commute = true;
  uint64_t seed = 0;
  std::string ToString() const;
};

VerifyCase RandomVerifyCase(std::mt19937_64& rng);

}  // namespace mpmd::testing

#endif  // MPMD_TESTS_SUPPORT_GENERATORS_H_
