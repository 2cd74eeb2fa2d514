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

// Lowering of a placed task graph into per-actor instruction programs with
// asynchronous point-to-point transfers, buffer deletions, and checks.

#ifndef MPMD_COMMS_H_
#define MPMD_COMMS_H_

#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "mpmd/ids.h"
#include "mpmd/taskgraph.h"

namespace mpmd {

enum class InstrKind {
  kRunTask,
  kSendStart,
  kSendWait,
  kRecvStart,
  kRecvWait,
  kDelete,
  kFlushPendingDeletes,
};

std::string_view InstrKindName(InstrKind kind);

struct Instruction {
  InstrKind kind = InstrKind::kRunTask;
  TaskRef task;     // RunTask
  BufferId buffer;  // Send*, Recv*, Delete
  int peer = -1;    // dst for sends, src for receives
  int seq = -1;     // per directed actor pair

  static Instruction Run(TaskRef t) { return {InstrKind::kRunTask, t, {}, -1, -1}; }
  static Instruction SendStart(BufferId b, int dst, int seq) {
    return {InstrKind::kSendStart, {}, b, dst, seq};
  }
  static Instruction SendWait(BufferId b, int dst, int seq) {
    return {InstrKind::kSendWait, {}, b, dst, seq};
  }
  static Instruction RecvStart(BufferId b, int src, int seq) {
    return {InstrKind::kRecvStart, {}, b, src, seq};
  }
  static Instruction RecvWait(BufferId b, int src, int seq) {
    return {InstrKind::kRecvWait, {}, b, src, seq};
  }
  static Instruction Delete(BufferId b) { return {InstrKind::kDelete, {}, b, -1, -1}; }
  static Instruction Flush() { return {InstrKind::kFlushPendingDeletes, {}, {}, -1, -1}; }

  bool operator==(const Instruction&) const = default;
};

struct ActorProgram {
  int actor = 0;
  std::vector<Instruction> instrs;
  // Start index of each separately dispatched segment; a single segment once
  // fused.
  std::vector<size_t> segments;
};

struct CommPlan {
  int num_actors = 1;
  std::vector<ActorProgram> programs;
  // (src, dst) -> buffers in send order.
  std::map<std::pair<int, int>, std::vector<BufferId>> channels;
  bool deletions_inserted = false;
  bool fused = false;

  int num_segments() const;
  int num_transfers() const;
  // Messages between driver and workers for one step: one dispatch per
  // segment plus one result gather per actor.
  int driver_messages() const { return num_segments() + num_actors; }
};

// Requires a placed task graph. Throws DeadlockError naming a blocked chain
// when no global order consistent with every actor's order exists.
CommPlan InferComms(const TaskGraph& tg);

// Per-task blocking lowering: receive operands, run, send and wait on each
// result. Used as a negative reference.
CommPlan NaiveLowering(const TaskGraph& tg);

struct WaitNode {
  int actor = 0;
  size_t index = 0;  // into programs[actor].instrs
  auto operator<=>(const WaitNode&) const = default;
};

// Dependencies between blocking wait instructions: each wait depends on the
// previous wait in its program and on the latest wait at or before the remote
// instruction that satisfies it.
struct WaitGraph {
  std::vector<WaitNode> nodes;
  std::map<WaitNode, std::set<WaitNode>> deps;
};

WaitGraph BuildWaitGraph(const CommPlan& cp);

struct DeadlockReport {
  std::vector<std::string> violations;  // order mismatches, unmatched starts
  std::vector<WaitNode> cycle;          // each node waits on the next
  bool ok() const { return violations.empty() && cycle.empty(); }
  std::string ToString(const CommPlan& cp, const TaskGraph& tg) const;
};

DeadlockReport CheckDeadlockFree(const CommPlan& cp);

CommPlan InsertDeletions(CommPlan cp, const TaskGraph& tg);

// Collapses segments and statically checks that no instruction needs
// coordination other than point-to-point transfers. Throws Error on failure.
CommPlan Fuse(CommPlan cp, const TaskGraph& tg);

struct ReplayReport {
  std::vector<std::string> violations;
  std::vector<std::set<BufferId>> live_at_end;
  std::vector<int> peak_live;
  bool ok() const { return violations.empty(); }
};

// Executes the programs symbolically in a valid interleaving and checks that
// no instruction touches a deleted or absent buffer and that each store ends
// holding exactly the actor's parameters, optimizer state and outputs.
ReplayReport SymbolicReplay(const CommPlan& cp, const TaskGraph& tg);

std::string InstructionToString(const Instruction& ins, const TaskGraph& tg);
std::string CommPlanToJson(const CommPlan& cp, const TaskGraph& tg);

}  // namespace mpmd

#endif  // MPMD_COMMS_H_
