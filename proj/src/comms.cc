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

#include "mpmd/comms.h"

#include <fmt/format.h>
#include <fmt/ranges.h>

#include <algorithm>
#include <tuple>

#include "json_util.h"
#include "mpmd/errors.h"

namespace mpmd {

using internal::Json;

std::string_view InstrKindName(InstrKind kind) {
  switch (kind) {
    case InstrKind::kRunTask:
      return "run";
    case InstrKind::kSendStart:
      return "send_start";
    case InstrKind::kSendWait:
      return "send_wait";
    case InstrKind::kRecvStart:
      return "recv_start";
    case InstrKind::kRecvWait:
      return "recv_wait";
    case InstrKind::kDelete:
      return "delete";
    case InstrKind::kFlushPendingDeletes:
      return "flush_pending_deletes";
  }
  return "?";
}

int CommPlan::num_segments() const {
  int n = 0;
  for (const ActorProgram& p : programs) n += static_cast<int>(p.segments.size());
  return n;
}

int CommPlan::num_transfers() const {
  int n = 0;
  for (const auto& [key, list] : channels) n += static_cast<int>(list.size());
  return n;
}

namespace {

bool IsWait(InstrKind k) { return k == InstrKind::kSendWait || k == InstrKind::kRecvWait; }

std::vector<int> RemoteConsumers(const TaskGraph& tg, const Buffer& b) {
  std::set<int> out;
  for (TaskRef c : b.consumers) {
    if (tg.task(c).actor != b.actor) out.insert(tg.task(c).actor);
  }
  return {out.begin(), out.end()};
}

CommPlan EmptyPlan(const TaskGraph& tg) {
  if (!tg.placed) throw Error("communication inference requires a placed task graph");
  CommPlan cp;
  cp.num_actors = tg.num_actors;
  cp.programs.resize(static_cast<size_t>(tg.num_actors));
  for (int a = 0; a < tg.num_actors; ++a) cp.programs[static_cast<size_t>(a)].actor = a;
  return cp;
}

}  // namespace

CommPlan InferComms(const TaskGraph& tg) {
  CommPlan cp = EmptyPlan(tg);
  const int P = tg.num_actors;
  std::vector<bool> done(tg.tasks.size(), false);
  std::vector<size_t> head(static_cast<size_t>(P), 0);
  std::map<std::pair<int, int>, int> next_seq;
  std::map<std::pair<int, BufferId>, int> recv_seq;
  std::set<std::pair<int, BufferId>> waited;
  std::vector<std::vector<Instruction>> send_waits(static_cast<size_t>(P));
  std::vector<bool> started(static_cast<size_t>(P), false);

  auto blocker = [&](const Task& t) -> const Buffer* {
    for (BufferId c : t.consumes) {
      const Buffer& b = tg.buffer(c);
      if (b.producer.valid() && !done[b.producer.index()]) return &b;
    }
    return nullptr;
  };

  size_t remaining = tg.tasks.size();
  while (remaining > 0) {
    int pick = -1;
    for (int a = 0; a < P && pick < 0; ++a) {
      const auto& order = tg.actor_order[static_cast<size_t>(a)];
      const size_t h = head[static_cast<size_t>(a)];
      if (h < order.size() && blocker(tg.task(order[h])) == nullptr) pick = a;
    }
    if (pick < 0) {
      std::vector<std::string> chain;
      for (int a = 0; a < P; ++a) {
        const auto& order = tg.actor_order[static_cast<size_t>(a)];
        const size_t h = head[static_cast<size_t>(a)];
        if (h >= order.size()) continue;
        const Task& t = tg.task(order[h]);
        const Buffer* b = blocker(t);
        chain.push_back(fmt::format("actor {} at {} waits for {} from {} on actor {}", a, t.name,
                                    b->name, tg.task(b->producer).name, b->actor));
      }
      throw DeadlockError(fmt::format("no global task order exists: {}", fmt::join(chain, "; ")));
    }
    const TaskRef r = tg.actor_order[static_cast<size_t>(pick)][head[static_cast<size_t>(pick)]++];
    const Task& t = tg.task(r);
    ActorProgram& prog = cp.programs[static_cast<size_t>(pick)];
    if (!started[static_cast<size_t>(pick)]) {
      prog.segments.push_back(0);
      started[static_cast<size_t>(pick)] = true;
    } else {
      prog.segments.push_back(prog.instrs.size());
    }
    for (BufferId c : t.consumes) {
      const Buffer& b = tg.buffer(c);
      if (b.actor == pick || !waited.insert({pick, c}).second) continue;
      prog.instrs.push_back(Instruction::RecvWait(c, b.actor, recv_seq.at({pick, c})));
    }
    prog.instrs.push_back(Instruction::Run(r));
    for (BufferId out : t.produces) {
      for (int d : RemoteConsumers(tg, tg.buffer(out))) {
        const int seq = next_seq[{pick, d}]++;
        prog.instrs.push_back(Instruction::SendStart(out, d, seq));
        cp.programs[static_cast<size_t>(d)].instrs.push_back(
            Instruction::RecvStart(out, pick, seq));
        recv_seq[{d, out}] = seq;
        cp.channels[{pick, d}].push_back(out);
        send_waits[static_cast<size_t>(pick)].push_back(Instruction::SendWait(out, d, seq));
      }
    }
    done[r.index()] = true;
    --remaining;
  }
  for (int a = 0; a < P; ++a) {
    auto& prog = cp.programs[static_cast<size_t>(a)];
    if (prog.segments.empty()) prog.segments.push_back(0);
    for (const Instruction& w : send_waits[static_cast<size_t>(a)]) prog.instrs.push_back(w);
  }
  return cp;
}

CommPlan NaiveLowering(const TaskGraph& tg) {
  CommPlan cp = EmptyPlan(tg);
  std::map<std::pair<int, int>, int> send_seq, recv_seq;
  for (int a = 0; a < tg.num_actors; ++a) {
    ActorProgram& prog = cp.programs[static_cast<size_t>(a)];
    std::set<BufferId> received;
    for (TaskRef r : tg.actor_order[static_cast<size_t>(a)]) {
      const Task& t = tg.task(r);
      prog.segments.push_back(prog.instrs.size());
      for (BufferId c : t.consumes) {
        const Buffer& b = tg.buffer(c);
        if (b.actor == a || !received.insert(c).second) continue;
        const int seq = recv_seq[{b.actor, a}]++;
        prog.instrs.push_back(Instruction::RecvStart(c, b.actor, seq));
        prog.instrs.push_back(Instruction::RecvWait(c, b.actor, seq));
      }
      prog.instrs.push_back(Instruction::Run(r));
      for (BufferId out : t.produces) {
        for (int d : RemoteConsumers(tg, tg.buffer(out))) {
          const int seq = send_seq[{a, d}]++;
          prog.instrs.push_back(Instruction::SendStart(out, d, seq));
          prog.instrs.push_back(Instruction::SendWait(out, d, seq));
          cp.channels[{a, d}].push_back(out);
        }
      }
    }
    if (prog.segments.empty()) prog.segments.push_back(0);
  }
  return cp;
}

namespace {

// (actor, peer, seq) -> index of the instruction of the given kind.
using Locator = std::map<std::tuple<int, int, int>, size_t>;

Locator Locate(const CommPlan& cp, InstrKind kind) {
  Locator out;
  for (const ActorProgram& p : cp.programs) {
    for (size_t i = 0; i < p.instrs.size(); ++i) {
      const Instruction& ins = p.instrs[i];
      if (ins.kind == kind) out.emplace(std::make_tuple(p.actor, ins.peer, ins.seq), i);
    }
  }
  return out;
}

}  // namespace

WaitGraph BuildWaitGraph(const CommPlan& cp) {
  WaitGraph g;
  const Locator send_start = Locate(cp, InstrKind::kSendStart);
  const Locator recv_wait = Locate(cp, InstrKind::kRecvWait);
  // Latest wait strictly before each index.
  std::vector<std::vector<long>> prev_wait(cp.programs.size());
  for (const ActorProgram& p : cp.programs) {
    auto& pw = prev_wait[static_cast<size_t>(p.actor)];
    pw.assign(p.instrs.size() + 1, -1);
    long last = -1;
    for (size_t i = 0; i < p.instrs.size(); ++i) {
      pw[i] = last;
      if (IsWait(p.instrs[i].kind)) {
        last = static_cast<long>(i);
        g.nodes.push_back({p.actor, i});
      }
    }
    pw[p.instrs.size()] = last;
  }
  for (const WaitNode& n : g.nodes) {
    auto& deps = g.deps[n];
    const Instruction& ins = cp.programs[static_cast<size_t>(n.actor)].instrs[n.index];
    const long own = prev_wait[static_cast<size_t>(n.actor)][n.index];
    if (own >= 0) deps.insert({n.actor, static_cast<size_t>(own)});
    if (ins.kind == InstrKind::kRecvWait) {
      auto it = send_start.find({ins.peer, n.actor, ins.seq});
      if (it == send_start.end()) continue;
      const long w = prev_wait[static_cast<size_t>(ins.peer)][it->second];
      if (w >= 0) deps.insert({ins.peer, static_cast<size_t>(w)});
    } else {
      auto it = recv_wait.find({ins.peer, n.actor, ins.seq});
      if (it != recv_wait.end()) deps.insert({ins.peer, it->second});
    }
  }
  return g;
}

DeadlockReport CheckDeadlockFree(const CommPlan& cp) {
  DeadlockReport r;
  std::map<std::pair<int, int>, std::vector<BufferId>> sent, received;
  for (const ActorProgram& p : cp.programs) {
    std::map<std::pair<InstrKind, int>, int> expect;
    std::map<std::tuple<InstrKind, int, int>, size_t> open;
    for (size_t i = 0; i < p.instrs.size(); ++i) {
      const Instruction& ins = p.instrs[i];
      switch (ins.kind) {
        case InstrKind::kSendStart:
        case InstrKind::kRecvStart: {
          int& next = expect[{ins.kind, ins.peer}];
          if (ins.seq != next) {
            r.violations.push_back(
                fmt::format("actor {} instruction {}: {} seq {} to/from actor "
                            "{}, expected {}",
                            p.actor, i, InstrKindName(ins.kind), ins.seq, ins.peer, next));
          }
          next = ins.seq + 1;
          open[{ins.kind, ins.peer, ins.seq}] = i;
          if (ins.kind == InstrKind::kSendStart) {
            sent[{p.actor, ins.peer}].push_back(ins.buffer);
          } else {
            received[{ins.peer, p.actor}].push_back(ins.buffer);
          }
          break;
        }
        case InstrKind::kSendWait:
        case InstrKind::kRecvWait: {
          const InstrKind start =
              ins.kind == InstrKind::kSendWait ? InstrKind::kSendStart : InstrKind::kRecvStart;
          if (open.erase({start, ins.peer, ins.seq}) == 0) {
            r.violations.push_back(
                fmt::format("actor {} instruction {}: {} seq {} without a "
                            "preceding start",
                            p.actor, i, InstrKindName(ins.kind), ins.seq));
          }
          break;
        }
        default:
          break;
      }
    }
    for (const auto& [key, i] : open) {
      r.violations.push_back(fmt::format("actor {} instruction {}: {} seq {} is never waited on",
                                         p.actor, i, InstrKindName(std::get<0>(key)),
                                         std::get<2>(key)));
    }
  }
  std::set<std::pair<int, int>> pairs;
  for (const auto& [k, v] : sent) pairs.insert(k);
  for (const auto& [k, v] : received) pairs.insert(k);
  for (const auto& key : pairs) {
    const auto& s = sent[key];
    const auto& q = received[key];
    if (s == q) continue;
    size_t k = 0;
    while (k < s.size() && k < q.size() && s[k] == q[k]) ++k;
    r.violations.push_back(
        fmt::format("channel {}->{} order mismatch at position {}: sends {} buffers, receives {}",
                    key.first, key.second, k, s.size(), q.size()));
  }

  const WaitGraph g = BuildWaitGraph(cp);
  std::map<WaitNode, int> color;
  std::vector<WaitNode> stack;
  // Iterative DFS; a grey successor closes a cycle.
  for (const WaitNode& root : g.nodes) {
    if (color[root] != 0 || !r.cycle.empty()) continue;
    std::vector<std::pair<WaitNode, std::set<WaitNode>::const_iterator>> frames;
    color[root] = 1;
    frames.push_back({root, g.deps.at(root).begin()});
    while (!frames.empty() && r.cycle.empty()) {
      auto& [node, it] = frames.back();
      if (it == g.deps.at(node).end()) {
        color[node] = 2;
        frames.pop_back();
        continue;
      }
      const WaitNode next = *it++;
      if (color[next] == 1) {
        size_t k = 0;
        while (frames[k].first != next) ++k;
        for (; k < frames.size(); ++k) r.cycle.push_back(frames[k].first);
      } else if (color[next] == 0) {
        color[next] = 1;
        frames.push_back({next, g.deps.at(next).begin()});
      }
    }
  }
  return r;
}

std::string DeadlockReport::ToString(const CommPlan& cp, const TaskGraph& tg) const {
  if (ok()) return "deadlock-free";
  std::vector<std::string> parts = violations;
  if (!cycle.empty()) {
    std::vector<std::string> names;
    for (const WaitNode& n : cycle) {
      names.push_back(fmt::format(
          "A{}.{}", n.actor,
          InstructionToString(cp.programs[static_cast<size_t>(n.actor)].instrs[n.index], tg)));
    }
    names.push_back(names.front());
    parts.push_back("wait cycle: " + fmt::format("{}", fmt::join(names, " -> ")));
  }
  return fmt::format("{}", fmt::join(parts, "; "));
}

CommPlan InsertDeletions(CommPlan cp, const TaskGraph& tg) {
  if (cp.deletions_inserted) return cp;
  for (ActorProgram& prog : cp.programs) {
    const int a = prog.actor;
    std::map<BufferId, size_t> last_use;
    std::map<BufferId, bool> via_send;
    auto touch = [&](BufferId b, size_t i, bool send) {
      const Buffer& buf = tg.buffer(b);
      if (buf.persistent() || buf.is_output) return;
      last_use[b] = i;
      via_send[b] = send;
    };
    for (size_t i = 0; i < prog.instrs.size(); ++i) {
      const Instruction& ins = prog.instrs[i];
      switch (ins.kind) {
        case InstrKind::kRunTask: {
          const Task& t = tg.task(ins.task);
          for (BufferId b : t.produces) touch(b, i, false);
          for (BufferId b : t.consumes) touch(b, i, false);
          for (BufferId b : t.mutates) touch(b, i, false);
          break;
        }
        case InstrKind::kSendStart:
          touch(ins.buffer, i, true);
          break;
        case InstrKind::kRecvWait:
          touch(ins.buffer, i, false);
          break;
        default:
          break;
      }
    }
    std::map<size_t, std::vector<BufferId>> at;
    for (const auto& [b, i] : last_use) at[i].push_back(b);
    (void)a;

    std::vector<Instruction> out;
    std::vector<size_t> remap(prog.instrs.size());
    bool pending = false;
    for (size_t i = 0; i < prog.instrs.size(); ++i) {
      remap[i] = out.size();
      out.push_back(prog.instrs[i]);
      auto it = at.find(i);
      if (it == at.end()) continue;
      if (pending) {
        out.push_back(Instruction::Flush());
        pending = false;
      }
      for (BufferId b : it->second) {
        out.push_back(Instruction::Delete(b));
        pending = pending || via_send[b];
      }
    }
    out.push_back(Instruction::Flush());
    for (size_t& s : prog.segments) s = s < remap.size() ? remap[s] : out.size() - 1;
    prog.instrs = std::move(out);
  }
  cp.deletions_inserted = true;
  return cp;
}

CommPlan Fuse(CommPlan cp, const TaskGraph& tg) {
  std::vector<std::string> problems;
  for (const ActorProgram& p : cp.programs) {
    for (size_t i = 0; i < p.instrs.size(); ++i) {
      const Instruction& ins = p.instrs[i];
      switch (ins.kind) {
        case InstrKind::kRunTask:
          if (tg.task(ins.task).actor != p.actor) {
            problems.push_back(fmt::format("actor {} instruction {} runs {} placed on actor {}",
                                           p.actor, i, tg.task(ins.task).name,
                                           tg.task(ins.task).actor));
          }
          break;
        case InstrKind::kSendStart:
        case InstrKind::kSendWait:
        case InstrKind::kRecvStart:
        case InstrKind::kRecvWait:
          if (ins.peer < 0 || ins.peer >= cp.num_actors || ins.peer == p.actor) {
            problems.push_back(
                fmt::format("actor {} instruction {} has invalid peer {}", p.actor, i, ins.peer));
          }
          break;
        case InstrKind::kDelete:
        case InstrKind::kFlushPendingDeletes:
          break;
      }
    }
  }
  if (!problems.empty()) {
    throw Error(fmt::format("fusion check failed: {}", fmt::join(problems, "; ")));
  }
  for (ActorProgram& p : cp.programs) p.segments = {0};
  cp.fused = true;
  return cp;
}

ReplayReport SymbolicReplay(const CommPlan& cp, const TaskGraph& tg) {
  ReplayReport r;
  const size_t P = cp.programs.size();
  std::vector<std::set<BufferId>> store(P), pending(P), deleted(P);
  std::vector<std::map<BufferId, int>> outstanding(P);
  std::map<std::tuple<int, int, int>, BufferId> in_flight;  // (src, dst, seq)
  std::map<std::tuple<int, int, int>, BufferId> posted;     // (dst, src, seq)
  std::set<std::tuple<int, int, int>> delivered;            // (src, dst, seq)
  std::vector<size_t> pc(P, 0);
  r.peak_live.assign(P, 0);
  for (const Buffer& b : tg.buffers) {
    if (b.preloaded() && b.actor >= 0) store[static_cast<size_t>(b.actor)].insert(b.id);
  }
  auto fail = [&](size_t a, size_t i, const std::string& what) {
    r.violations.push_back(fmt::format("actor {} instruction {}: {}", a, i, what));
  };
  auto need = [&](size_t a, size_t i, BufferId b, std::string_view use) {
    if (pending[a].contains(b) || (deleted[a].contains(b) && !store[a].contains(b))) {
      fail(a, i, fmt::format("{} reads {} after its deletion", use, tg.buffer(b).name));
    } else if (!store[a].contains(b)) {
      fail(a, i, fmt::format("{} reads absent buffer {}", use, tg.buffer(b).name));
    }
  };

  bool progress = true;
  while (progress) {
    progress = false;
    for (size_t a = 0; a < P; ++a) {
      const auto& instrs = cp.programs[a].instrs;
      while (pc[a] < instrs.size()) {
        const size_t i = pc[a];
        const Instruction& ins = instrs[i];
        bool blocked = false;
        switch (ins.kind) {
          case InstrKind::kRunTask: {
            const Task& t = tg.task(ins.task);
            for (BufferId b : t.consumes) need(a, i, b, t.name);
            for (BufferId b : t.mutates) need(a, i, b, t.name);
            for (BufferId b : t.produces) store[a].insert(b);
            break;
          }
          case InstrKind::kSendStart:
            need(a, i, ins.buffer, "send");
            in_flight[{static_cast<int>(a), ins.peer, ins.seq}] = ins.buffer;
            ++outstanding[a][ins.buffer];
            break;
          case InstrKind::kSendWait:
            blocked = !delivered.contains({static_cast<int>(a), ins.peer, ins.seq});
            break;
          case InstrKind::kRecvStart:
            posted[{static_cast<int>(a), ins.peer, ins.seq}] = ins.buffer;
            break;
          case InstrKind::kRecvWait: {
            auto msg = in_flight.find({ins.peer, static_cast<int>(a), ins.seq});
            if (msg == in_flight.end()) {
              blocked = true;
              break;
            }
            const BufferId buf = msg->second;
            const int seq = ins.seq;
            in_flight.erase(msg);
            auto post = posted.find({static_cast<int>(a), ins.peer, ins.seq});
            if (buf != ins.buffer || post == posted.end() || post->second != buf) {
              fail(a, i,
                   fmt::format("channel {}->{} delivered {} as #{} but {} was expected", ins.peer,
                               a, tg.buffer(buf).name, seq, tg.buffer(ins.buffer).name));
            }
            store[a].insert(buf);
            delivered.insert({ins.peer, static_cast<int>(a), seq});
            --outstanding[static_cast<size_t>(ins.peer)][buf];
            break;
          }
          case InstrKind::kDelete:
            if (!store[a].contains(ins.buffer) || pending[a].contains(ins.buffer)) {
              fail(a, i, fmt::format("delete of absent buffer {}", tg.buffer(ins.buffer).name));
            } else if (outstanding[a][ins.buffer] > 0) {
              pending[a].insert(ins.buffer);
            } else {
              store[a].erase(ins.buffer);
              deleted[a].insert(ins.buffer);
            }
            break;
          case InstrKind::kFlushPendingDeletes:
            for (auto it = pending[a].begin(); it != pending[a].end();) {
              if (outstanding[a][*it] == 0) {
                store[a].erase(*it);
                deleted[a].insert(*it);
                it = pending[a].erase(it);
              } else {
                ++it;
              }
            }
            break;
        }
        if (blocked) break;
        ++pc[a];
        progress = true;
        r.peak_live[a] = std::max(r.peak_live[a], static_cast<int>(store[a].size()));
      }
    }
  }
  for (size_t a = 0; a < P; ++a) {
    if (pc[a] < cp.programs[a].instrs.size()) {
      fail(a, pc[a], "replay stalled");
    }
    if (!pending[a].empty()) {
      fail(a, pc[a], fmt::format("{} deletions still pending at program end", pending[a].size()));
    }
    std::set<BufferId> expected;
    for (const Buffer& b : tg.buffers) {
      if (b.actor == static_cast<int>(a) && (b.persistent() || b.is_output)) expected.insert(b.id);
    }
    for (BufferId b : store[a]) {
      if (!expected.contains(b)) {
        fail(a, pc[a], fmt::format("buffer {} still live at program end", tg.buffer(b).name));
      }
    }
    for (BufferId b : expected) {
      if (!store[a].contains(b)) {
        fail(a, pc[a], fmt::format("buffer {} missing at program end", tg.buffer(b).name));
      }
    }
    r.live_at_end.push_back(store[a]);
  }
  return r;
}

std::string InstructionToString(const Instruction& ins, const TaskGraph& tg) {
  auto name = [&](BufferId b) {
    return b.valid() && b.index() < tg.buffers.size() ? tg.buffer(b).name : std::string("?");
  };
  switch (ins.kind) {
    case InstrKind::kRunTask:
      return fmt::format("RunTask({})", tg.task(ins.task).name);
    case InstrKind::kSendStart:
      return fmt::format("SendStart({}, dst={}, seq={})", name(ins.buffer), ins.peer, ins.seq);
    case InstrKind::kSendWait:
      return fmt::format("SendWait({}, dst={}, seq={})", name(ins.buffer), ins.peer, ins.seq);
    case InstrKind::kRecvStart:
      return fmt::format("RecvStart({}, src={}, seq={})", name(ins.buffer), ins.peer, ins.seq);
    case InstrKind::kRecvWait:
      return fmt::format("RecvWait({}, src={}, seq={})", name(ins.buffer), ins.peer, ins.seq);
    case InstrKind::kDelete:
      return fmt::format("Delete({})", name(ins.buffer));
    case InstrKind::kFlushPendingDeletes:
      return "FlushPendingDeletes";
  }
  return "?";
}

std::string CommPlanToJson(const CommPlan& cp, const TaskGraph& tg) {
  Json programs = Json::array();
  for (const ActorProgram& p : cp.programs) {
    Json instrs = Json::array();
    for (const Instruction& ins : p.instrs) {
      Json j = {{"op", InstrKindName(ins.kind)}};
      if (ins.kind == InstrKind::kRunTask) {
        j["task"] = ins.task.value();
        j["name"] = tg.task(ins.task).name;
      }
      if (ins.buffer.valid()) {
        j["buffer"] = ins.buffer.value();
        j["name"] = tg.buffer(ins.buffer).name;
      }
      if (ins.peer >= 0) j["peer"] = ins.peer;
      if (ins.seq >= 0) j["seq"] = ins.seq;
      instrs.push_back(std::move(j));
    }
    programs.push_back(
        {{"actor", p.actor}, {"segments", p.segments}, {"instructions", std::move(instrs)}});
  }
  Json channels = Json::array();
  for (const auto& [key, list] : cp.channels) {
    Json ids = Json::array();
    for (BufferId b : list) ids.push_back(b.value());
    channels.push_back({{"src", key.first}, {"dst", key.second}, {"buffers", std::move(ids)}});
  }
  return internal::Dump({{"version", 1},
                         {"num_actors", cp.num_actors},
                         {"deletions_inserted", cp.deletions_inserted},
                         {"fused", cp.fused},
                         {"driver_messages", cp.driver_messages()},
                         {"programs", std::move(programs)},
                         {"channels", std::move(channels)}});
}

}  // namespace mpmd
