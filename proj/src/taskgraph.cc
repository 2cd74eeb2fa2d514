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
#include <fmt/ranges.h>

#include <algorithm>
#include <functional>
#include <queue>
#include <set>

#include "json_util.h"
#include "mpmd/errors.h"

namespace mpmd {

using internal::Json;

std::string_view BufferKindName(BufferKind kind) {
  switch (kind) {
    case BufferKind::kActivation:
      return "activation";
    case BufferKind::kActivationGrad:
      return "activation-grad";
    case BufferKind::kStash:
      return "stash";
    case BufferKind::kParamGradPartial:
      return "param-grad-partial";
    case BufferKind::kParamGradTotal:
      return "param-grad-total";
    case BufferKind::kLoss:
      return "loss";
    case BufferKind::kParam:
      return "param";
    case BufferKind::kOptimizerState:
      return "optimizer-state";
    case BufferKind::kInput:
      return "input";
  }
  return "?";
}

std::string_view TaskKindName(TaskKind kind) {
  switch (kind) {
    case TaskKind::kLoop:
      return "loop";
    case TaskKind::kGradMerge:
      return "grad-merge";
    case TaskKind::kOptimizerUpdate:
      return "optimizer-update";
    case TaskKind::kLossConcat:
      return "loss-concat";
  }
  return "?";
}

namespace {

class Builder {
 public:
  explicit Builder(TaskGraph& tg) : tg_(tg) {}

  BufferId NewBuffer(BufferKind kind, std::string name, int64_t bytes, int actor,
                     std::vector<ValueId> values) {
    Buffer b;
    b.id = BufferId(static_cast<int32_t>(tg_.buffers.size()));
    b.kind = kind;
    b.name = std::move(name);
    b.size_bytes = bytes;
    b.actor = actor;
    b.values = std::move(values);
    tg_.buffers.push_back(std::move(b));
    return tg_.buffers.back().id;
  }

  TaskRef NewTask(TaskKind kind, std::string name, int actor, double flops) {
    Task t;
    t.id = TaskRef(static_cast<int32_t>(tg_.tasks.size()));
    t.kind = kind;
    t.name = std::move(name);
    t.actor = actor;
    t.flops = flops;
    tg_.tasks.push_back(std::move(t));
    return tg_.tasks.back().id;
  }

  void Produce(TaskRef t, BufferId b) {
    tg_.task(t).produces.push_back(b);
    tg_.buffer(b).producer = t;
  }
  void Consume(TaskRef t, BufferId b) {
    tg_.task(t).consumes.push_back(b);
    tg_.buffer(b).consumers.push_back(t);
  }
  void Mutate(TaskRef t, BufferId b) { tg_.task(t).mutates.push_back(b); }

 private:
  TaskGraph& tg_;
};

int64_t BytesOf(const StagedGraph& g, const std::vector<ValueId>& values) {
  int64_t n = 0;
  for (ValueId v : values) n += g.spec(v).total_bytes();
  return n;
}

bool IsGradKind(BufferKind k) {
  return k == BufferKind::kParamGradPartial || k == BufferKind::kParamGradTotal;
}

}  // namespace

TaskRef TaskGraph::loop_task(const TaskId& t) const {
  for (const Task& task : tasks) {
    if (task.kind == TaskKind::kLoop && task.tid == t) return task.id;
  }
  throw Error(fmt::format("no loop task {}", t.ToString()));
}

TaskGraph Unroll(std::shared_ptr<const StagePartition> partition, const Schedule& schedule) {
  if (!partition) throw Error("null partition");
  const StagePartition& p = *partition;
  if (!p.has_backward) throw ValidationError("partition has no backward stages");
  if (p.num_stages != schedule.num_stages) {
    throw ValidationError(
        fmt::format("stage-count mismatch: the model has {} stages but the schedule has {} "
                    "(actors x circular_repeat)",
                    p.num_stages, schedule.num_stages));
  }
  ValidateOrThrow(schedule);

  TaskGraph tg;
  tg.num_actors = schedule.num_actors;
  tg.num_microbatches = schedule.num_microbatches;
  tg.num_stages = schedule.num_stages;
  tg.partition = partition;
  tg.schedule = schedule;
  tg.actor_order.assign(static_cast<size_t>(tg.num_actors), {});
  const StagedGraph& g = p.graph;
  const int M = tg.num_microbatches;
  const int S = tg.num_stages;
  auto actor_of = [&](int s) { return schedule.stage_to_actor(s); };
  Builder b(tg);

  std::map<TaskId, TaskRef> loop;
  for (int a = 0; a < tg.num_actors; ++a) {
    for (const TaskId& t : schedule.per_actor[static_cast<size_t>(a)]) {
      const StageSummary& sum = p.summaries[static_cast<size_t>(t.stage)];
      TaskRef r = b.NewTask(TaskKind::kLoop, t.ToString(), a,
                            t.ty == Direction::kFwd ? sum.fwd_flops : sum.bwd_flops);
      tg.task(r).tid = t;
      loop.emplace(t, r);
      tg.actor_order[static_cast<size_t>(a)].push_back(r);
    }
  }

  std::map<std::pair<ValueId, int>, BufferId> replica;
  for (const auto& [param, stages] : p.param_stages) {
    std::set<int> actors;
    for (int s : stages) actors.insert(actor_of(s));
    for (int a : actors) {
      BufferId id = b.NewBuffer(BufferKind::kParam, fmt::format("param[v{}]@a{}", param.value(), a),
                                g.spec(param).total_bytes(), a, {param});
      replica.emplace(std::make_pair(param, a), id);
    }
  }
  std::map<ValueId, BufferId> state;
  for (const auto& [param, stages] : p.param_stages) {
    BufferId id =
        b.NewBuffer(BufferKind::kOptimizerState, fmt::format("velocity[v{}]", param.value()),
                    g.spec(param).total_bytes(), -1, {param});
    state.emplace(param, id);
  }

  std::map<std::tuple<ValueId, int, int>, BufferId> inputs;
  std::map<std::tuple<int, int, int>, BufferId> acts;   // (i, src, dst)
  std::map<std::tuple<int, int, int>, BufferId> grads;  // (i, src, dst)
  std::vector<BufferId> losses(static_cast<size_t>(M));
  for (int i = 0; i < M; ++i) {
    for (int s = 0; s < S; ++s) {
      const TaskRef f = loop.at(Fwd(i, s));
      const int a = actor_of(s);
      for (const auto& [param, stages] : p.param_stages) {
        if (std::find(stages.begin(), stages.end(), s) != stages.end()) {
          b.Consume(f, replica.at({param, a}));
        }
      }
      for (ValueId v : p.stage_inputs[static_cast<size_t>(s)]) {
        auto key = std::make_tuple(v, i, a);
        auto it = inputs.find(key);
        if (it == inputs.end()) {
          BufferId in =
              b.NewBuffer(BufferKind::kInput, fmt::format("in[v{},i{}]@a{}", v.value(), i, a),
                          g.spec(v).total_bytes(), a, {v});
          tg.buffer(in).microbatch = i;
          it = inputs.emplace(key, in).first;
        }
        b.Consume(f, it->second);
      }
      for (const StageCrossing* c : p.crossings_into(s)) b.Consume(f, acts.at({i, c->src, s}));
      for (const StageCrossing* c : p.crossings_out_of(s)) {
        BufferId act =
            b.NewBuffer(BufferKind::kActivation, fmt::format("act[i{},{}->{}]", i, s, c->dst),
                        BytesOf(g, c->values), a, c->values);
        Buffer& buf = tg.buffer(act);
        buf.microbatch = i;
        buf.stage = s;
        buf.src_stage = s;
        buf.dst_stage = c->dst;
        b.Produce(f, act);
        acts.emplace(std::make_tuple(i, s, c->dst), act);
      }
      const BackwardStage& bs = p.backward[static_cast<size_t>(s)];
      if (!bs.stash.empty()) {
        BufferId st = b.NewBuffer(BufferKind::kStash, fmt::format("stash[i{},s{}]", i, s),
                                  p.summaries[static_cast<size_t>(s)].stash_bytes, a, bs.stash);
        tg.buffer(st).microbatch = i;
        tg.buffer(st).stage = s;
        b.Produce(f, st);
        b.Consume(loop.at(Bwd(i, s)), st);
      }
      if (s == S - 1) {
        BufferId l = b.NewBuffer(BufferKind::kLoss, fmt::format("loss[i{}]", i),
                                 g.spec(g.loss()).total_bytes(), a, {g.loss()});
        tg.buffer(l).microbatch = i;
        tg.buffer(l).stage = s;
        b.Produce(f, l);
        losses[static_cast<size_t>(i)] = l;
      }
    }
    for (int s = S - 1; s >= 0; --s) {
      const TaskRef bw = loop.at(Bwd(i, s));
      const int a = actor_of(s);
      for (const auto& [param, stages] : p.param_stages) {
        if (std::find(stages.begin(), stages.end(), s) != stages.end()) {
          b.Consume(bw, replica.at({param, a}));
        }
      }
      for (const StageCrossing* c : p.crossings_out_of(s)) {
        b.Consume(bw, grads.at({i, s, c->dst}));
      }
      for (const StageCrossing* c : p.crossings_into(s)) {
        BufferId gr =
            b.NewBuffer(BufferKind::kActivationGrad, fmt::format("grad[i{},{}->{}]", i, s, c->src),
                        BytesOf(g, c->values), a, c->values);
        Buffer& buf = tg.buffer(gr);
        buf.microbatch = i;
        buf.stage = s;
        buf.src_stage = c->src;
        buf.dst_stage = s;
        b.Produce(bw, gr);
        grads.emplace(std::make_tuple(i, c->src, s), gr);
      }
    }
  }

  std::map<ValueId, BufferId> totals;
  for (const auto& [param, stages] : p.param_stages) {
    const int64_t bytes = g.spec(param).total_bytes();
    const double elems = static_cast<double>(g.spec(param).elements());
    const int s1 = stages.front();
    for (int s : stages) {
      const int a = actor_of(s);
      if (s != s1) {
        for (int i = 0; i < M; ++i) {
          BufferId part = b.NewBuffer(BufferKind::kParamGradPartial,
                                      fmt::format("partial[v{},i{},s{}]", param.value(), i, s),
                                      bytes, a, {param});
          tg.buffer(part).microbatch = i;
          tg.buffer(part).stage = s;
          b.Produce(loop.at(Bwd(i, s)), part);
          const TaskRef dst = loop.at(Bwd(i, s1));
          b.Consume(dst, part);
          tg.task(dst).flops += elems;
        }
        continue;
      }
      BufferId prev;
      int k = 0;
      for (TaskRef t : tg.actor_order[static_cast<size_t>(a)]) {
        const Task& task = tg.task(t);
        if (task.tid.ty != Direction::kBwd || task.tid.stage != s) continue;
        const bool last = (k == M - 1);
        BufferId acc =
            b.NewBuffer(last ? BufferKind::kParamGradTotal : BufferKind::kParamGradPartial,
                        last ? fmt::format("grad_total[v{}]", param.value())
                             : fmt::format("acc[v{},s{},k{}]", param.value(), s, k),
                        bytes, a, {param});
        Buffer& buf = tg.buffer(acc);
        buf.stage = s;
        buf.accumulator = true;
        buf.is_output = last;
        if (prev.valid()) {
          b.Consume(t, prev);
          tg.task(t).flops += elems;
        }
        b.Produce(t, acc);
        prev = acc;
        ++k;
      }
      totals.emplace(param, prev);
    }
  }

  for (const auto& [param, stages] : p.param_stages) {
    const double elems = static_cast<double>(g.spec(param).elements());
    TaskRef u = b.NewTask(TaskKind::kOptimizerUpdate, fmt::format("update[v{}]", param.value()), -1,
                          3.0 * elems);
    tg.task(u).param = param;
    b.Consume(u, totals.at(param));
    b.Mutate(u, replica.at({param, actor_of(stages.front())}));
    b.Mutate(u, state.at(param));
  }
  TaskRef concat = b.NewTask(TaskKind::kLossConcat, "loss-concat", -1, static_cast<double>(M));
  for (BufferId l : losses) b.Consume(concat, l);
  BufferId out =
      b.NewBuffer(BufferKind::kLoss, "losses", M * g.spec(g.loss()).elem_bytes, -1, {g.loss()});
  tg.buffer(out).is_output = true;
  b.Produce(concat, out);
  tg.Validate();
  return tg;
}

namespace {

// Drops buffers flagged in `removed` and renumbers the rest.
void Compact(TaskGraph& tg, const std::vector<bool>& removed) {
  std::vector<BufferId> remap(tg.buffers.size());
  std::vector<Buffer> kept;
  for (size_t k = 0; k < tg.buffers.size(); ++k) {
    if (removed[k]) continue;
    remap[k] = BufferId(static_cast<int32_t>(kept.size()));
    kept.push_back(std::move(tg.buffers[k]));
    kept.back().id = remap[k];
  }
  tg.buffers = std::move(kept);
  for (Task& t : tg.tasks) {
    for (auto* list : {&t.consumes, &t.produces, &t.mutates}) {
      std::vector<BufferId> out;
      for (BufferId b : *list) {
        if (!removed[b.index()]) out.push_back(remap[b.index()]);
      }
      *list = std::move(out);
    }
  }
}

void Erase(std::vector<BufferId>& list, BufferId b) {
  list.erase(std::remove(list.begin(), list.end(), b), list.end());
}

}  // namespace

TaskGraph CommuteGradAccumulation(TaskGraph tg) {
  if (tg.placed) throw Error("CommuteGradAccumulation must run before InferOuterPlacement");
  tg.commuted = true;
  const StagePartition& p = *tg.partition;
  if (p.shared_params.empty()) return tg;
  const StagedGraph& g = p.graph;
  const int M = tg.num_microbatches;
  Builder b(tg);
  std::vector<bool> removed(tg.buffers.size(), false);

  for (const auto& [param, stages] : p.shared_params) {
    const double elems = static_cast<double>(g.spec(param).elements());
    const int64_t bytes = g.spec(param).total_bytes();
    const int s1 = stages.front();

    BufferId total;
    for (const Buffer& buf : tg.buffers) {
      if (buf.kind == BufferKind::kParamGradTotal && buf.values.front() == param) total = buf.id;
    }
    if (!total.valid()) throw Error(fmt::format("no total gradient for v{}", param.value()));
    // Drop the per-microbatch partials.
    for (size_t k = 0; k < removed.size(); ++k) {
      Buffer& buf = tg.buffers[k];
      if (buf.kind != BufferKind::kParamGradPartial || buf.accumulator ||
          buf.values.front() != param) {
        continue;
      }
      removed[k] = true;
      Erase(tg.task(buf.producer).produces, buf.id);
      for (TaskRef c : buf.consumers) {
        Erase(tg.task(c).consumes, buf.id);
        tg.task(c).flops -= elems;
      }
    }

    std::vector<BufferId> finals;
    {
      Buffer& t = tg.buffer(total);
      t.kind = BufferKind::kParamGradPartial;
      t.is_output = false;
      t.name = fmt::format("acc[v{},s{},k{}]", param.value(), s1, M - 1);
      finals.push_back(total);
    }
    for (size_t j = 1; j < stages.size(); ++j) {
      const int s = stages[j];
      const int a = tg.schedule.stage_to_actor(s);
      BufferId prev;
      int k = 0;
      for (TaskRef r : tg.actor_order[static_cast<size_t>(a)]) {
        const Task& task = tg.task(r);
        if (task.tid.ty != Direction::kBwd || task.tid.stage != s) continue;
        BufferId acc =
            b.NewBuffer(BufferKind::kParamGradPartial,
                        fmt::format("acc[v{},s{},k{}]", param.value(), s, k), bytes, a, {param});
        removed.push_back(false);
        tg.buffer(acc).stage = s;
        tg.buffer(acc).accumulator = true;
        if (prev.valid()) {
          b.Consume(r, prev);
          tg.task(r).flops += elems;
        }
        b.Produce(r, acc);
        prev = acc;
        ++k;
      }
      finals.push_back(prev);
    }

    BufferId sum = finals.front();
    for (size_t j = 1; j < finals.size(); ++j) {
      const bool last = j + 1 == finals.size();
      TaskRef merge = b.NewTask(TaskKind::kGradMerge,
                                fmt::format("merge[v{},{}]", param.value(), j), -1, elems);
      tg.task(merge).param = param;
      b.Consume(merge, sum);
      b.Consume(merge, finals[j]);
      BufferId out = b.NewBuffer(last ? BufferKind::kParamGradTotal : BufferKind::kParamGradPartial,
                                 last ? fmt::format("grad_total[v{}]", param.value())
                                      : fmt::format("merged[v{},{}]", param.value(), j),
                                 bytes, -1, {param});
      removed.push_back(false);
      tg.buffer(out).is_output = last;
      b.Produce(merge, out);
      sum = out;
    }
    // Re-point the update at the merged total.
    for (TaskRef c : tg.buffer(total).consumers) {
      Task& t = tg.task(c);
      if (t.kind != TaskKind::kOptimizerUpdate) continue;
      std::replace(t.consumes.begin(), t.consumes.end(), total, sum);
      tg.buffer(sum).consumers.push_back(c);
    }
    auto& cons = tg.buffer(total).consumers;
    cons.erase(
        std::remove_if(cons.begin(), cons.end(),
                       [&](TaskRef c) { return tg.task(c).kind == TaskKind::kOptimizerUpdate; }),
        cons.end());
  }
  Compact(tg, removed);
  tg.Validate();
  return tg;
}

TaskGraph InferOuterPlacement(TaskGraph tg, const OuterPlacementOptions& options) {
  if (tg.placed) return tg;
  const StagePartition& p = *tg.partition;
  const StagedGraph& g = p.graph;
  Builder b(tg);

  for (const auto& [param, actor] : options.param_pins) {
    if (!p.param_stages.contains(param)) {
      throw ValidationError(fmt::format("placement pin: v{} is not a parameter", param.value()));
    }
    if (actor < 0 || actor >= tg.num_actors) {
      throw ValidationError(
          fmt::format("placement pin: actor {} out of range for v{}", actor, param.value()));
    }
  }

  for (TaskRef r : tg.TopologicalOrder()) {
    Task& t = tg.task(r);
    if (t.actor >= 0) continue;
    int required = -1;
    for (BufferId m : t.mutates) {
      const int a = tg.buffer(m).actor;
      if (a < 0) continue;
      if (required >= 0 && a != required) {
        throw ValidationError(
            fmt::format("placement conflict: task {} mutates buffers on actors "
                        "{} and {}",
                        t.name, required, a));
      }
      required = a;
    }
    std::map<int, int64_t> local_bytes;
    std::vector<int> first_seen;
    for (BufferId c : t.consumes) {
      const Buffer& buf = tg.buffer(c);
      if (buf.actor < 0 || buf.learning_rate) continue;
      if (!local_bytes.contains(buf.actor)) first_seen.push_back(buf.actor);
      local_bytes[buf.actor] += buf.size_bytes;
    }
    int chosen = required;
    if (chosen < 0) {
      int64_t best = -1;
      for (int a : first_seen) {
        if (local_bytes[a] > best) {
          best = local_bytes[a];
          chosen = a;
        }
      }
    }
    if (t.kind == TaskKind::kOptimizerUpdate) {
      auto pin = options.param_pins.find(t.param);
      if (pin != options.param_pins.end() && chosen >= 0 && pin->second != chosen) {
        std::vector<int32_t> readers;
        const int s1 = p.param_stages.at(t.param).front();
        for (size_t k : p.stage_ops[static_cast<size_t>(s1)]) {
          const OpNode& op = g.ops()[k];
          if (std::find(op.operands.begin(), op.operands.end(), t.param) != op.operands.end()) {
            readers.push_back(op.id.value());
          }
        }
        throw ValidationError(fmt::format(
            "placement conflict: parameter op {} is pinned to actor {}, but ops {} that read it "
            "and accumulate its gradient are placed on actor {}",
            g.producer(t.param).id.value(), pin->second, fmt::join(readers, ","), chosen));
      }
      if (pin != options.param_pins.end()) chosen = pin->second;
    }
    if (chosen < 0) chosen = 0;
    t.actor = chosen;
    for (BufferId out : t.produces) tg.buffer(out).actor = chosen;
    for (BufferId m : t.mutates) {
      if (tg.buffer(m).actor < 0) tg.buffer(m).actor = chosen;
    }
  }

  std::map<int, BufferId> lr;
  for (size_t k = 0; k < tg.tasks.size(); ++k) {
    if (tg.tasks[k].kind != TaskKind::kOptimizerUpdate) continue;
    const int a = tg.tasks[k].actor;
    auto it = lr.find(a);
    if (it == lr.end()) {
      BufferId id = b.NewBuffer(BufferKind::kInput, fmt::format("lr@a{}", a), 8, a, {});
      tg.buffer(id).learning_rate = true;
      it = lr.emplace(a, id).first;
    }
    b.Consume(tg.tasks[k].id, it->second);
  }

  for (TaskKind kind : {TaskKind::kGradMerge, TaskKind::kOptimizerUpdate, TaskKind::kLossConcat}) {
    for (const Task& t : tg.tasks) {
      if (t.kind == kind) tg.actor_order[static_cast<size_t>(t.actor)].push_back(t.id);
    }
  }
  tg.placed = true;
  tg.Validate();
  return tg;
}

std::vector<TaskRef> TaskGraph::TopologicalOrder() const {
  const size_t n = tasks.size();
  std::vector<std::set<size_t>> succ(n);
  for (const Buffer& b : buffers) {
    if (!b.producer.valid()) continue;
    for (TaskRef c : b.consumers) succ[b.producer.index()].insert(c.index());
  }
  for (const Task& t : tasks) {
    for (BufferId m : t.mutates) {
      for (TaskRef c : buffer(m).consumers) {
        if (c != t.id) succ[c.index()].insert(t.id.index());
      }
    }
  }
  std::vector<int> indeg(n, 0);
  for (const auto& s : succ) {
    for (size_t v : s) ++indeg[v];
  }
  std::priority_queue<size_t, std::vector<size_t>, std::greater<>> ready;
  for (size_t k = 0; k < n; ++k) {
    if (indeg[k] == 0) ready.push(k);
  }
  std::vector<TaskRef> order;
  while (!ready.empty()) {
    const size_t k = ready.top();
    ready.pop();
    order.push_back(tasks[k].id);
    for (size_t v : succ[k]) {
      if (--indeg[v] == 0) ready.push(v);
    }
  }
  if (order.size() == n) return order;
  // Walk predecessors among the remaining tasks until one repeats.
  std::vector<std::vector<size_t>> pred(n);
  for (size_t k = 0; k < n; ++k) {
    for (size_t v : succ[k]) pred[v].push_back(k);
  }
  size_t cur = 0;
  while (indeg[cur] == 0) ++cur;
  std::vector<size_t> path;
  std::vector<int> pos(n, -1);
  while (pos[cur] < 0) {
    pos[cur] = static_cast<int>(path.size());
    path.push_back(cur);
    for (size_t q : pred[cur]) {
      if (indeg[q] > 0) {
        cur = q;
        break;
      }
    }
  }
  std::vector<std::string> names;
  for (size_t k = static_cast<size_t>(pos[cur]); k < path.size(); ++k) {
    names.push_back(tasks[path[k]].name);
  }
  std::reverse(names.begin(), names.end());
  names.push_back(names.front());
  throw DeadlockError(fmt::format("task graph has a cycle: {}", fmt::join(names, " -> ")));
}

void TaskGraph::Validate() const {
  for (size_t k = 0; k < buffers.size(); ++k) {
    const Buffer& b = buffers[k];
    if (b.id.index() != k) throw Error(fmt::format("buffer {} has id {}", k, b.id.value()));
    if (b.size_bytes <= 0) throw Error(fmt::format("buffer {} has non-positive size", b.name));
    if (b.producer.valid()) {
      const auto& prod = task(b.producer).produces;
      if (std::find(prod.begin(), prod.end(), b.id) == prod.end()) {
        throw Error(fmt::format("buffer {} not listed by its producer", b.name));
      }
    }
    for (TaskRef c : b.consumers) {
      const auto& cons = task(c).consumes;
      if (std::find(cons.begin(), cons.end(), b.id) == cons.end()) {
        throw Error(fmt::format("buffer {} not listed by consumer {}", b.name, task(c).name));
      }
    }
    if (b.accumulator && b.producer.valid()) {
      for (TaskRef c : b.consumers) {
        if (task(c).kind == TaskKind::kLoop && task(c).actor != task(b.producer).actor) {
          throw Error(fmt::format("accumulator {} leaves its actor", b.name));
        }
      }
    }
    if (placed && (b.actor < 0 || b.actor >= num_actors)) {
      throw Error(fmt::format("buffer {} is unplaced", b.name));
    }
  }
  for (const Task& t : tasks) {
    for (BufferId c : t.consumes) {
      if (std::find(t.produces.begin(), t.produces.end(), c) != t.produces.end()) {
        throw Error(fmt::format("task {} consumes and produces {}", t.name, buffer(c).name));
      }
    }
    for (BufferId pb : t.produces) {
      if (buffer(pb).producer != t.id) {
        throw Error(fmt::format("task {} lists {} it does not produce", t.name, buffer(pb).name));
      }
    }
    if (t.kind == TaskKind::kLoop && t.actor != schedule.stage_to_actor(t.tid.stage)) {
      throw Error(fmt::format("loop task {} is off its stage's actor", t.name));
    }
    if (placed) {
      if (t.actor < 0 || t.actor >= num_actors) {
        throw Error(fmt::format("task {} is unplaced", t.name));
      }
      for (BufferId m : t.mutates) {
        if (buffer(m).actor != t.actor) {
          throw Error(fmt::format("task {} mutates remote buffer {}", t.name, buffer(m).name));
        }
      }
    }
  }
  if (placed) {
    std::vector<int> seen(tasks.size(), 0);
    for (size_t a = 0; a < actor_order.size(); ++a) {
      for (TaskRef r : actor_order[a]) {
        ++seen[r.index()];
        if (task(r).actor != static_cast<int>(a)) {
          throw Error(fmt::format("task {} ordered on the wrong actor", task(r).name));
        }
      }
    }
    for (size_t k = 0; k < tasks.size(); ++k) {
      if (seen[k] != 1)
        throw Error(fmt::format("task {} ordered {} times", tasks[k].name, seen[k]));
    }
  }
  TopologicalOrder();
}

int TaskGraph::CrossActorTransfers() const {
  int n = 0;
  for (const Buffer& b : buffers) {
    std::set<int> remote;
    for (TaskRef c : b.consumers) {
      const int a = task(c).actor;
      if (a >= 0 && a != b.actor) remote.insert(a);
    }
    n += static_cast<int>(remote.size());
  }
  return n;
}

int TaskGraph::CrossActorGradTransfers(ValueId param) const {
  int n = 0;
  for (const Buffer& b : buffers) {
    if (!IsGradKind(b.kind) || b.values.empty() || b.values.front() != param) continue;
    std::set<int> remote;
    for (TaskRef c : b.consumers) {
      const int a = task(c).actor;
      if (a >= 0 && a != b.actor) remote.insert(a);
    }
    n += static_cast<int>(remote.size());
  }
  return n;
}

int TaskGraph::CountBuffers(BufferKind kind) const {
  return static_cast<int>(std::count_if(buffers.begin(), buffers.end(),
                                        [&](const Buffer& b) { return b.kind == kind; }));
}

int TaskGraph::CountTasks(TaskKind kind) const {
  return static_cast<int>(
      std::count_if(tasks.begin(), tasks.end(), [&](const Task& t) { return t.kind == kind; }));
}

std::string TaskGraphToJson(const TaskGraph& tg) {
  auto ids = [](const std::vector<BufferId>& v) {
    Json out = Json::array();
    for (BufferId b : v) out.push_back(b.value());
    return out;
  };
  Json tasks = Json::array();
  Json edges = Json::array();
  for (const Task& t : tg.tasks) {
    Json j = {{"id", t.id.value()},
              {"kind", TaskKindName(t.kind)},
              {"name", t.name},
              {"actor", t.actor},
              {"flops", t.flops},
              {"consumes", ids(t.consumes)},
              {"produces", ids(t.produces)},
              {"mutates", ids(t.mutates)}};
    if (t.kind == TaskKind::kLoop) {
      j["tid"] = {{"i", t.tid.i}, {"ty", DirectionName(t.tid.ty)}, {"stage", t.tid.stage}};
    }
    if (t.param.valid()) j["param"] = t.param.value();
    tasks.push_back(std::move(j));
  }
  Json buffers = Json::array();
  for (const Buffer& b : tg.buffers) {
    Json values = Json::array();
    for (ValueId v : b.values) values.push_back(v.value());
    Json consumers = Json::array();
    for (TaskRef c : b.consumers) {
      consumers.push_back(c.value());
      if (b.producer.valid()) edges.push_back({b.producer.value(), c.value(), b.id.value()});
    }
    Json j = {{"id", b.id.value()},
              {"kind", BufferKindName(b.kind)},
              {"name", b.name},
              {"size_bytes", b.size_bytes},
              {"actor", b.actor},
              {"consumers", std::move(consumers)},
              {"values", std::move(values)}};
    j["producer"] = b.producer.valid() ? Json(b.producer.value()) : Json(nullptr);
    if (b.microbatch >= 0) j["microbatch"] = b.microbatch;
    if (b.stage >= 0) j["stage"] = b.stage;
    if (b.accumulator) j["accumulator"] = true;
    if (b.is_output) j["output"] = true;
    buffers.push_back(std::move(j));
  }
  Json order = Json::array();
  for (const auto& list : tg.actor_order) {
    Json a = Json::array();
    for (TaskRef r : list) a.push_back(r.value());
    order.push_back(std::move(a));
  }
  return internal::Dump({{"version", 1},
                         {"num_actors", tg.num_actors},
                         {"num_microbatches", tg.num_microbatches},
                         {"num_stages", tg.num_stages},
                         {"commuted", tg.commuted},
                         {"placed", tg.placed},
                         {"tasks", std::move(tasks)},
                         {"buffers", std::move(buffers)},
                         {"edges", std::move(edges)},
                         {"actor_order", std::move(order)}});
}

}  // namespace mpmd
