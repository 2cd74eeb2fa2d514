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

#include <fmt/format.h>
#include <fmt/ranges.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <deque>
#include <exception>
#include <limits>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <thread>

#include "json_util.h"
#include "mpmd/errors.h"
#include "mpmd/ops.h"

namespace mpmd {

using internal::Json;

namespace {

double Uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

Tensor RandomTensor(const std::vector<int64_t>& dims, std::mt19937_64& rng, double scale) {
  Tensor t(dims);
  for (double& v : t.data()) v = scale * (2.0 * Uniform01(rng) - 1.0);
  return t;
}

int64_t MicrobatchRows(const Tensor& t, int M, ValueId v) {
  if (M < 1) throw ValidationError(fmt::format("parallel.M: must be positive, got {}", M));
  if (t.rank() == 0 || t.dim(0) % M != 0) {
    throw ValidationError(
        fmt::format("batch input v{} with {} rows does not split into {} "
                    "equal microbatches",
                    v.value(), t.rank() == 0 ? 0 : t.dim(0), M));
  }
  return t.dim(0) / M;
}

void Momentum(Tensor& param, Tensor& velocity, const Tensor& grad, double lr, double mu) {
  for (int64_t k = 0; k < param.size(); ++k) {
    velocity[k] = mu * velocity[k] + grad[k];
    param[k] -= lr * velocity[k];
  }
}

}  // namespace

TensorMap InitParams(const StagedGraph& graph, uint64_t seed, double scale) {
  std::mt19937_64 rng(seed);
  TensorMap out;
  for (ValueId p : graph.params()) out.emplace(p, RandomTensor(graph.spec(p).dims, rng, scale));
  return out;
}

TensorMap MakeBatch(const StagedGraph& graph, int M, uint64_t seed) {
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  TensorMap out;
  for (ValueId v : graph.inputs()) {
    std::vector<int64_t> dims = graph.spec(v).dims;
    if (dims.empty()) throw ValidationError(fmt::format("input v{} is a scalar", v.value()));
    dims[0] *= M;
    out.emplace(v, RandomTensor(dims, rng, 1.0));
  }
  return out;
}

StepResult RunReference(const StagedGraph& graph, const TensorMap& params, const TensorMap& batch,
                        int M, const OptimizerConfig& opt) {
  std::vector<size_t> all(graph.ops().size());
  for (size_t k = 0; k < all.size(); ++k) all[k] = k;
  StepResult r;
  for (ValueId p : graph.params()) r.grads.emplace(p, Tensor::Zeros(graph.spec(p).dims));
  for (int i = 0; i < M; ++i) {
    ValueEnv env;
    for (ValueId p : graph.params()) env.emplace(p, params.at(p));
    for (ValueId v : graph.inputs()) {
      const Tensor& full = batch.at(v);
      const int64_t rows = MicrobatchRows(full, M, v);
      env.emplace(v, full.SliceRows(i * rows, (i + 1) * rows));
    }
    RunForward(graph, all, env);
    r.losses.push_back(env.at(graph.loss())[0]);
    ValueEnv grads;
    grads.emplace(graph.loss(), Tensor::Scalar(1.0));
    RunBackward(graph, all, env, grads);
    // grads += mugrads
    for (auto& [p, acc] : r.grads) {
      auto it = grads.find(p);
      if (it != grads.end()) acc += it->second;
    }
  }
  for (const auto& [p, g] : r.grads) {
    Tensor param = params.at(p);
    Tensor velocity = Tensor::Zeros(param.dims());
    Momentum(param, velocity, g, opt.learning_rate, opt.momentum);
    r.new_params.emplace(p, std::move(param));
    r.new_velocity.emplace(p, std::move(velocity));
  }
  return r;
}

namespace {

using Bundle = std::vector<Tensor>;

struct Message {
  int seq = 0;
  BufferId buffer;
  Bundle data;
  std::shared_ptr<bool> delivered;
};

struct Abort {};

enum class WorkerState { kIdle, kRunning, kBlocked, kDone, kFailed };

struct Shared {
  std::mutex mu;
  std::condition_variable cv;
  std::map<std::pair<int, int>, std::deque<Message>> channels;
  std::vector<std::deque<std::pair<size_t, size_t>>> inbox;  // segments [begin, end)
  std::vector<std::optional<std::map<BufferId, Bundle>>> outbox;
  bool abort = false;
  std::exception_ptr fault;
  int finished = 0;
  RunStats stats;
  std::vector<size_t> pc;
  std::vector<WorkerState> state;
};

class Worker {
 public:
  Worker(int actor, const CommPlan& cp, const TaskGraph& tg, const TensorMap& params,
         const TensorMap& batch, const ExecutorOptions& options, Shared& shared)
      : a_(actor),
        prog_(cp.programs[static_cast<size_t>(actor)]),
        cp_(cp),
        tg_(tg),
        graph_(tg.partition->graph),
        options_(options),
        sh_(shared),
        rng_(options.delay_seed * 1000003ULL + static_cast<uint64_t>(actor)) {
    for (const Buffer& b : tg.buffers) {
      if (!b.preloaded() || b.actor != a_) continue;
      if (b.learning_rate) {
        store_[b.id] = {Tensor::Scalar(options.optimizer.learning_rate)};
      } else if (b.kind == BufferKind::kParam) {
        store_[b.id] = {params.at(b.values.front())};
      } else if (b.kind == BufferKind::kOptimizerState) {
        store_[b.id] = {Tensor::Zeros(graph_.spec(b.values.front()).dims)};
      } else if (b.kind == BufferKind::kInput) {
        const ValueId v = b.values.front();
        const Tensor& full = batch.at(v);
        const int64_t rows = MicrobatchRows(full, tg.num_microbatches, v);
        store_[b.id] = {full.SliceRows(b.microbatch * rows, (b.microbatch + 1) * rows)};
      }
    }
  }

  void Run() {
    try {
      for (;;) {
        std::pair<size_t, size_t> seg;
        {
          std::unique_lock lock(sh_.mu);
          Block(lock, [&] { return !sh_.inbox[static_cast<size_t>(a_)].empty(); });
          seg = sh_.inbox[static_cast<size_t>(a_)].front();
          sh_.inbox[static_cast<size_t>(a_)].pop_front();
          sh_.state[static_cast<size_t>(a_)] = WorkerState::kRunning;
        }
        for (size_t i = seg.first; i < seg.second; ++i) {
          {
            std::lock_guard lock(sh_.mu);
            sh_.pc[static_cast<size_t>(a_)] = i;
          }
          if (options_.max_delay_us > 0) {
            std::this_thread::sleep_for(std::chrono::microseconds(
                rng_() % static_cast<uint64_t>(options_.max_delay_us + 1)));
          }
          Execute(i);
          peak_live_ = std::max(peak_live_, static_cast<int>(store_.size()));
          int stash = 0;
          for (const auto& [id, bundle] : store_) {
            stash += tg_.buffer(id).kind == BufferKind::kStash ? 1 : 0;
          }
          peak_stash_ = std::max(peak_stash_, stash);
        }
        if (seg.second == prog_.instrs.size()) break;
      }
      Finish();
    } catch (const Abort&) {
      std::lock_guard lock(sh_.mu);
      sh_.state[static_cast<size_t>(a_)] = WorkerState::kFailed;
      ++sh_.finished;
      sh_.cv.notify_all();
    } catch (...) {
      std::lock_guard lock(sh_.mu);
      if (!sh_.fault) sh_.fault = std::current_exception();
      sh_.abort = true;
      sh_.state[static_cast<size_t>(a_)] = WorkerState::kFailed;
      ++sh_.finished;
      sh_.cv.notify_all();
    }
  }

 private:
  template <typename Pred>
  void Block(std::unique_lock<std::mutex>& lock, Pred pred) {
    while (!pred()) {
      if (sh_.abort) throw Abort{};
      sh_.state[static_cast<size_t>(a_)] = WorkerState::kBlocked;
      sh_.cv.wait_for(lock, std::chrono::milliseconds(50));
    }
    if (sh_.abort) throw Abort{};
    sh_.state[static_cast<size_t>(a_)] = WorkerState::kRunning;
  }

  [[noreturn]] void Fault(size_t i, const std::string& what) const {
    throw LivenessFault(fmt::format("actor {} instruction {} ({}): {}", a_, i,
                                    InstructionToString(prog_.instrs[i], tg_), what));
  }

  Bundle& Get(size_t i, BufferId b) {
    if (pending_.contains(b)) Fault(i, fmt::format("buffer {} was deleted", tg_.buffer(b).name));
    auto it = store_.find(b);
    if (it == store_.end()) {
      Fault(i, fmt::format("buffer {} is not in the object store", tg_.buffer(b).name));
    }
    return it->second;
  }

  bool Delivered(BufferId b) const {
    auto it = sends_.find(b);
    if (it == sends_.end()) return true;
    return std::all_of(it->second.begin(), it->second.end(),
                       [](const std::shared_ptr<bool>& d) { return *d; });
  }

  void Execute(size_t i) {
    const Instruction& ins = prog_.instrs[i];
    switch (ins.kind) {
      case InstrKind::kRunTask:
        RunTask(i, tg_.task(ins.task));
        return;
      case InstrKind::kSendStart: {
        Message m{ins.seq, ins.buffer, Get(i, ins.buffer), std::make_shared<bool>(false)};
        sends_[ins.buffer].push_back(m.delivered);
        std::lock_guard lock(sh_.mu);
        send_waits_[{ins.peer, ins.seq}] = m.delivered;
        sh_.channels[{a_, ins.peer}].push_back(std::move(m));
        ++sh_.stats.channel_messages;
        const Buffer& b = tg_.buffer(ins.buffer);
        if (b.kind == BufferKind::kParamGradPartial || b.kind == BufferKind::kParamGradTotal) {
          ++sh_.stats.param_grad_messages[b.values.front()];
        }
        sh_.cv.notify_all();
        return;
      }
      case InstrKind::kSendWait: {
        std::unique_lock lock(sh_.mu);
        auto it = send_waits_.find({ins.peer, ins.seq});
        if (it == send_waits_.end()) Fault(i, "no matching SendStart");
        const std::shared_ptr<bool> d = it->second;
        Block(lock, [&] { return *d; });
        send_waits_.erase(it);
        return;
      }
      case InstrKind::kRecvStart:
        posted_[{ins.peer, ins.seq}] = ins.buffer;
        return;
      case InstrKind::kRecvWait: {
        Message m;
        {
          std::unique_lock lock(sh_.mu);
          auto& q = sh_.channels[{ins.peer, a_}];
          auto& arrived = arrived_[ins.peer];
          Block(lock, [&] {
            while (!q.empty()) {
              Message& front = q.front();
              int& last = last_seq_.try_emplace(ins.peer, -1).first->second;
              if (front.seq <= last) {
                Fault(i, fmt::format("channel {}->{} delivered seq {} after seq {}", ins.peer, a_,
                                     front.seq, last));
              }
              last = front.seq;
              arrived.emplace(front.seq, std::move(front));
              q.pop_front();
            }
            return arrived.contains(ins.seq);
          });
          auto it = arrived.find(ins.seq);
          m = std::move(it->second);
          arrived.erase(it);
          *m.delivered = true;
          sh_.cv.notify_all();
        }
        auto post = posted_.find({ins.peer, ins.seq});
        if (post == posted_.end()) Fault(i, "no matching RecvStart");
        if (post->second != m.buffer || ins.buffer != m.buffer) {
          Fault(i, fmt::format("channel order violation: message #{} from actor {} carries {}, "
                               "expected {}",
                               ins.seq, ins.peer, tg_.buffer(m.buffer).name,
                               tg_.buffer(ins.buffer).name));
        }
        posted_.erase(post);
        store_[m.buffer] = std::move(m.data);
        return;
      }
      case InstrKind::kDelete: {
        Get(i, ins.buffer);
        std::lock_guard lock(sh_.mu);
        if (Delivered(ins.buffer)) {
          store_.erase(ins.buffer);
          sends_.erase(ins.buffer);
        } else {
          pending_.insert(ins.buffer);
        }
        return;
      }
      case InstrKind::kFlushPendingDeletes: {
        std::lock_guard lock(sh_.mu);
        for (auto it = pending_.begin(); it != pending_.end();) {
          if (Delivered(*it)) {
            store_.erase(*it);
            sends_.erase(*it);
            it = pending_.erase(it);
          } else {
            ++it;
          }
        }
        return;
      }
    }
  }

  void RunTask(size_t i, const Task& t) {
    switch (t.kind) {
      case TaskKind::kLoop:
        if (t.tid.ty == Direction::kFwd) {
          Forward(i, t);
        } else {
          Backward(i, t);
        }
        return;
      case TaskKind::kGradMerge: {
        Tensor sum = Get(i, t.consumes.front()).front();
        for (size_t k = 1; k < t.consumes.size(); ++k) sum += Get(i, t.consumes[k]).front();
        for (BufferId out : t.produces) store_[out] = {sum};
        return;
      }
      case TaskKind::kOptimizerUpdate: {
        const Tensor* grad = nullptr;
        double lr = 0.0;
        for (BufferId c : t.consumes) {
          const Buffer& b = tg_.buffer(c);
          if (b.learning_rate) {
            lr = Get(i, c).front()[0];
          } else {
            grad = &Get(i, c).front();
          }
        }
        Tensor* param = nullptr;
        Tensor* velocity = nullptr;
        for (BufferId m : t.mutates) {
          (tg_.buffer(m).kind == BufferKind::kParam ? param : velocity) = &Get(i, m).front();
        }
        if (!grad || !param || !velocity) Fault(i, "malformed update task");
        Momentum(*param, *velocity, *grad, lr, options_.optimizer.momentum);
        return;
      }
      case TaskKind::kLossConcat: {
        Tensor out({static_cast<int64_t>(t.consumes.size())});
        for (size_t k = 0; k < t.consumes.size(); ++k) {
          out[static_cast<int64_t>(k)] = Get(i, t.consumes[k]).front()[0];
        }
        for (BufferId b : t.produces) store_[b] = {out};
        return;
      }
    }
  }

  void Forward(size_t i, const Task& t) {
    const StagePartition& p = *tg_.partition;
    ValueEnv env;
    for (BufferId c : t.consumes) {
      const Buffer& b = tg_.buffer(c);
      const Bundle& data = Get(i, c);
      for (size_t k = 0; k < b.values.size(); ++k) env.insert_or_assign(b.values[k], data[k]);
    }
    RunForward(graph_, p.stage_ops[static_cast<size_t>(t.tid.stage)], env);
    for (BufferId out : t.produces) {
      Bundle data;
      for (ValueId v : tg_.buffer(out).values) data.push_back(env.at(v));
      store_[out] = std::move(data);
    }
  }

  void Backward(size_t i, const Task& t) {
    const StagePartition& p = *tg_.partition;
    const BackwardStage& bs = p.backward[static_cast<size_t>(t.tid.stage)];
    ValueEnv values, grads;
    std::map<ValueId, Tensor> carried;  // incoming parameter-gradient sums
    for (BufferId c : t.consumes) {
      const Buffer& b = tg_.buffer(c);
      const Bundle& data = Get(i, c);
      switch (b.kind) {
        case BufferKind::kActivationGrad:
          for (size_t k = 0; k < b.values.size(); ++k) {
            auto [it, fresh] = grads.try_emplace(b.values[k], data[k]);
            if (!fresh) it->second += data[k];
          }
          break;
        case BufferKind::kParamGradPartial:
        case BufferKind::kParamGradTotal: {
          auto [it, fresh] = carried.try_emplace(b.values.front(), data.front());
          if (!fresh) it->second += data.front();
          break;
        }
        default:
          for (size_t k = 0; k < b.values.size(); ++k)
            values.insert_or_assign(b.values[k], data[k]);
      }
    }
    if (bs.seeds_loss) grads.insert_or_assign(graph_.loss(), Tensor::Scalar(1.0));
    RunBackward(graph_, p.stage_ops[static_cast<size_t>(t.tid.stage)], values, grads);
    auto grad_of = [&](ValueId v) {
      auto it = grads.find(v);
      return it != grads.end() && it->second.size() != 0 ? it->second
                                                         : Tensor::Zeros(graph_.spec(v).dims);
    };
    for (BufferId out : t.produces) {
      const Buffer& b = tg_.buffer(out);
      Bundle data;
      if (b.kind == BufferKind::kActivationGrad) {
        for (ValueId v : b.values) data.push_back(grad_of(v));
      } else {
        const ValueId param = b.values.front();
        Tensor g = grad_of(param);
        auto it = carried.find(param);
        if (it != carried.end()) g += it->second;
        data.push_back(std::move(g));
      }
      store_[out] = std::move(data);
    }
  }

  void Finish() {
    std::map<BufferId, Bundle> results;
    std::set<BufferId> live;
    std::vector<std::string> extra;
    for (auto& [id, data] : store_) {
      live.insert(id);
      const Buffer& b = tg_.buffer(id);
      if (b.persistent() || b.is_output) {
        results.emplace(id, std::move(data));
      } else {
        extra.push_back(b.name);
      }
    }
    if (options_.check_final_store && cp_.deletions_inserted && !extra.empty()) {
      throw LivenessFault(
          fmt::format("actor {} ends the step holding {}", a_, fmt::join(extra, ", ")));
    }
    std::lock_guard lock(sh_.mu);
    sh_.outbox[static_cast<size_t>(a_)] = std::move(results);
    ++sh_.stats.driver_messages;
    sh_.stats.peak_live_buffers[static_cast<size_t>(a_)] = peak_live_;
    sh_.stats.peak_live_stash[static_cast<size_t>(a_)] = peak_stash_;
    sh_.stats.live_at_end[static_cast<size_t>(a_)] = std::move(live);
    sh_.state[static_cast<size_t>(a_)] = WorkerState::kDone;
    ++sh_.finished;
    sh_.cv.notify_all();
  }

  const int a_;
  const ActorProgram& prog_;
  const CommPlan& cp_;
  const TaskGraph& tg_;
  const StagedGraph& graph_;
  const ExecutorOptions& options_;
  Shared& sh_;
  std::mt19937_64 rng_;

  std::map<BufferId, Bundle> store_;
  std::set<BufferId> pending_;
  std::map<BufferId, std::vector<std::shared_ptr<bool>>> sends_;
  std::map<std::pair<int, int>, std::shared_ptr<bool>> send_waits_;  // guarded by sh_.mu
  std::map<std::pair<int, int>, BufferId> posted_;                   // (src, seq)
  std::map<int, std::map<int, Message>> arrived_;                    // src -> seq
  std::map<int, int> last_seq_;
  int peak_live_ = 0;
  int peak_stash_ = 0;
};

}  // namespace

PipelinedRun RunPipelined(const CommPlan& cp, const TaskGraph& tg, const TensorMap& params,
                          const TensorMap& batch, const ExecutorOptions& options) {
  const size_t P = cp.programs.size();
  Shared sh;
  sh.inbox.resize(P);
  sh.outbox.resize(P);
  sh.pc.assign(P, 0);
  sh.state.assign(P, WorkerState::kIdle);
  sh.stats.peak_live_buffers.assign(P, 0);
  sh.stats.peak_live_stash.assign(P, 0);
  sh.stats.live_at_end.resize(P);

  std::vector<std::unique_ptr<Worker>> workers;
  for (size_t a = 0; a < P; ++a) {
    workers.push_back(
        std::make_unique<Worker>(static_cast<int>(a), cp, tg, params, batch, options, sh));
  }
  // One dispatch per segment.
  for (size_t a = 0; a < P; ++a) {
    const ActorProgram& prog = cp.programs[a];
    for (size_t k = 0; k < prog.segments.size(); ++k) {
      const size_t end = k + 1 < prog.segments.size() ? prog.segments[k + 1] : prog.instrs.size();
      sh.inbox[a].push_back({prog.segments[k], end});
      ++sh.stats.driver_messages;
    }
    if (prog.segments.empty()) {
      sh.inbox[a].push_back({0, prog.instrs.size()});
      ++sh.stats.driver_messages;
    }
  }
  std::vector<std::thread> threads;
  for (auto& w : workers) threads.emplace_back([&w] { w->Run(); });

  const auto deadline = std::chrono::steady_clock::now() +
                        std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                            std::chrono::duration<double>(options.timeout_s));
  bool timed_out = false;
  std::string dump;
  {
    std::unique_lock lock(sh.mu);
    timed_out = !sh.cv.wait_until(
        lock, deadline, [&] { return sh.finished == static_cast<int>(P) || sh.fault != nullptr; });
    if (timed_out) {
      std::vector<std::string> lines;
      for (size_t a = 0; a < P; ++a) {
        const auto& instrs = cp.programs[a].instrs;
        if (sh.state[a] == WorkerState::kDone) {
          lines.push_back(fmt::format("actor {} done", a));
        } else if (sh.pc[a] < instrs.size()) {
          lines.push_back(fmt::format("actor {} blocked at instruction {} {}", a, sh.pc[a],
                                      InstructionToString(instrs[sh.pc[a]], tg)));
        }
      }
      dump = fmt::format("{}", fmt::join(lines, "; "));
    }
    sh.abort = sh.abort || timed_out;
    sh.cv.notify_all();
  }
  for (auto& t : threads) t.join();
  if (sh.fault) std::rethrow_exception(sh.fault);
  if (timed_out) {
    throw DeadlockError(
        fmt::format("watchdog: step did not finish within {} s: {}", options.timeout_s, dump));
  }

  PipelinedRun run;
  run.stats = std::move(sh.stats);
  std::map<BufferId, const Bundle*> gathered;
  for (auto& box : sh.outbox) {
    for (const auto& [id, data] : *box) gathered[id] = &data;
  }
  auto fetch = [&](BufferId id) -> const Tensor& {
    auto it = gathered.find(id);
    if (it == gathered.end()) {
      throw LivenessFault(fmt::format("output {} was not gathered", tg.buffer(id).name));
    }
    return it->second->front();
  };
  for (const Buffer& b : tg.buffers) {
    if (b.kind == BufferKind::kParamGradTotal) run.result.grads[b.values.front()] = fetch(b.id);
    if (b.kind == BufferKind::kLoss && b.is_output) {
      const Tensor& l = fetch(b.id);
      run.result.losses.assign(l.data().begin(), l.data().end());
    }
  }
  for (const Task& t : tg.tasks) {
    if (t.kind != TaskKind::kOptimizerUpdate) continue;
    for (BufferId m : t.mutates) {
      TensorMap& dst =
          tg.buffer(m).kind == BufferKind::kParam ? run.result.new_params : run.result.new_velocity;
      dst[t.param] = fetch(m);
    }
  }
  return run;
}

Comparison Compare(const StepResult& actual, const StepResult& expected) {
  Comparison c;
  auto note = [&](double err, std::string name) {
    if (err > c.max_rel_error || (std::isnan(err) && !std::isnan(c.max_rel_error))) {
      c.max_rel_error = std::isnan(err) ? std::numeric_limits<double>::infinity() : err;
      c.worst = std::move(name);
    }
  };
  auto maps = [&](const TensorMap& a, const TensorMap& e, std::string_view what) {
    for (const auto& [v, t] : a) {
      auto it = e.find(v);
      note(it == e.end() ? std::numeric_limits<double>::infinity() : RelativeError(t, it->second),
           fmt::format("{}[v{}]", what, v.value()));
    }
    // Entries only the reference has must be zero (parameters of dead ops).
    for (const auto& [v, t] : e) {
      if (!a.contains(v) && t.MaxAbs() > 0.0 && what == "grad") {
        note(std::numeric_limits<double>::infinity(), fmt::format("{}[v{}]", what, v.value()));
      }
    }
  };
  maps(actual.grads, expected.grads, "grad");
  maps(actual.new_params, expected.new_params, "param");
  maps(actual.new_velocity, expected.new_velocity, "velocity");
  if (actual.losses.size() != expected.losses.size()) {
    note(std::numeric_limits<double>::infinity(), "losses");
  } else if (!actual.losses.empty()) {
    const auto n = static_cast<int64_t>(actual.losses.size());
    note(RelativeError(Tensor({n}, actual.losses), Tensor({n}, expected.losses)), "losses");
  }
  return c;
}

namespace {

Json TensorToJson(const Tensor& t) {
  return {{"dims", t.dims()}, {"data", std::vector<double>(t.data().begin(), t.data().end())}};
}

Json MapToJson(const TensorMap& m) {
  Json j = Json::object();
  for (const auto& [v, t] : m) j[fmt::format("v{}", v.value())] = TensorToJson(t);
  return j;
}

TensorMap MapFromJson(const Json& j, std::string_view origin) {
  TensorMap out;
  for (const auto& [key, val] : j.items()) {
    if (key.size() < 2 || key[0] != 'v') {
      throw ValidationError(fmt::format("{}: bad tensor key \"{}\"", origin, key));
    }
    out.emplace(ValueId(std::stoi(key.substr(1))),
                Tensor(val.at("dims").get<std::vector<int64_t>>(),
                       val.at("data").get<std::vector<double>>()));
  }
  return out;
}

}  // namespace

std::string StepResultToJson(const StepResult& r) {
  return internal::Dump({{"version", 1},
                         {"losses", r.losses},
                         {"grads", MapToJson(r.grads)},
                         {"new_params", MapToJson(r.new_params)},
                         {"new_velocity", MapToJson(r.new_velocity)}});
}

StepResult StepResultFromJson(std::string_view text, std::string_view origin) {
  const Json j = internal::ParseJson(text, origin);
  try {
    StepResult r;
    r.losses = j.at("losses").get<std::vector<double>>();
    r.grads = MapFromJson(j.at("grads"), origin);
    r.new_params = MapFromJson(j.at("new_params"), origin);
    r.new_velocity = MapFromJson(j.at("new_velocity"), origin);
    return r;
  } catch (const Json::exception& e) {
    throw ValidationError(fmt::format("{}: {}", origin, e.what()));
  }
}

}  // namespace mpmd
