#include "vkg/pipeline.hpp"

#include <future>
#include <map>
#include <mutex>
#include <set>
#include <thread>

#include "vkg/bounded_queue.hpp"

namespace vkg {

namespace {

void check_isolation(const std::string& pipe, const std::vector<std::string>& writes,
                     const DataWindow& before, const DataWindow& after) {
  const auto fail = [&](std::string code, const std::string& msg) {
    throw StageError(pipe, std::move(code), msg, before.window_id());
  };
  if (after.window_id() != before.window_id() || after.transcript() != before.transcript() ||
      after.frames().size() != before.frames().size()) {
    fail("identity-changed", "pipe '" + pipe + "' altered window identity");
  }
  for (std::size_t i = 0; i < before.frames().size(); ++i) {
    if (before.frames()[i].ref != after.frames()[i].ref) {
      fail("identity-changed", "pipe '" + pipe + "' altered the frame list");
    }
  }
  const std::set<std::string> allowed(writes.begin(), writes.end());
  for (const auto& [key, slot] : before.slots()) {
    const auto* now = after.find_slot(key);
    if (now == nullptr) fail("slot-removed", "pipe '" + pipe + "' removed slot '" + key + "'");
    if (!(*now == slot) && !allowed.contains(key)) {
      fail("undeclared-write", "pipe '" + pipe + "' rewrote undeclared slot '" + key + "'");
    }
  }
  for (const auto& [key, slot] : after.slots()) {
    if (!before.has_slot(key) && !allowed.contains(key)) {
      fail("undeclared-write", "pipe '" + pipe + "' wrote undeclared slot '" + key + "'");
    }
  }
}

DataWindow run_child(const PipelineChild& child, DataWindow window);

DataWindow run_parallel(const PipelineSpec& spec, DataWindow window) {
  std::vector<std::future<DataWindow>> futures;
  futures.reserve(spec.children.size());
  for (const auto& child : spec.children) {
    futures.push_back(std::async(std::launch::async,
                                 [&child, copy = window]() mutable { return run_child(child, std::move(copy)); }));
  }
  std::vector<DataWindow> outputs;
  std::exception_ptr first_error;
  for (auto& f : futures) {
    try {
      outputs.push_back(f.get());
    } catch (...) {
      if (!first_error) first_error = std::current_exception();
    }
  }
  if (first_error) std::rethrow_exception(first_error);

  for (std::size_t i = 0; i < spec.children.size(); ++i) {
    const auto& child = spec.children[i];
    const auto writes = std::holds_alternative<Pipe>(child.node)
                            ? std::get<Pipe>(child.node).writes
                            : declared_writes(*std::get<std::shared_ptr<const PipelineSpec>>(child.node));
    for (const auto& key : writes) {
      if (const auto* slot = outputs[i].find_slot(key)) {
        if (const auto* old = window.find_slot(key); old == nullptr || !(*old == *slot)) {
          window = std::move(window).with_slot(*slot);
        }
      }
    }
  }
  return window;
}

std::vector<Pipe> children_as_pipes(const PipelineSpec& spec) {
  std::vector<Pipe> pipes;
  for (const auto& child : spec.children) {
    if (const auto* p = std::get_if<Pipe>(&child.node)) {
      pipes.push_back(*p);
    } else {
      pipes.push_back(as_pipe(*std::get<std::shared_ptr<const PipelineSpec>>(child.node)));
    }
  }
  return pipes;
}

DataWindow run_child(const PipelineChild& child, DataWindow window) {
  if (const auto* pipe = std::get_if<Pipe>(&child.node)) return apply_pipe(*pipe, std::move(window));
  const auto& spec = *std::get<std::shared_ptr<const PipelineSpec>>(child.node);
  DataWindow before = window;
  DataWindow after = run_inline(spec, std::move(window));
  check_isolation(spec.name, declared_writes(spec), before, after);
  return after;
}

std::string child_name(const PipelineChild& child) {
  if (const auto* p = std::get_if<Pipe>(&child.node)) return p->name;
  return std::get<std::shared_ptr<const PipelineSpec>>(child.node)->name;
}

// ---- streaming --------------------------------------------------------------

struct Envelope {
  std::uint64_t seq = 0;
  std::optional<DataWindow> window;  // nullopt: dropped upstream
};

using Queue = BoundedQueue<Envelope>;

class FailureLog {
 public:
  explicit FailureLog(const FailureSink& sink) : sink_(sink) {}

  void report(const std::string& pipe, const DataWindow& w, const std::string& code,
              const std::string& message) {
    std::lock_guard lock(mu_);
    ++count_;
    if (sink_) sink_(StageFailure{pipe, w.window_id(), w.window_index(), code, message});
  }

  std::size_t count() const {
    std::lock_guard lock(mu_);
    return count_;
  }

 private:
  const FailureSink& sink_;
  mutable std::mutex mu_;
  std::size_t count_ = 0;
};

template <class Fn>
std::optional<DataWindow> guarded(FailureLog& log, const std::string& name, const DataWindow& window,
                                  Fn&& fn) {
  try {
    return fn(DataWindow(window));
  } catch (const StageError& e) {
    log.report(e.pipe(), window, e.code(), e.what());
  } catch (const Error& e) {
    log.report(name, window, e.code(), e.what());
  } catch (const std::exception& e) {
    log.report(name, window, "stage-failure", e.what());
  }
  return std::nullopt;
}

void single_stage(const PipelineChild& child, Queue& in, Queue& out, FailureLog& log) {
  const std::string name = child_name(child);
  while (auto env = in.pop()) {
    if (env->window) {
      env->window = guarded(log, name, *env->window,
                            [&](DataWindow w) { return run_child(child, std::move(w)); });
    }
    if (!out.push(std::move(*env))) break;
  }
  out.close();
}

void batch_stage(const Pipe& pipe, const BatchPolicy& policy, Queue& in, Queue& out, FailureLog& log) {
  const std::size_t max_batch = std::max<std::size_t>(1, policy.max_batch);
  bool open = true;
  while (open) {
    auto first = in.pop();
    if (!first) break;
    std::vector<Envelope> batch;
    batch.push_back(std::move(*first));
    const auto deadline = std::chrono::steady_clock::now() + policy.flush_timeout;
    while (batch.size() < max_batch) {
      std::optional<Envelope> next;
      const auto status = in.pop_until(deadline, next);
      if (status == Queue::PopStatus::item) {
        batch.push_back(std::move(*next));
      } else {
        if (status == Queue::PopStatus::closed) open = false;
        break;
      }
    }

    std::vector<std::size_t> live;
    std::vector<DataWindow> inputs;
    for (std::size_t i = 0; i < batch.size(); ++i) {
      if (batch[i].window) {
        live.push_back(i);
        inputs.push_back(*batch[i].window);
      }
    }
    if (!inputs.empty()) {
      std::vector<DataWindow> outputs;
      bool batch_ok = true;
      try {
        if (pipe.batch_transform) {
          outputs = pipe.batch_transform(inputs);
          if (outputs.size() != inputs.size()) {
            throw Error("batch-size-mismatch", "batch transform returned a different window count");
          }
        } else {
          for (const auto& w : inputs) outputs.push_back(pipe.transform(w));
        }
      } catch (const std::exception& e) {
        batch_ok = false;
        const auto* err = dynamic_cast<const Error*>(&e);
        for (const auto& w : inputs) log.report(pipe.name, w, err ? err->code() : "stage-failure", e.what());
        for (auto idx : live) batch[idx].window.reset();
      }
      if (batch_ok) {
        for (std::size_t j = 0; j < live.size(); ++j) {
          auto& slot = batch[live[j]].window;
          try {
            check_isolation(pipe.name, pipe.writes, inputs[j], outputs[j]);
            slot = std::move(outputs[j]);
          } catch (const StageError& e) {
            log.report(e.pipe(), inputs[j], e.code(), e.what());
            slot.reset();
          }
        }
      }
    }
    for (auto& env : batch) {
      if (!out.push(std::move(env))) {
        open = false;
        break;
      }
    }
  }
  out.close();
}

}  // namespace

// ---- pipes --------------------------------------------------------------------

DataWindow apply_pipe(const Pipe& pipe, DataWindow window) {
  if (!pipe.transform) {
    throw StageError(pipe.name, "invalid-pipe", "pipe has no transform", window.window_id());
  }
  DataWindow before = window;
  DataWindow after;
  try {
    after = pipe.transform(std::move(window));
  } catch (const StageError&) {
    throw;
  } catch (const Error& e) {
    throw StageError(pipe.name, e.code(), e.what(), before.window_id());
  } catch (const std::exception& e) {
    throw StageError(pipe.name, "stage-failure", e.what(), before.window_id());
  }
  check_isolation(pipe.name, pipe.writes, before, after);
  return after;
}

PipelineChild::PipelineChild(Pipe p) : node(std::move(p)) {}
PipelineChild::PipelineChild(PipelineSpec s)
    : node(std::make_shared<const PipelineSpec>(std::move(s))) {}

PipelineSpec sequential(std::string name, std::vector<PipelineChild> children) {
  PipelineSpec spec;
  spec.variant = PipelineSpec::Variant::sequential;
  spec.name = std::move(name);
  spec.children = std::move(children);
  return spec;
}

PipelineSpec parallel(std::string name, std::vector<PipelineChild> children) {
  PipelineSpec spec = sequential(std::move(name), std::move(children));
  spec.variant = PipelineSpec::Variant::parallel;
  return spec;
}

PipelineSpec loop(std::string name, std::vector<PipelineChild> children,
                  std::function<bool(const DataWindow&)> predicate, int max_iterations) {
  PipelineSpec spec = sequential(std::move(name), std::move(children));
  spec.variant = PipelineSpec::Variant::loop;
  spec.loop_predicate = std::move(predicate);
  spec.max_iterations = max_iterations;
  return spec;
}

std::string loop_slot_key(const std::string& loop_name) { return "loop." + loop_name; }

std::vector<std::string> declared_writes(const PipelineSpec& spec) {
  std::set<std::string> keys;
  for (const auto& child : spec.children) {
    if (const auto* p = std::get_if<Pipe>(&child.node)) {
      keys.insert(p->writes.begin(), p->writes.end());
    } else {
      const auto nested = declared_writes(*std::get<std::shared_ptr<const PipelineSpec>>(child.node));
      keys.insert(nested.begin(), nested.end());
    }
  }
  if (spec.variant == PipelineSpec::Variant::loop) keys.insert(loop_slot_key(spec.name));
  return {keys.begin(), keys.end()};
}

void validate(const PipelineSpec& spec) {
  const auto invalid = [&](const std::string& msg) {
    throw Error("invalid-pipeline-spec", msg, spec.name);
  };
  if (spec.stage_queue_capacity == 0) invalid("stage_queue_capacity must be positive");
  if (spec.variant == PipelineSpec::Variant::loop) {
    if (!spec.loop_predicate) invalid("loop pipeline requires a predicate");
    if (spec.max_iterations < 1) invalid("loop pipeline requires max_iterations >= 1");
  }
  std::map<std::string, std::string> owner;
  for (const auto& child : spec.children) {
    std::vector<std::string> writes;
    if (const auto* p = std::get_if<Pipe>(&child.node)) {
      if (!p->transform) invalid("pipe '" + p->name + "' has no transform");
      if (p->batch && p->batch->max_batch < 1) invalid("pipe '" + p->name + "' has max_batch < 1");
      writes = p->writes;
    } else {
      const auto& nested = *std::get<std::shared_ptr<const PipelineSpec>>(child.node);
      validate(nested);
      writes = declared_writes(nested);
    }
    if (spec.variant != PipelineSpec::Variant::parallel) continue;
    const std::string name = child_name(child);
    for (const auto& key : writes) {
      const auto [it, inserted] = owner.emplace(key, name);
      if (!inserted) {
        throw Error("overlapping-parallel-writes",
                    "parallel children '" + it->second + "' and '" + name + "' both write '" + key + "'",
                    spec.name);
      }
    }
  }
}

Pipe as_pipe(PipelineSpec spec) {
  validate(spec);
  Pipe pipe;
  pipe.name = spec.name;
  pipe.writes = declared_writes(spec);
  std::set<std::string> reads;
  for (const auto& child : spec.children) {
    if (const auto* p = std::get_if<Pipe>(&child.node)) reads.insert(p->reads.begin(), p->reads.end());
  }
  pipe.reads.assign(reads.begin(), reads.end());
  pipe.transform = [shared = std::make_shared<const PipelineSpec>(std::move(spec))](DataWindow w) {
    return run_inline(*shared, std::move(w));
  };
  return pipe;
}

DataWindow run_inline(const PipelineSpec& spec, DataWindow window) {
  switch (spec.variant) {
    case PipelineSpec::Variant::sequential:
      for (const auto& child : spec.children) window = run_child(child, std::move(window));
      return window;
    case PipelineSpec::Variant::parallel:
      return run_parallel(spec, std::move(window));
    case PipelineSpec::Variant::loop:
      return run_loop(children_as_pipes(spec), std::move(window), spec.loop_predicate,
                      spec.max_iterations, spec.name);
  }
  return window;
}

DataWindow run_loop(const std::vector<Pipe>& pipes, DataWindow window,
                    const std::function<bool(const DataWindow&)>& predicate, int max_iterations,
                    const std::string& loop_name) {
  if (max_iterations < 1) throw Error("invalid-pipeline-spec", "max_iterations must be >= 1", loop_name);
  int iterations = 0;
  bool satisfied = false;
  while (iterations < max_iterations) {
    for (const auto& pipe : pipes) window = apply_pipe(pipe, std::move(window));
    ++iterations;
    if (predicate && predicate(window)) {
      satisfied = true;
      break;
    }
  }
  nlohmann::json record = {{"iterations", iterations}, {"max_reached", !satisfied}};
  return std::move(window).with_slot(
      make_slot(loop_slot_key(loop_name), GenericPayload{std::move(record)}, "loop:" + loop_name));
}

WindowSource from_vector(std::vector<DataWindow> windows) {
  auto shared = std::make_shared<std::vector<DataWindow>>(std::move(windows));
  auto next = std::make_shared<std::size_t>(0);
  return [shared, next]() -> std::optional<DataWindow> {
    if (*next >= shared->size()) return std::nullopt;
    return (*shared)[(*next)++];
  };
}

RunStats run_pipeline(const PipelineSpec& spec, WindowSource source, const WindowSink& sink,
                      const FailureSink& on_failure) {
  validate(spec);
  std::vector<PipelineChild> stages;
  if (spec.variant == PipelineSpec::Variant::sequential) {
    stages = spec.children;
  } else {
    stages.emplace_back(spec);
  }

  FailureLog log(on_failure);
  std::vector<std::unique_ptr<Queue>> queues;
  for (std::size_t i = 0; i <= stages.size(); ++i) {
    queues.push_back(std::make_unique<Queue>(spec.stage_queue_capacity));
  }

  RunStats stats;
  std::exception_ptr source_error;
  std::vector<std::thread> threads;
  threads.emplace_back([&] {
    std::uint64_t seq = 0;
    try {
      while (auto w = source()) {
        ++stats.windows_in;
        if (!queues.front()->push(Envelope{seq++, std::move(*w)})) break;
      }
    } catch (...) {
      source_error = std::current_exception();
    }
    queues.front()->close();
  });
  for (std::size_t i = 0; i < stages.size(); ++i) {
    threads.emplace_back([&, i] {
      const auto& child = stages[i];
      const auto* pipe = std::get_if<Pipe>(&child.node);
      if (pipe != nullptr && pipe->batch) {
        batch_stage(*pipe, *pipe->batch, *queues[i], *queues[i + 1], log);
      } else {
        single_stage(child, *queues[i], *queues[i + 1], log);
      }
    });
  }

  std::exception_ptr sink_error;
  std::map<std::uint64_t, std::optional<DataWindow>> pending;
  std::uint64_t expected = 0;
  while (auto env = queues.back()->pop()) {
    pending.emplace(env->seq, std::move(env->window));
    for (auto it = pending.find(expected); it != pending.end(); it = pending.find(expected)) {
      if (it->second && !sink_error) {
        try {
          sink(std::move(*it->second));
          ++stats.windows_out;
        } catch (...) {
          sink_error = std::current_exception();
          for (auto& q : queues) q->close();
        }
      }
      pending.erase(it);
      ++expected;
    }
  }
  for (auto& t : threads) t.join();
  for (const auto& q : queues) stats.max_queue_depth = std::max(stats.max_queue_depth, q->high_water());
  stats.failures = log.count();
  if (sink_error) std::rethrow_exception(sink_error);
  if (source_error) std::rethrow_exception(source_error);
  return stats;
}

RunResult run_pipeline(const PipelineSpec& spec, WindowSource source) {
  RunResult result;
  result.stats = run_pipeline(
      spec, std::move(source), [&](DataWindow w) { result.windows.push_back(std::move(w)); },
      [&](const StageFailure& f) { result.failures.push_back(f); });
  return result;
}

RunResult run_batched(Pipe pipe, BatchPolicy policy, WindowSource source) {
  pipe.batch = policy;
  return run_pipeline(sequential("batched:" + pipe.name, {std::move(pipe)}), std::move(source));
}

}  // namespace vkg
