#pragma once

#include <algorithm>
#include <chrono>
#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "vkg/error.hpp"
#include "vkg/window.hpp"

namespace vkg {

struct BatchPolicy {
  std::size_t max_batch = 1;
  std::chrono::milliseconds flush_timeout{10};
};

/// A window transform with declared slot reads/writes. `transform` must be
/// safe to call concurrently on distinct windows.
struct Pipe {
  std::string name;
  std::vector<std::string> reads;
  std::vector<std::string> writes;
  std::function<DataWindow(DataWindow)> transform;
  /// Vectorized transform; must return one window per input, same order.
  std::function<std::vector<DataWindow>(std::vector<DataWindow>)> batch_transform;
  std::optional<BatchPolicy> batch;
};

/// Extracts a pipe-specific request from a window and injects the response.
template <class Request, class Response>
struct PipeDirector {
  std::string name;
  std::function<Request(const DataWindow&)> extract;
  std::function<DataWindow(DataWindow, Response)> inject;
};

template <class Request, class Response>
Pipe directed_pipe(std::string name, std::vector<std::string> reads, std::vector<std::string> writes,
                   PipeDirector<Request, Response> director,
                   std::function<Response(Request)> infer) {
  Pipe pipe;
  pipe.name = std::move(name);
  pipe.reads = std::move(reads);
  pipe.writes = std::move(writes);
  pipe.transform = [director = std::move(director), infer = std::move(infer)](DataWindow w) {
    auto response = infer(director.extract(w));
    return director.inject(std::move(w), std::move(response));
  };
  return pipe;
}

/// Failure of one pipe on one window.
class StageError : public Error {
 public:
  StageError(std::string pipe, std::string code, const std::string& message, std::string window_id)
      : Error(std::move(code), message, std::move(window_id)), pipe_(std::move(pipe)) {}
  const std::string& pipe() const { return pipe_; }

 private:
  std::string pipe_;
};

/// Runs `pipe` on one window and rejects writes outside `pipe.writes`,
/// removed slots and identity changes. Throws StageError.
DataWindow apply_pipe(const Pipe& pipe, DataWindow window);

struct PipelineSpec;

struct PipelineChild {
  PipelineChild(Pipe p);          // NOLINT(google-explicit-constructor)
  PipelineChild(PipelineSpec s);  // NOLINT(google-explicit-constructor)

  std::variant<Pipe, std::shared_ptr<const PipelineSpec>> node;
};

struct PipelineSpec {
  enum class Variant { sequential, parallel, loop };

  Variant variant = Variant::sequential;
  std::string name = "pipeline";
  std::vector<PipelineChild> children;
  std::function<bool(const DataWindow&)> loop_predicate;
  int max_iterations = 1;
  std::size_t stage_queue_capacity = 4;
};

PipelineSpec sequential(std::string name, std::vector<PipelineChild> children);
PipelineSpec parallel(std::string name, std::vector<PipelineChild> children);
PipelineSpec loop(std::string name, std::vector<PipelineChild> children,
                  std::function<bool(const DataWindow&)> predicate, int max_iterations);

/// Slot key where a loop records {"iterations", "max_reached"}.
std::string loop_slot_key(const std::string& loop_name);

/// Union of declared writes, including loop bookkeeping keys.
std::vector<std::string> declared_writes(const PipelineSpec& spec);

/// Throws Error("invalid-pipeline-spec" | "overlapping-parallel-writes").
void validate(const PipelineSpec& spec);

/// A nested pipeline behaves like a single pipe.
Pipe as_pipe(PipelineSpec spec);

/// Runs a spec on one window in the calling thread (Parallel children fan out).
DataWindow run_inline(const PipelineSpec& spec, DataWindow window);

DataWindow run_loop(const std::vector<Pipe>& pipes, DataWindow window,
                    const std::function<bool(const DataWindow&)>& predicate, int max_iterations,
                    const std::string& loop_name = "loop");

struct StageFailure {
  std::string pipe;
  std::string window_id;
  std::uint32_t window_index = 0;
  std::string code;
  std::string message;
};

/// Pull-style window stream; nullopt ends the stream.
using WindowSource = std::function<std::optional<DataWindow>()>;
using WindowSink = std::function<void(DataWindow)>;
using FailureSink = std::function<void(const StageFailure&)>;

WindowSource from_vector(std::vector<DataWindow> windows);

struct RunStats {
  std::size_t windows_in = 0;
  std::size_t windows_out = 0;
  std::size_t failures = 0;
  /// Maximum occupancy seen on any inter-stage queue.
  std::size_t max_queue_depth = 0;
};

/// Streams windows through the spec. A Sequential spec runs each child as its
/// own stage thread connected by bounded queues, so distinct windows occupy
/// distinct stages concurrently; other variants run as a single stage.
/// Output order equals input order; a failing window is dropped and reported.
RunStats run_pipeline(const PipelineSpec& spec, WindowSource source, const WindowSink& sink,
                      const FailureSink& on_failure = {});

struct RunResult {
  std::vector<DataWindow> windows;
  std::vector<StageFailure> failures;
  RunStats stats;
};

RunResult run_pipeline(const PipelineSpec& spec, WindowSource source);

/// Runs a batch-capable pipe over a stream with the given policy.
RunResult run_batched(Pipe pipe, BatchPolicy policy, WindowSource source);

// ---- branching / merging --------------------------------------------------

template <class T>
struct BranchUnit {
  std::string window_id;
  std::size_t branch_index = 0;
  T value;
};

template <class Unit>
std::vector<BranchUnit<Unit>> branch(const DataWindow& window,
                                     const std::function<std::vector<Unit>(const DataWindow&)>& splitter) {
  std::vector<BranchUnit<Unit>> out;
  auto units = splitter(window);
  out.reserve(units.size());
  for (std::size_t i = 0; i < units.size(); ++i) {
    out.push_back(BranchUnit<Unit>{window.window_id(), i, std::move(units[i])});
  }
  return out;
}

/// Reassembles branch results in branch_index order. Every index in
/// [0, expected) must be present exactly once, else Error("missing-branch").
template <class Result>
DataWindow merge(DataWindow window, std::vector<BranchUnit<Result>> results, std::size_t expected,
                 const std::function<DataWindow(DataWindow, std::vector<Result>)>& merger) {
  std::sort(results.begin(), results.end(),
            [](const auto& a, const auto& b) { return a.branch_index < b.branch_index; });
  if (results.size() != expected) {
    throw Error("missing-branch",
                "expected " + std::to_string(expected) + " branches, got " +
                    std::to_string(results.size()),
                window.window_id());
  }
  std::vector<Result> ordered;
  ordered.reserve(results.size());
  for (std::size_t i = 0; i < results.size(); ++i) {
    if (results[i].branch_index != i || results[i].window_id != window.window_id()) {
      throw Error("missing-branch", "branch " + std::to_string(i) + " never arrived",
                  window.window_id());
    }
    ordered.push_back(std::move(results[i].value));
  }
  return merger(std::move(window), std::move(ordered));
}

/// Pipe that splits a window into units, maps each unit independently and
/// merges the results back.
template <class Unit, class Result>
Pipe branching_pipe(std::string name, std::vector<std::string> reads, std::vector<std::string> writes,
                    std::function<std::vector<Unit>(const DataWindow&)> splitter,
                    std::function<Result(const BranchUnit<Unit>&)> map_branch,
                    std::function<DataWindow(DataWindow, std::vector<Result>)> merger) {
  Pipe pipe;
  pipe.name = std::move(name);
  pipe.reads = std::move(reads);
  pipe.writes = std::move(writes);
  pipe.transform = [splitter = std::move(splitter), map_branch = std::move(map_branch),
                    merger = std::move(merger)](DataWindow w) {
    auto units = branch<Unit>(w, splitter);
    std::vector<BranchUnit<Result>> results;
    results.reserve(units.size());
    for (const auto& u : units) {
      results.push_back(BranchUnit<Result>{u.window_id, u.branch_index, map_branch(u)});
    }
    const std::size_t expected = units.size();
    return merge<Result>(std::move(w), std::move(results), expected, merger);
  };
  return pipe;
}

}  // namespace vkg
