/*
 * Copyright 2026 The sandtm Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *   http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <algorithm>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "sandtm/harness/ci.hpp"
#include "sandtm/harness/report.hpp"
#include "sandtm/harness/workloads.hpp"

namespace sandtm::harness {

/// A kernel finished in a wrong state, or its counters disagree.
class CorrectnessFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct BenchConfig {
  std::vector<Kernel> workloads{kAllKernels.begin(), kAllKernels.end()};
  std::vector<Strategy> strategies{kAllStrategies.begin(), kAllStrategies.end()};
  std::vector<std::size_t> threads{1, 2, 4, 8};
  CiRule ci{};
  std::size_t max_reps = 20;
  std::uint64_t seed = 1;
  std::optional<std::size_t> ops_per_thread;
  Nanos step{1000};
  /// Called after every repetition with a short progress line.
  std::function<void(const std::string&)> progress;
};

/// Throws CorrectnessFailure on the first inconsistency.
inline void verify_run(const KernelRun& run) {
  const std::string where = std::string(to_string(run.kernel)) + "/" +
                            std::string(to_string(run.strategy)) + "/" +
                            std::to_string(run.threads) + " threads: ";
  if (!run.end_state_ok()) throw CorrectnessFailure(where + run.end_state_error);
  if (!run.commits_match()) {
    throw CorrectnessFailure(where + std::to_string(run.total.commits) + " commits, expected " +
                             std::to_string(run.expected_commits));
  }
  if (run.total.commits + run.total.aborts != run.total.leader_executions) {
    throw CorrectnessFailure(where + "commits + aborts != attempts");
  }
}

/// Repeat one cell until the CI rule stops or `max_reps` is reached.
inline CellReport run_cell(Kernel k, Strategy s, std::size_t threads, const BenchConfig& cfg) {
  CellReport c;
  c.workload = std::string(to_string(k));
  c.strategy = std::string(to_string(s));
  c.threads = threads;
  std::vector<double> times;
  const std::size_t cap = std::max<std::size_t>(cfg.max_reps, 1);
  while (times.size() < cap) {
    KernelOptions o;
    o.threads = threads;
    o.ops_per_thread = cfg.ops_per_thread;
    o.seed = cfg.seed + times.size();
    o.step = cfg.step;
    const KernelRun run = run_kernel(k, s, o);
    verify_run(run);
    times.push_back(run.wall_seconds);
    c.commits += run.total.commits;
    c.aborts += run.total.aborts;
    c.full_validations += run.total.full_validations;
    c.comparisons += run.total.validation_comparisons;
    c.leader_execs += run.total.leader_executions;
    c.helper_execs += run.total.helper_executions;
    c.helper_validations += run.total.helper_validations;
    c.dooms += run.total.dooms_sent;
    c.beacon_fires += run.total.beacon_fires;
    if (cfg.progress) {
      cfg.progress(c.workload + " " + c.strategy + " t=" + std::to_string(threads) +
                   " rep " + std::to_string(times.size()) + ": " +
                   std::to_string(run.wall_seconds) + " s");
    }
    if (cfg.ci.decide(times) == CiDecision::Stop) break;
  }
  const SampleSummary sum = summarize(times);
  c.reps = times.size();
  c.mean_s = sum.mean;
  c.ci_halfwidth_s = cfg.ci.halfwidth(sum);
  return c;
}

/// Run every (workload, strategy, threads) cell on real threads.
inline RunReport run_benchmark_matrix(const BenchConfig& cfg) {
  RunReport r;
  r.confidence = cfg.ci.confidence;
  r.ci_threshold = cfg.ci.threshold;
  r.z = cfg.ci.z();
  r.seed = cfg.seed;
  r.max_reps = cfg.max_reps;
  r.hardware_threads = std::thread::hardware_concurrency();
  const std::size_t most = cfg.threads.empty()
                               ? 0
                               : *std::max_element(cfg.threads.begin(), cfg.threads.end());
  if (r.hardware_threads != 0 && most > r.hardware_threads) {
    r.warnings.push_back(std::to_string(most) + " threads requested but only " +
                         std::to_string(r.hardware_threads) +
                         " hardware threads; timings are oversubscribed");
  }
  for (Kernel k : cfg.workloads) {
    for (Strategy s : cfg.strategies) {
      for (std::size_t t : cfg.threads) r.cells.push_back(run_cell(k, s, t, cfg));
    }
  }
  return r;
}

}  // namespace sandtm::harness
