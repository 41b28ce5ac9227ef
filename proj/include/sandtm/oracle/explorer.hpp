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

#include <cstdint>
#include <exception>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "sandtm/det_scheduler.hpp"
#include "sandtm/oracle/checker.hpp"
#include "sandtm/stm.hpp"

namespace sandtm::oracle {

/// What a program thread sees: the STM, its index, a lazily created worker
/// (destroyed on the program thread when the program returns), and a place
/// to report values the test wants to compare across schedules.
class ProgramEnv {
 public:
  ProgramEnv(Stm& stm, std::size_t index) : stm_(stm), index_(index) {}

  Stm& stm() noexcept { return stm_; }
  std::size_t index() const noexcept { return index_; }
  Scheduler& scheduler() noexcept { return stm_.scheduler(); }

  Worker& worker() {
    if (!worker_) worker_ = std::make_unique<Worker>(stm_);
    return *worker_;
  }

  void observe(Word v) { observations_.push_back(v); }

  WorkerStats finish() {
    WorkerStats s;
    if (worker_) s = worker_->stats();
    worker_.reset();
    return s;
  }

  const std::vector<Word>& observations() const noexcept { return observations_; }

 private:
  Stm& stm_;
  std::size_t index_;
  std::unique_ptr<Worker> worker_;
  std::vector<Word> observations_;
};

using Program = std::function<void(ProgramEnv&)>;

struct ExploreSpec {
  std::size_t heap_cells = 8;
  std::vector<Word> initial;
  Config config{};
  /// Called once per run with that run's STM; returns one program per
  /// thread. Per-run shared state belongs in the returned closures.
  std::function<std::vector<Program>(Stm&)> build;
  /// Upper bound on TM-entry yields of program threads in one run.
  std::size_t max_yields = 20;
  Nanos tick{1'000'000};
  /// Observes each commit as it happens (on the committing thread).
  std::function<void(const CommitRecord&, Scheduler&)> on_commit;
};

struct RunOutcome {
  std::vector<std::size_t> choices;
  /// Number of options at each recorded choice.
  std::vector<std::size_t> arity;
  History history;
  CheckResult check;
  std::vector<WorkerStats> stats;
  std::vector<std::vector<Word>> observations;
  std::exception_ptr error;
  std::string error_text;
  bool propagated_fault = false;
  bool guard_corruption = false;
  std::size_t program_yields = 0;
  Nanos virtual_time{0};

  WorkerStats total() const {
    WorkerStats t;
    for (const auto& s : stats) t += s;
    return t;
  }
};

/// One deterministic run under the given scheduler options.
inline RunOutcome run_schedule(const ExploreSpec& spec,
                               DeterministicScheduler::Options opts) {
  RunOutcome out;
  opts.tick = spec.tick;
  DeterministicScheduler sched(opts);
  Stm stm(spec.heap_cells, spec.config, sched);
  stm.heap().fill(spec.initial);
  HistoryRecorder rec;
  if (spec.on_commit) {
    rec.on_append = [&](const CommitRecord& r) { spec.on_commit(r, sched); };
  }
  stm.set_recorder(&rec);

  std::vector<Program> programs = spec.build(stm);
  out.stats.resize(programs.size());
  out.observations.resize(programs.size());
  for (std::size_t i = 0; i < programs.size(); ++i) {
    sched.spawn_program([&, i] {
      ProgramEnv env(stm, i);
      struct Finish {
        ProgramEnv& env;
        RunOutcome& out;
        std::size_t i;
        ~Finish() {
          out.stats[i] = env.finish();
          out.observations[i] = env.observations();
        }
      } finish{env, out, i};
      programs[i](env);
    });
  }
  try {
    sched.run();
  } catch (const ApplicationFault& e) {
    out.error = std::current_exception();
    out.error_text = e.what();
    out.propagated_fault = true;
  } catch (const GuardCorruption& e) {
    out.error = std::current_exception();
    out.error_text = e.what();
    out.guard_corruption = true;
  } catch (const std::exception& e) {
    out.error = std::current_exception();
    out.error_text = e.what();
  }
  out.choices = sched.taken();
  out.arity = sched.arity();
  out.program_yields = sched.program_yields();
  out.virtual_time = sched.now();
  out.history.initial = spec.initial;
  out.history.initial.resize(spec.heap_cells, 0);
  out.history.commits = rec.records();
  out.history.final_state = stm.heap().snapshot();
  out.check = check_serializable(out.history);
  return out;
}

/// A run made more TM-entry yields than the exploration bound allows.
class BoundExceeded : public std::runtime_error {
 public:
  BoundExceeded(std::size_t yields, std::size_t bound)
      : std::runtime_error("schedule made " + std::to_string(yields) +
                           " yields, bound is " + std::to_string(bound)) {}
};

struct ExploreSummary {
  std::size_t runs = 0;
  bool complete = false;
  std::size_t violations = 0;
  std::size_t propagated_faults = 0;
  std::size_t guard_corruptions = 0;
  std::size_t other_errors = 0;
  std::size_t max_program_yields = 0;
  /// Final heap plus observations, with how many schedules produced each.
  std::map<std::vector<Word>, std::size_t> outcomes;
  std::optional<RunOutcome> first_failure;
};

/// Depth-first enumeration of every schedule of `spec`'s programs. Each run
/// is replayed from scratch with a fixed prefix of choices; the next prefix
/// bumps the deepest choice that still has an untried alternative.
inline ExploreSummary explore_schedules(
    const ExploreSpec& spec,
    const std::function<void(const RunOutcome&)>& on_run = nullptr,
    std::size_t max_runs = 1'000'000) {
  ExploreSummary sum;
  std::vector<std::size_t> prefix;
  for (;;) {
    if (sum.runs >= max_runs) return sum;
    DeterministicScheduler::Options o;
    o.policy = DeterministicScheduler::Policy::Explore;
    o.choices = prefix;
    RunOutcome run = run_schedule(spec, o);
    if (run.program_yields > spec.max_yields) {
      throw BoundExceeded(run.program_yields, spec.max_yields);
    }
    ++sum.runs;
    sum.max_program_yields = std::max(sum.max_program_yields, run.program_yields);
    const bool bad = !run.check.ok() || run.propagated_fault ||
                     run.guard_corruption || run.error != nullptr;
    if (!run.check.ok()) ++sum.violations;
    if (run.propagated_fault) ++sum.propagated_faults;
    if (run.guard_corruption) ++sum.guard_corruptions;
    if (run.error && !run.propagated_fault && !run.guard_corruption) ++sum.other_errors;
    std::vector<Word> key = run.history.final_state;
    for (const auto& obs : run.observations) key.insert(key.end(), obs.begin(), obs.end());
    ++sum.outcomes[key];
    if (on_run) on_run(run);

    std::vector<std::size_t> next = run.choices;
    const std::vector<std::size_t> arity = run.arity;
    if (bad && !sum.first_failure) sum.first_failure = std::move(run);
    while (!next.empty() && next.back() + 1 >= arity[next.size() - 1]) next.pop_back();
    if (next.empty()) {
      sum.complete = true;
      return sum;
    }
    ++next.back();
    prefix = std::move(next);
  }
}

}  // namespace sandtm::oracle
