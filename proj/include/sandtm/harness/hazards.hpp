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

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "sandtm/oracle/explorer.hpp"

namespace sandtm::harness {

inline constexpr std::array<std::string_view, 5> kHazardNames = {
    "privatization-fault", "doomed-loop", "stray-stack-write", "clone-miss",
    "over-allocation"};

inline bool is_hazard_name(std::string_view n) {
  for (auto h : kHazardNames) {
    if (h == n) return true;
  }
  return false;
}

/// Non-transactional bookkeeping of one scenario run. Only the thread that
/// holds the scheduler baton touches it, and only leader descriptors write
/// it (a clone helper runs the same body).
struct ScenarioState {
  std::vector<std::string> trace;
  /// The victim computed on a view that no serial execution produces.
  bool hazard_seen = false;
  std::optional<Nanos> conflict_at;
  std::optional<Nanos> exit_at;
  std::optional<AbortReason> first_abort;
  /// Victim full validations right before the hazardous operation and when
  /// the attempt's abort surfaced in the body.
  std::optional<std::uint64_t> validations_before;
  std::optional<std::uint64_t> validations_after;
  std::uint64_t helper_rounds_at_conflict = 0;
  std::uint64_t helper_rounds_at_exit = 0;
  /// over-allocation only.
  std::optional<std::uint64_t> granted_before_big;
  std::optional<std::uint64_t> granted_after_big;
  std::optional<std::uint64_t> valid_big_alloc_validations;
  std::size_t leaked_blocks = 0;
  std::size_t leaked_bytes = 0;
  Worker* victim = nullptr;

  void note(const Scheduler& s, const std::string& what) {
    trace.push_back("@" + std::to_string(s.now().count() / 1000) + "us " + what);
  }
};

/// Objects reachable through a handle stored in a shared cell. Retiring an
/// object leaves its handle dangling; dereferencing a dangling handle is the
/// modeled hardware fault.
class HandleTable {
 public:
  explicit HandleTable(std::size_t n) : live_(n + 1, true) { live_[0] = false; }

  void retire(Word h) { live_.at(h) = false; }
  bool live(Word h) const { return h < live_.size() && live_[h]; }

  /// Uninstrumented load through `h`: an interleaving point, but not a TM
  /// operation, so no doom check happens here.
  template <class OnDangling>
  void deref(Tx& tx, Word h, OnDangling&& on_dangling) const {
    tx.stm().scheduler().yield(YieldPoint::Read);
    if (live(h)) return;
    on_dangling();
    tx.raise_fault("deref-retired", "handle " + std::to_string(h));
  }

 private:
  std::vector<bool> live_;
};

struct Scenario {
  std::string name;
  oracle::ExploreSpec spec;
  /// Reset at the start of every run built from `spec`.
  std::shared_ptr<ScenarioState> state;
  /// Victim turns before the committer runs in the scripted interleaving.
  std::size_t victim_turns = 0;
};

namespace detail {

inline std::uint64_t helper_rounds(const Worker* w) {
  if (w == nullptr || w->helper() == nullptr) return 0;
  return w->helper()->counters().validation_rounds;
}

inline bool leader(const Tx& tx) { return tx.role() == TxRole::Leader; }

inline void note_abort(ScenarioState& st, Tx& tx, AbortReason r) {
  if (!leader(tx) || st.first_abort) return;
  st.first_abort = r;
  st.exit_at = tx.stm().scheduler().now();
  st.validations_after = tx.counters().full_validations;
  st.helper_rounds_at_exit = helper_rounds(st.victim);
  st.note(tx.stm().scheduler(), "victim aborted: " + std::string(to_string(r)));
}

/// Victim program: registers its worker for the committer's bookkeeping and
/// records how the first aborted attempt ended.
template <class Body>
oracle::Program victim(std::shared_ptr<ScenarioState> st, Body body) {
  return [st, body](oracle::ProgramEnv& env) {
    Worker& w = env.worker();
    st->victim = &w;
    struct Clear {
      ScenarioState& s;
      ~Clear() { s.victim = nullptr; }
    } clear{*st};
    w.run([&](Tx& tx) {
      try {
        body(env, tx);
      } catch (const TxAbort& a) {
        note_abort(*st, tx, a.reason);
        throw;
      }
    });
    if (!st->first_abort && w.stats().aborts > 0) {
      for (std::size_t i = 0; i < kAbortReasonCount; ++i) {
        if (w.stats().aborts_by_reason[i] > 0) {
          st->first_abort = static_cast<AbortReason>(i);
          break;
        }
      }
    }
  };
}

template <class Body>
oracle::Program committer(std::shared_ptr<ScenarioState> st, Body body) {
  return [st, body](oracle::ProgramEnv& env) {
    env.worker().run([&](Tx& tx) { body(tx); });
  };
}

inline Scenario base(std::string name, Strategy s, std::size_t cells,
                     std::vector<Word> initial) {
  Scenario sc;
  sc.name = std::move(name);
  sc.state = std::make_shared<ScenarioState>();
  sc.spec.heap_cells = cells;
  sc.spec.initial = std::move(initial);
  sc.spec.initial.resize(cells, 0);
  sc.spec.config.strategy = s;
  // Victims never write shared cells, so the first writer is the conflict.
  // Sampled inside the commit, before any helper can react to it.
  auto st = sc.state;
  sc.spec.on_commit = [st](const CommitRecord& r, Scheduler& sched) {
    if (r.read_only() || st->conflict_at) return;
    st->conflict_at = sched.now();
    st->helper_rounds_at_conflict = helper_rounds(st->victim);
    st->note(sched, "conflicting commit");
  };
  return sc;
}

}  // namespace detail

/// Reader loads a handle; the privatizer nulls the shared pointer, commits,
/// and retires the object; the reader then dereferences the stale handle.
inline Scenario privatization_fault(Strategy s) {
  Scenario sc = detail::base("privatization-fault", s, 4, {1, 7});
  auto st = sc.state;
  sc.victim_turns = 3;
  sc.spec.build = [st](Stm&) {
    *st = ScenarioState{};
    auto table = std::make_shared<HandleTable>(1);
    std::vector<oracle::Program> ps;
    ps.push_back(detail::victim(st, [st, table](oracle::ProgramEnv& env, Tx& tx) {
      const Word h = tx.read(0);
      if (h == 0) return;
      table->deref(tx, h, [&] {
        if (!detail::leader(tx)) return;
        st->hazard_seen = true;
        st->validations_before = tx.counters().full_validations;
      });
      const Word v = tx.read(1);
      if (detail::leader(tx)) env.observe(v);
    }));
    ps.push_back([st, table](oracle::ProgramEnv& env) {
      detail::committer(st, [](Tx& tx) { tx.write(0, 0); })(env);
      table->retire(1);
      st->note(env.scheduler(), "object retired");
    });
    return ps;
  };
  return sc;
}

/// Invariant x == y. The committer bumps both; a reader that saw the old x
/// and the new y spins on `x != y` with only the progress hook inside.
inline Scenario doomed_loop(Strategy s, std::size_t pre_reads = 0) {
  Scenario sc = detail::base("doomed-loop", s, 8, {0, 0, 1, 2, 3, 4, 5, 6});
  auto st = sc.state;
  sc.victim_turns = 3 + pre_reads;
  sc.spec.build = [st, pre_reads](Stm&) {
    *st = ScenarioState{};
    std::vector<oracle::Program> ps;
    ps.push_back(detail::victim(st, [st, pre_reads](oracle::ProgramEnv&, Tx& tx) {
      for (std::size_t i = 0; i < pre_reads; ++i) tx.read(2 + i % 6);
      const Word x = tx.read(0);
      const Word y = tx.read(1);
      if (x != y && detail::leader(tx)) {
        st->hazard_seen = true;
        st->validations_before = tx.counters().full_validations;
        st->note(tx.stm().scheduler(), "victim entered doomed loop");
      }
      while (x != y) tx.progress();
    }));
    ps.push_back(detail::committer(st, [](Tx& tx) {
      const Word x = tx.read(0);
      const Word y = tx.read(1);
      tx.write(0, x + 1);
      tx.write(1, y + 1);
    }));
    return ps;
  };
  return sc;
}

/// Invariant x - y == 3. The difference indexes a 4-slot local frame; an
/// inconsistent view yields 4, which lands on the frame's upper guard.
inline Scenario stray_stack_write(Strategy s) {
  Scenario sc = detail::base("stray-stack-write", s, 2, {3, 0});
  auto st = sc.state;
  sc.victim_turns = 3;
  sc.spec.build = [st](Stm&) {
    *st = ScenarioState{};
    std::vector<oracle::Program> ps;
    ps.push_back(detail::victim(st, [st](oracle::ProgramEnv&, Tx& tx) {
      const Word y = tx.read(1);
      const Word x = tx.read(0);
      const auto idx = static_cast<std::int64_t>(x - y);
      FrameRef f = tx.push_frame(4);
      if (detail::leader(tx)) {
        st->hazard_seen = st->hazard_seen || idx != 3;
        st->validations_before = tx.counters().full_validations;
      }
      tx.store(f, idx, 0xBAD);
      tx.pop_frame();
    }));
    ps.push_back(detail::committer(st, [](Tx& tx) {
      tx.write(0, tx.read(0) + 1);
      tx.write(1, tx.read(1) + 1);
    }));
    return ps;
  };
  return sc;
}

/// The callee is chosen by a + b; only 10 and 20 have clones. The committer
/// moves (5, 5) to (10, 10), so a torn read asks for 15.
inline Scenario clone_miss(Strategy s) {
  Scenario sc = detail::base("clone-miss", s, 2, {5, 5});
  auto st = sc.state;
  sc.victim_turns = 3;
  sc.spec.build = [st](Stm&) {
    *st = ScenarioState{};
    auto registry = std::make_shared<CloneRegistry>();
    registry->add(10, 1);
    registry->add(20, 2);
    registry->freeze();
    std::vector<oracle::Program> ps;
    ps.push_back(detail::victim(st, [st, registry](oracle::ProgramEnv& env, Tx& tx) {
      const Word a = tx.read(0);
      const Word b = tx.read(1);
      if (detail::leader(tx)) {
        st->hazard_seen = st->hazard_seen || (a + b != 10 && a + b != 20);
        st->validations_before = tx.counters().full_validations;
      }
      const CloneId c = tx.lookup(*registry, a + b);
      if (detail::leader(tx)) env.observe(c);
    }));
    ps.push_back(detail::committer(st, [](Tx& tx) {
      tx.write(0, 10);
      tx.write(1, 10);
    }));
    return ps;
  };
  return sc;
}

/// Buffer size = element size x count. The committer switches (64, 16) to
/// (1, 2^24); a torn view asks for 64 x 2^24 = 1 GiB against a 1 MiB budget.
/// The consistent retry asks for 16 MiB, which is over budget but valid.
inline Scenario over_allocation(Strategy s) {
  Scenario sc = detail::base("over-allocation", s, 2, {64, 16});
  auto st = sc.state;
  sc.victim_turns = 5;
  sc.spec.build = [st](Stm&) {
    *st = ScenarioState{};
    std::vector<oracle::Program> ps;
    ps.push_back([st](oracle::ProgramEnv& env) {
      std::vector<Block> held;
      detail::victim(st, [st, &held](oracle::ProgramEnv&, Tx& tx) {
        std::vector<Block> mine;
        const Word elem = tx.read(0);
        mine.push_back(tx.alloc(64));
        const Word count = tx.read(1);
        const std::size_t bytes = elem * count;
        const bool lead = detail::leader(tx);
        BlockAllocator& alloc = tx.stm().allocator();
        const bool torn = bytes != 64 * 16 && bytes != (std::size_t{1} << 24);
        const std::uint64_t before = tx.counters().full_validations;
        if (lead && torn) {
          st->hazard_seen = true;
          st->validations_before = before;
          st->granted_before_big = alloc.granted();
        }
        try {
          mine.push_back(tx.alloc(bytes));
        } catch (const TxAbort&) {
          if (lead && torn) st->granted_after_big = alloc.granted();
          throw;
        }
        if (lead && bytes > tx.stm().config().alloc_budget) {
          st->valid_big_alloc_validations = tx.counters().full_validations - before;
        }
        if (lead) held = std::move(mine);
      })(env);
      BlockAllocator& alloc = env.stm().allocator();
      for (const Block& b : held) alloc.release(b, env.scheduler());
      st->leaked_blocks = alloc.live_blocks();
      st->leaked_bytes = alloc.live_bytes();
    });
    ps.push_back(detail::committer(st, [](Tx& tx) {
      tx.write(0, 1);
      tx.write(1, std::size_t{1} << 24);
    }));
    return ps;
  };
  return sc;
}

inline Scenario make_scenario(std::string_view name, Strategy s,
                              std::uint64_t seed = 0) {
  if (name == "privatization-fault") return privatization_fault(s);
  if (name == "doomed-loop") return doomed_loop(s, seed % 4);
  if (name == "stray-stack-write") return stray_stack_write(s);
  if (name == "clone-miss") return clone_miss(s);
  if (name == "over-allocation") return over_allocation(s);
  throw std::invalid_argument("unknown hazard scenario: " + std::string(name));
}

struct HazardOutcome {
  std::string name;
  Strategy strategy = Strategy::Eager;
  std::uint64_t seed = 0;
  bool contained = false;
  bool hazard_seen = false;
  /// Abort reason of the victim's first failed attempt.
  std::optional<AbortReason> mechanism;
  /// Virtual time from the conflicting commit to the victim's exit.
  std::optional<Nanos> doom_latency;
  /// Helper validation rounds between the conflicting commit and the exit.
  std::optional<std::uint64_t> helper_rounds;
  /// Victim full validations spent between the hazardous operation and the
  /// abort.
  std::optional<std::uint64_t> validations_on_path;
  bool propagated_fault = false;
  bool guard_corruption = false;
  bool serializable = false;
  std::string error;
  WorkerStats victim;
  WorkerStats committer;
  ScenarioState state;
  oracle::RunOutcome run;
};

/// Judges one run of a scenario: no propagated fault, no guard corruption,
/// a serializable history, no leaked blocks, and if the victim ever saw an
/// inconsistent view, its attempt ended in an abort.
inline HazardOutcome evaluate(const Scenario& sc, oracle::RunOutcome run) {
  HazardOutcome o;
  o.name = sc.name;
  o.strategy = sc.spec.config.strategy;
  const ScenarioState& st = *sc.state;
  o.state = st;
  o.hazard_seen = st.hazard_seen;
  o.mechanism = st.first_abort;
  o.propagated_fault = run.propagated_fault;
  o.guard_corruption = run.guard_corruption;
  o.serializable = run.check.ok();
  o.error = run.error_text;
  if (run.stats.size() >= 2) {
    o.victim = run.stats[0];
    o.committer = run.stats[1];
  }
  if (st.conflict_at && st.exit_at && *st.exit_at >= *st.conflict_at) {
    o.doom_latency = *st.exit_at - *st.conflict_at;
    o.helper_rounds = st.helper_rounds_at_exit - st.helper_rounds_at_conflict;
  }
  if (st.validations_before && st.validations_after) {
    o.validations_on_path = *st.validations_after - *st.validations_before;
  }
  o.contained = !o.propagated_fault && !o.guard_corruption && o.serializable &&
                o.error.empty() && (!o.hazard_seen || o.mechanism.has_value()) &&
                st.leaked_blocks == 0;
  o.run = std::move(run);
  return o;
}

/// Scripted interleaving: the victim runs up to its hazardous read, the
/// committer runs to completion, then the victim resumes. The seed jitters
/// step durations (50 to 700 us, so the whole script fits in one beacon
/// period) and, for doomed-loop, the number of reads before the loop.
inline HazardOutcome run_hazard_scenario(std::string_view name, Strategy s,
                                         std::uint64_t seed = 0) {
  Scenario sc = make_scenario(name, s, seed);
  using DS = DeterministicScheduler;
  DS::Options o;
  o.policy = DS::Policy::Segments;
  o.seed = seed;
  o.segments = {{0, sc.victim_turns}, {1, DS::kUntilDone}, {0, DS::kUntilDone}};
  sc.spec.tick = Nanos{50'000};
  o.tick_max = Nanos{700'000};
  oracle::RunOutcome run = oracle::run_schedule(sc.spec, o);
  HazardOutcome out = evaluate(sc, std::move(run));
  out.seed = seed;
  return out;
}

struct HazardExploration {
  std::string name;
  Strategy strategy = Strategy::Eager;
  std::size_t runs = 0;
  bool complete = false;
  std::size_t hazardous_runs = 0;
  std::size_t contained_runs = 0;
  std::size_t propagated_faults = 0;
  std::size_t guard_corruptions = 0;
  std::size_t violations = 0;
  std::size_t max_program_yields = 0;
  std::map<AbortReason, std::size_t> mechanisms;
  std::optional<HazardOutcome> first_failure;

  bool all_contained() const {
    return complete && contained_runs == runs && propagated_faults == 0 &&
           guard_corruptions == 0 && violations == 0;
  }
};

/// Every interleaving of the scenario's two programs.
inline HazardExploration explore_hazard(std::string_view name, Strategy s,
                                        std::size_t max_yields = 20) {
  Scenario sc = make_scenario(name, s, 0);
  sc.spec.max_yields = max_yields;
  HazardExploration ex;
  ex.name = sc.name;
  ex.strategy = s;
  auto sum = oracle::explore_schedules(sc.spec, [&](const oracle::RunOutcome& run) {
    HazardOutcome o = evaluate(sc, run);
    if (o.hazard_seen) {
      ++ex.hazardous_runs;
      if (o.mechanism) ++ex.mechanisms[*o.mechanism];
    }
    if (o.contained) {
      ++ex.contained_runs;
    } else if (!ex.first_failure) {
      ex.first_failure = std::move(o);
    }
  });
  ex.runs = sum.runs;
  ex.complete = sum.complete;
  ex.propagated_faults = sum.propagated_faults;
  ex.guard_corruptions = sum.guard_corruptions;
  ex.violations = sum.violations;
  ex.max_program_yields = sum.max_program_yields;
  return ex;
}

/// Leader and clone helper read logs at the end of the leader's body, with
/// no commit able to intervene: the other program commits only before the
/// leader starts and after it finishes.
struct CloneEquivalence {
  std::vector<ReadLogEntry> leader;
  std::vector<ReadLogEntry> helper;
  bool compared = false;

  bool identical() const {
    if (!compared || leader.size() != helper.size()) return false;
    for (std::size_t i = 0; i < leader.size(); ++i) {
      if (leader[i].addr != helper[i].addr || leader[i].value != helper[i].value) {
        return false;
      }
    }
    return true;
  }
};

inline CloneEquivalence clone_equivalence_trial(std::uint64_t seed) {
  constexpr std::size_t kCells = 16;
  std::mt19937_64 rng(seed);
  oracle::ExploreSpec spec;
  spec.heap_cells = kCells;
  spec.initial.resize(kCells);
  for (auto& w : spec.initial) w = rng() % kCells;
  spec.config.strategy = Strategy::LazyHelperClone;
  const std::size_t hops = 4 + rng() % 12;
  const Word start = rng() % kCells;
  const Word salt = rng();
  auto result = std::make_shared<CloneEquivalence>();

  spec.build = [=](Stm&) {
    *result = CloneEquivalence{};
    std::vector<oracle::Program> ps;
    // Pointer chase: each address depends on the previous value.
    ps.push_back([=](oracle::ProgramEnv& env) {
      Worker& w = env.worker();
      w.run([&](Tx& tx) {
        Word p = start;
        for (std::size_t i = 0; i < hops; ++i) p = tx.read(p % kCells);
        tx.write((p + 1) % kCells, p ^ salt);
        if (detail::leader(tx)) {
          const TxDescriptor* h = w.helper()->clone_descriptor();
          result->leader = tx.read_log().to_vector();
          result->helper = h->read_log().to_vector();
          result->compared = true;
        }
      });
    });
    ps.push_back([=](oracle::ProgramEnv& env) {
      for (int k = 0; k < 2; ++k) {
        env.worker().run([&](Tx& tx) {
          for (Addr a = 0; a < kCells; a += 3) tx.write(a, (tx.read(a) + salt + k) % kCells);
        });
      }
    });
    return ps;
  };
  using DS = DeterministicScheduler;
  DS::Options o;
  o.policy = DS::Policy::Segments;
  o.seed = seed;
  o.segments = {{1, 8}, {0, DS::kUntilDone}, {1, DS::kUntilDone}};
  oracle::run_schedule(spec, o);
  return *result;
}

}  // namespace sandtm::harness
