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

#include <gtest/gtest.h>

#include <thread>
#include <vector>

#include "test_support.hpp"

using namespace sandtm;
using sandtm::testing::commit_write;
using sandtm::testing::config_for;
using sandtm::testing::ScriptedScheduler;

namespace {

constexpr Addr kNoise = 100;

// n reads of distinct cells, with one unrelated commit landing before every
// read and before the commit.
std::uint64_t comparisons_with_interleaved_commits(Strategy s, std::size_t n) {
  ScriptedScheduler sched;
  Config cfg = config_for(s);
  cfg.beacon.enabled = false;
  Stm stm(128, cfg, sched);
  TxDescriptor tx(stm, s);
  Word bump = 0;
  sched.set_hook([&](YieldPoint p) {
    if (p == YieldPoint::Read || p == YieldPoint::Commit) {
      commit_write(stm, kNoise, ++bump);
    }
  });
  tx.begin();
  for (Addr a = 0; a < n; ++a) tx.read(a);
  EXPECT_EQ(tx.commit(), CommitOutcome::Committed);
  sched.set_hook(nullptr);
  EXPECT_EQ(bump, n + 1);
  return tx.counters().validation_comparisons;
}

}  // namespace

TEST(CountLaw, EagerIsTriangular) {
  EXPECT_EQ(comparisons_with_interleaved_commits(Strategy::Eager, 32), 528u);
  EXPECT_EQ(comparisons_with_interleaved_commits(Strategy::Eager, 5), 15u);
}

TEST(CountLaw, LazyValidatesOnceAtCommit) {
  EXPECT_EQ(comparisons_with_interleaved_commits(Strategy::LazyTimer, 32), 32u);
  EXPECT_EQ(comparisons_with_interleaved_commits(Strategy::LazyTimer, 7), 7u);
}

TEST(CountLaw, QuiescentEagerReaderNeverValidates) {
  ScriptedScheduler sched;
  Stm stm(64, config_for(Strategy::Eager), sched);
  TxDescriptor tx(stm, Strategy::Eager);
  tx.begin();
  for (Addr a = 0; a < 32; ++a) tx.read(a);
  EXPECT_EQ(tx.commit(), CommitOutcome::Committed);
  EXPECT_EQ(tx.counters().validation_comparisons, 0u);
  EXPECT_EQ(tx.counters().full_validations, 0u);
}

TEST(Core, ReadAfterWriteComesFromBuffer) {
  Stm stm(8);
  TxDescriptor tx(stm, Strategy::LazyTimer);
  stm.heap().store(3, 7);
  tx.begin();
  tx.write(3, 42);
  EXPECT_EQ(tx.read(3), 42u);
  EXPECT_EQ(tx.read_log().size(), 0u);
  EXPECT_EQ(stm.heap().load(3), 7u);
  EXPECT_EQ(tx.commit(), CommitOutcome::Committed);
  EXPECT_EQ(stm.heap().load(3), 42u);
}

TEST(Core, WriteBufferKeepsFirstInsertionOrder) {
  WriteBuffer wb;
  wb.put(5, 1);
  wb.put(2, 1);
  wb.put(5, 9);
  wb.put(7, 3);
  ASSERT_EQ(wb.size(), 3u);
  const auto& e = wb.entries();
  EXPECT_EQ(e[0], (std::pair<Addr, Word>{5, 9}));
  EXPECT_EQ(e[1], (std::pair<Addr, Word>{2, 1}));
  EXPECT_EQ(e[2], (std::pair<Addr, Word>{7, 3}));
}

TEST(Core, BeginWaitsForEvenClock) {
  ScriptedScheduler sched;
  Stm stm(8, {}, sched);
  ASSERT_TRUE(stm.clock().try_acquire(0));
  int spins = 0;
  sched.set_hook([&](YieldPoint p) {
    if (p == YieldPoint::Spin && ++spins == 3) stm.clock().release(0);
  });
  TxDescriptor tx(stm, Strategy::Eager);
  tx.begin();
  EXPECT_EQ(spins, 3);
  EXPECT_EQ(tx.snapshot(), 2u);
  EXPECT_TRUE(GlobalSeqLock::is_even(tx.snapshot()));
}

TEST(Core, ValidationRetriesWhenClockMovesMidPass) {
  ScriptedScheduler sched;
  Stm stm(128, config_for(Strategy::LazyTimer), sched);
  TxDescriptor tx(stm, Strategy::LazyTimer);
  tx.begin();
  for (Addr a = 0; a < 4; ++a) tx.read(a);
  int steps = 0;
  sched.set_hook([&](YieldPoint p) {
    if (p == YieldPoint::ValidateStep && ++steps == 2) commit_write(stm, kNoise, 1);
  });
  EXPECT_TRUE(tx.validate());
  EXPECT_EQ(tx.counters().full_validations, 1u);
  EXPECT_EQ(tx.counters().validation_comparisons, 8u);
  sched.set_hook(nullptr);
  tx.abort();
}

TEST(Core, ConflictingCommitAbortsLazyReader) {
  ScriptedScheduler sched;
  Stm stm(8, config_for(Strategy::LazyTimer), sched);
  TxDescriptor tx(stm, Strategy::LazyTimer);
  tx.begin();
  tx.read(1);
  tx.write(2, 5);
  commit_write(stm, 1, 9);
  EXPECT_EQ(tx.commit(), CommitOutcome::Aborted);
  EXPECT_EQ(tx.last_abort(), AbortReason::Validation);
  EXPECT_EQ(stm.heap().load(2), 0u);
  EXPECT_EQ(tx.counters().aborts, 1u);
}

TEST(Core, EagerReadExtendsPastUnrelatedCommit) {
  ScriptedScheduler sched;
  Stm stm(8, {}, sched);
  TxDescriptor tx(stm, Strategy::Eager);
  tx.begin();
  tx.read(1);
  commit_write(stm, 2, 9);
  EXPECT_EQ(tx.read(2), 9u);
  EXPECT_EQ(tx.snapshot(), 2u);
  EXPECT_EQ(tx.commit(), CommitOutcome::Committed);
}

TEST(Core, EagerReadAbortsOnConflict) {
  ScriptedScheduler sched;
  Stm stm(8, {}, sched);
  TxDescriptor tx(stm, Strategy::Eager);
  tx.begin();
  tx.read(1);
  commit_write(stm, 1, 9);
  EXPECT_THROW(tx.read(2), TxAbort);
  tx.rollback(AbortReason::Validation);
  EXPECT_FALSE(tx.active());
}

TEST(Core, NestedBeginIsRejected) {
  Stm stm(8);
  TxDescriptor tx(stm, Strategy::Eager);
  tx.begin();
  EXPECT_THROW(tx.begin(), std::logic_error);
  tx.abort();
}

TEST(Core, ReadOnlyCommitDoesNotMoveClock) {
  Stm stm(8);
  TxDescriptor tx(stm, Strategy::LazyTimer);
  tx.begin();
  tx.read(0);
  EXPECT_EQ(tx.commit(), CommitOutcome::Committed);
  EXPECT_EQ(stm.clock().load(), 0u);
  commit_write(stm, 0, 1);
  EXPECT_EQ(stm.clock().load(), 2u);
}

TEST(Core, RecorderSeesOnlyCommits) {
  ScriptedScheduler sched;
  Stm stm(8, config_for(Strategy::LazyTimer), sched);
  HistoryRecorder rec;
  stm.set_recorder(&rec);
  TxDescriptor tx(stm, Strategy::LazyTimer);
  tx.begin();
  tx.read(1);
  tx.write(3, 4);
  commit_write(stm, 1, 1);
  EXPECT_EQ(tx.commit(), CommitOutcome::Aborted);
  auto r = rec.records();
  ASSERT_EQ(r.size(), 1u);
  EXPECT_EQ(r[0].clock, 2u);
  EXPECT_EQ(r[0].writes, (std::vector<std::pair<Addr, Word>>{{1, 1}}));
}

class ConcurrentIncrement : public ::testing::TestWithParam<Strategy> {};

TEST_P(ConcurrentIncrement, TwoThreadsThousandEach) {
  Stm stm(4, config_for(GetParam()));
  constexpr int kIters = 1000;
  std::vector<std::thread> ts;
  std::vector<WorkerStats> stats(2);
  for (int i = 0; i < 2; ++i) {
    ts.emplace_back([&, i] {
      Worker w(stm);
      for (int k = 0; k < kIters; ++k) {
        w.run([](Tx& tx) { tx.write(0, tx.read(0) + 1); });
      }
      stats[i] = w.stats();
    });
  }
  for (auto& t : ts) t.join();
  EXPECT_EQ(stm.heap().load(0), 2u * kIters);
  EXPECT_EQ(stats[0].commits + stats[1].commits, 2u * kIters);
}

TEST_P(ConcurrentIncrement, DeterministicFourThreads) {
  DeterministicScheduler sched({.seed = 11});
  Stm stm(4, config_for(GetParam()), sched);
  for (int i = 0; i < 4; ++i) {
    sched.spawn_program([&] {
      Worker w(stm);
      for (int k = 0; k < 50; ++k) {
        w.run([](Tx& tx) {
          const Word a = tx.read(0);
          const Word b = tx.read(1);
          tx.write(0, a + 1);
          tx.write(1, b + 2);
        });
      }
    });
  }
  sched.run();
  EXPECT_EQ(stm.heap().load(0), 200u);
  EXPECT_EQ(stm.heap().load(1), 400u);
}

INSTANTIATE_TEST_SUITE_P(AllStrategies, ConcurrentIncrement,
                         ::testing::ValuesIn(kAllStrategies),
                         [](const auto& info) {
                           std::string s(to_string(info.param));
                           for (char& c : s) if (c == '-') c = '_';
                           return s;
                         });

TEST(Clone, HelperExecutesEveryBodyAgain) {
  Stm stm(8, config_for(Strategy::LazyHelperClone));
  Worker w(stm);
  for (int k = 0; k < 20; ++k) {
    w.run([](Tx& tx) { tx.write(1, tx.read(0) + tx.read(1)); });
  }
  const WorkerStats s = w.stats();
  EXPECT_EQ(s.commits, 20u);
  EXPECT_EQ(s.leader_executions, 20u);
  EXPECT_GE(s.leader_executions + s.helper_executions, 2 * s.commits);
}
