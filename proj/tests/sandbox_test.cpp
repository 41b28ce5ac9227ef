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

#include <random>

#include "test_support.hpp"

namespace sandtm {
namespace {

using testing::commit_write;
using testing::config_for;
using testing::ScriptedScheduler;

template <class F>
std::optional<AbortReason> abort_reason(F&& f) {
  try {
    f();
  } catch (const TxAbort& a) {
    return a.reason;
  }
  return std::nullopt;
}

// ---- doom flag and suspension ---------------------------------------------

TEST(Doom, FlagForCurrentAttemptAborts) {
  ScriptedScheduler sched;
  Stm stm(4, config_for(Strategy::LazyHelperReadSet), sched);
  TxDescriptor tx(stm, Strategy::LazyHelperReadSet);
  tx.begin();
  tx.read(0);
  tx.sandbox().doom(tx.epoch());
  EXPECT_EQ(abort_reason([&] { tx.progress(); }), AbortReason::Doom);
}

TEST(Doom, FlagFromEarlierAttemptIsInert) {
  ScriptedScheduler sched;
  Stm stm(4, config_for(Strategy::LazyHelperReadSet), sched);
  TxDescriptor tx(stm, Strategy::LazyHelperReadSet);
  tx.begin();
  const auto old = tx.epoch();
  tx.rollback(AbortReason::Explicit);
  tx.sandbox().doom(old);
  tx.begin();
  EXPECT_NE(tx.epoch(), old);
  EXPECT_NO_THROW(tx.progress());
  EXPECT_EQ(tx.commit(), CommitOutcome::Committed);
}

TEST(Doom, EagerDescriptorIgnoresProgressPolls) {
  ScriptedScheduler sched;
  Stm stm(4, {}, sched);
  TxDescriptor tx(stm, Strategy::Eager);
  tx.begin();
  tx.sandbox().doom(tx.epoch());
  EXPECT_NO_THROW(tx.progress());
}

TEST(Suspend, DoomIsLatchedUntilOutermostResume) {
  ScriptedScheduler sched;
  Stm stm(4, config_for(Strategy::LazyHelperReadSet), sched);
  TxDescriptor tx(stm, Strategy::LazyHelperReadSet);
  tx.begin();
  tx.suspend();
  tx.suspend();
  tx.sandbox().doom(tx.epoch());
  EXPECT_NO_THROW(tx.progress());
  EXPECT_TRUE(tx.sandbox().pending_doom);
  EXPECT_NO_THROW(tx.resume());
  EXPECT_EQ(abort_reason([&] { tx.resume(); }), AbortReason::Doom);
  EXPECT_EQ(tx.sandbox().suspend_depth, 0u);
}

TEST(Suspend, ExplicitAbortInsideRegionIsDeferred) {
  ScriptedScheduler sched;
  Stm stm(4, config_for(Strategy::LazyTimer), sched);
  TxDescriptor tx(stm, Strategy::LazyTimer);
  tx.begin();
  tx.suspend();
  tx.abort(AbortReason::Explicit);
  EXPECT_TRUE(tx.active());
  EXPECT_EQ(abort_reason([&] { tx.resume(); }), AbortReason::Explicit);
}

TEST(Suspend, UnbalancedResumeIsRejected) {
  ScriptedScheduler sched;
  Stm stm(4, {}, sched);
  TxDescriptor tx(stm, Strategy::LazyTimer);
  tx.begin();
  EXPECT_THROW(tx.resume(), std::logic_error);
}

TEST(Suspend, RollbackResetsDepth) {
  ScriptedScheduler sched;
  Stm stm(4, {}, sched);
  TxDescriptor tx(stm, Strategy::LazyTimer);
  tx.begin();
  tx.suspend();
  tx.rollback(AbortReason::Explicit);
  EXPECT_EQ(tx.sandbox().suspend_depth, 0u);
  EXPECT_FALSE(tx.sandbox().pending_doom);
}

// ---- beacon -----------------------------------------------------------------

TEST(Beacon, FrequencyStaysWithinBoundsUnderRandomOutcomes) {
  for (std::uint64_t seed = 1; seed <= 200; ++seed) {
    std::mt19937_64 rng(seed);
    BeaconConfig cfg;
    cfg.initial_hz = 1.0 + static_cast<double>(rng() % 100);
    Beacon b(cfg);
    Nanos t{0};
    for (int i = 0; i < 500; ++i) {
      const double before = b.frequency_hz();
      const bool consistent = rng() % 4 != 0;
      t += b.period();
      b.fired(t, consistent);
      ASSERT_GE(b.frequency_hz(), cfg.min_hz);
      ASSERT_LE(b.frequency_hz(), cfg.max_hz);
      if (!consistent) {
        ASSERT_EQ(b.frequency_hz(), std::min(before * 2, cfg.max_hz));
      }
    }
  }
}

TEST(Beacon, HalvesAfterConfiguredCleanStreak) {
  BeaconConfig cfg;
  cfg.initial_hz = 64;
  Beacon b(cfg);
  for (unsigned i = 0; i + 1 < cfg.clean_fires_to_halve; ++i) b.fired(Nanos{0}, true);
  EXPECT_EQ(b.frequency_hz(), 64);
  b.fired(Nanos{0}, true);
  EXPECT_EQ(b.frequency_hz(), 32);
  b.fired(Nanos{0}, false);
  EXPECT_EQ(b.frequency_hz(), 64);
}

TEST(Beacon, DisabledBeaconNeverFires) {
  BeaconConfig cfg;
  cfg.enabled = false;
  Beacon b(cfg);
  b.arm(Nanos{0});
  EXPECT_FALSE(b.armed());
  EXPECT_FALSE(b.due(Nanos{1'000'000'000'000}));
}

TEST(Beacon, FireOnInconsistentViewAbortsLeader) {
  ScriptedScheduler sched;
  Stm stm(4, config_for(Strategy::LazyTimer), sched);
  TxDescriptor tx(stm, Strategy::LazyTimer);
  tx.begin();
  tx.read(0);
  commit_write(stm, 0, 9);
  sched.advance(tx.sandbox().beacon.period() / 2);
  EXPECT_NO_THROW(tx.progress());
  sched.advance(tx.sandbox().beacon.period());
  EXPECT_EQ(abort_reason([&] { tx.progress(); }), AbortReason::Beacon);
  EXPECT_EQ(tx.counters().beacon_fires, 1u);
}

TEST(Beacon, CleanFireKeepsRunning) {
  ScriptedScheduler sched;
  Stm stm(4, config_for(Strategy::LazyTimer), sched);
  TxDescriptor tx(stm, Strategy::LazyTimer);
  tx.begin();
  tx.read(0);
  commit_write(stm, 1, 9);
  sched.advance(tx.sandbox().beacon.period());
  EXPECT_NO_THROW(tx.progress());
  EXPECT_EQ(tx.counters().beacon_fires, 1u);
  EXPECT_EQ(tx.counters().full_validations, 1u);
  EXPECT_EQ(tx.commit(), CommitOutcome::Committed);
}

// ---- fault verdicts ---------------------------------------------------------

TEST(Fault, UnmovedClockPropagatesWithoutValidation) {
  ScriptedScheduler sched;
  Stm stm(4, config_for(Strategy::LazyTimer), sched);
  TxDescriptor tx(stm, Strategy::LazyTimer);
  tx.begin();
  tx.read(0);
  EXPECT_EQ(tx.fault_verdict("site"), FaultVerdict::PropagateConsistent);
  EXPECT_THROW(tx.raise_fault("site", "boom"), ApplicationFault);
  EXPECT_EQ(tx.counters().full_validations, 0u);
}

TEST(Fault, MovedClockAbortsWithoutValidation) {
  ScriptedScheduler sched;
  Stm stm(4, config_for(Strategy::LazyTimer), sched);
  TxDescriptor tx(stm, Strategy::LazyTimer);
  tx.begin();
  tx.read(0);
  commit_write(stm, 0, 1);
  EXPECT_EQ(abort_reason([&] { tx.raise_fault("site", "boom"); }), AbortReason::StaleFault);
  EXPECT_EQ(tx.counters().full_validations, 0u);
}

TEST(Fault, RepeatedSuppressionEscalatesToValidation) {
  ScriptedScheduler sched;
  Stm stm(4, config_for(Strategy::LazyTimer), sched);
  TxDescriptor tx(stm, Strategy::LazyTimer);
  const unsigned limit = stm.config().max_fault_retries;
  tx.begin();
  tx.read(0);
  for (unsigned i = 0; i < limit; ++i) {
    // A background commit to an unrelated cell keeps the clock moving.
    commit_write(stm, 1, i);
    ASSERT_EQ(tx.fault_verdict("site"), FaultVerdict::AbortRetry) << i;
  }
  EXPECT_EQ(tx.counters().full_validations, 0u);
  commit_write(stm, 1, 99);
  EXPECT_EQ(tx.fault_verdict("site"), FaultVerdict::PropagateConsistent);
  EXPECT_EQ(tx.counters().full_validations, 1u);
  // Other sites keep their own streaks.
  commit_write(stm, 1, 100);
  EXPECT_EQ(tx.fault_verdict("other"), FaultVerdict::AbortRetry);
}

TEST(Fault, EscalatedValidationThatFailsStillAborts) {
  ScriptedScheduler sched;
  Stm stm(4, config_for(Strategy::LazyTimer), sched);
  TxDescriptor tx(stm, Strategy::LazyTimer);
  tx.begin();
  tx.read(0);
  for (unsigned i = 0; i < stm.config().max_fault_retries; ++i) {
    commit_write(stm, 1, i);
    tx.fault_verdict("site");
  }
  commit_write(stm, 0, 5);
  EXPECT_EQ(tx.fault_verdict("site"), FaultVerdict::AbortRetry);
  EXPECT_EQ(tx.counters().full_validations, 1u);
}

// ---- clone registry ---------------------------------------------------------

TEST(CloneRegistry, LookupHitAndFrozenRegistry) {
  CloneRegistry r;
  r.add(10, 1);
  r.freeze();
  EXPECT_EQ(r.find(10), CloneId{1});
  EXPECT_FALSE(r.find(11).has_value());
  EXPECT_THROW(r.add(12, 2), std::logic_error);
}

TEST(CloneRegistry, MissAbortsWithoutValidation) {
  ScriptedScheduler sched;
  Stm stm(4, config_for(Strategy::LazyTimer), sched);
  CloneRegistry r;
  r.add(10, 1);
  r.freeze();
  TxDescriptor tx(stm, Strategy::LazyTimer);
  tx.begin();
  tx.read(0);
  EXPECT_EQ(tx.lookup(r, 10), CloneId{1});
  EXPECT_EQ(abort_reason([&] { tx.lookup(r, 99); }), AbortReason::CloneMiss);
  EXPECT_EQ(tx.counters().full_validations, 0u);
}

TEST(CloneRegistry, DebugValidationSurfacesGenuineMiss) {
  ScriptedScheduler sched;
  Config c = config_for(Strategy::LazyTimer);
  c.debug_validation = true;
  Stm stm(4, c, sched);
  CloneRegistry r;
  TxDescriptor tx(stm, Strategy::LazyTimer);
  tx.begin();
  tx.read(0);
  EXPECT_THROW(tx.lookup(r, 99), CloneLookupError);
  tx.rollback(AbortReason::Explicit);

  tx.begin();
  tx.read(0);
  commit_write(stm, 0, 3);
  EXPECT_EQ(abort_reason([&] { tx.lookup(r, 99); }), AbortReason::CloneMiss);
  EXPECT_EQ(tx.counters().full_validations, 2u);
}

// ---- allocation budget ------------------------------------------------------

TEST(Alloc, WithinBudgetGrantsWithoutValidation) {
  ScriptedScheduler sched;
  Config c = config_for(Strategy::LazyTimer);
  c.alloc_budget = 100;
  Stm stm(4, c, sched);
  TxDescriptor tx(stm, Strategy::LazyTimer);
  tx.begin();
  tx.read(0);
  tx.alloc(60);
  tx.alloc(40);
  EXPECT_EQ(tx.counters().full_validations, 0u);
  EXPECT_EQ(stm.allocator().granted(), 2u);
}

TEST(Alloc, OverBudgetValidRequestValidatesOnceThenGrants) {
  ScriptedScheduler sched;
  Config c = config_for(Strategy::LazyTimer);
  c.alloc_budget = 100;
  Stm stm(4, c, sched);
  TxDescriptor tx(stm, Strategy::LazyTimer);
  tx.begin();
  tx.read(0);
  commit_write(stm, 1, 1);
  tx.alloc(60);
  tx.alloc(60);
  EXPECT_EQ(tx.counters().full_validations, 1u);
  EXPECT_EQ(stm.allocator().granted(), 2u);
  // The validated grant opened a fresh window.
  tx.alloc(40);
  EXPECT_EQ(tx.counters().full_validations, 1u);
  EXPECT_EQ(tx.commit(), CommitOutcome::Committed);
  EXPECT_EQ(stm.allocator().live_blocks(), 3u);
}

TEST(Alloc, OverBudgetDoomedRequestAbortsBeforeGrant) {
  ScriptedScheduler sched;
  Config c = config_for(Strategy::LazyTimer);
  c.alloc_budget = 100;
  Stm stm(4, c, sched);
  TxDescriptor tx(stm, Strategy::LazyTimer);
  tx.begin();
  tx.read(0);
  tx.alloc(10);
  commit_write(stm, 0, 7);
  EXPECT_EQ(abort_reason([&] { tx.alloc(std::size_t{1} << 30); }), AbortReason::Budget);
  EXPECT_EQ(stm.allocator().granted(), 1u);
  tx.rollback(AbortReason::Budget);
  EXPECT_EQ(stm.allocator().live_blocks(), 0u);
  EXPECT_EQ(stm.allocator().live_bytes(), 0u);
}

TEST(Alloc, RollbackReleasesGrantsAndCommitKeepsThem) {
  ScriptedScheduler sched;
  Stm stm(4, config_for(Strategy::LazyTimer), sched);
  TxDescriptor tx(stm, Strategy::LazyTimer);
  tx.begin();
  tx.alloc(8);
  tx.alloc(16);
  EXPECT_EQ(stm.allocator().live_bytes(), 24u);
  tx.rollback(AbortReason::Explicit);
  EXPECT_EQ(stm.allocator().live_blocks(), 0u);

  tx.begin();
  const Block b = tx.alloc(32);
  EXPECT_EQ(tx.commit(), CommitOutcome::Committed);
  EXPECT_EQ(stm.allocator().live_bytes(), 32u);
  stm.allocator().release(b, sched);
  EXPECT_THROW(stm.allocator().release(b, sched), std::logic_error);
}

TEST(Alloc, ExhaustionOnConsistentViewIsApplicationFault) {
  ScriptedScheduler sched;
  Config c = config_for(Strategy::LazyTimer);
  c.alloc_capacity = 100;
  Stm stm(4, c, sched);
  TxDescriptor tx(stm, Strategy::LazyTimer);
  tx.begin();
  EXPECT_THROW(tx.alloc(200), ApplicationFault);
  EXPECT_THROW(tx.alloc(0), std::invalid_argument);
}

// ---- local arena ------------------------------------------------------------

TEST(Arena, ClassificationIsAPureFunctionOfLayout) {
  LocalArena a;
  const FrameRef f = *a.push(3);
  constexpr std::size_t heap = 16;
  EXPECT_EQ(a.classify(0, heap), WriteClass::Shared);
  EXPECT_EQ(a.classify(heap - 1, heap), WriteClass::Shared);
  EXPECT_EQ(a.classify(heap, heap), WriteClass::Unmapped);
  for (std::int64_t i = 0; i < 3; ++i) EXPECT_EQ(a.classify(f.slot(i), heap), WriteClass::Local);
  for (std::int64_t i = 1; i <= static_cast<std::int64_t>(LocalArena::kGuardWords); ++i) {
    EXPECT_EQ(a.classify(f.slot(-i), heap), WriteClass::Guard);
    EXPECT_EQ(a.classify(f.slot(2 + i), heap), WriteClass::Guard);
  }
  EXPECT_EQ(a.classify(f.slot(3 + LocalArena::kGuardWords), heap), WriteClass::Unmapped);
}

TEST(Arena, FramesNestAndPopInOrder) {
  LocalArena a;
  const FrameRef outer = *a.push(2);
  a.store_local(outer.slot(1), 7);
  const FrameRef inner = *a.push(4);
  EXPECT_EQ(a.depth(), 2u);
  EXPECT_GT(inner.slot_base, outer.slot_base);
  a.pop();
  EXPECT_EQ(a.top().slot_base, outer.slot_base);
  EXPECT_EQ(a.load_local(outer.slot(1)), 7u);
  a.pop();
  EXPECT_TRUE(a.empty());
}

TEST(Arena, CapacityLimit) {
  LocalArena a(10);
  EXPECT_TRUE(a.push(6).has_value());
  EXPECT_FALSE(a.push(1).has_value());
}

TEST(Arena, PokedGuardIsDetectedAtPop) {
  LocalArena a;
  const FrameRef f = *a.push(2);
  a.poke_guard_for_test(f.slot(2), 1);
  EXPECT_THROW(a.pop(), GuardCorruption);
}

TEST(Arena, StrayStoreAndLoadAbortWithoutValidation) {
  ScriptedScheduler sched;
  Stm stm(4, config_for(Strategy::LazyTimer), sched);
  TxDescriptor tx(stm, Strategy::LazyTimer);
  tx.begin();
  tx.read(0);
  FrameRef f = tx.push_frame(4);
  EXPECT_EQ(abort_reason([&] { tx.store(f, -1, 42); }), AbortReason::GuardHit);
  EXPECT_EQ(tx.arena().peek_for_test(f.slot(-1)), LocalArena::kSentinel);
  tx.rollback(AbortReason::GuardHit);

  tx.begin();
  f = tx.push_frame(4);
  EXPECT_EQ(abort_reason([&] { tx.load(f, 4); }), AbortReason::GuardHit);
  EXPECT_EQ(tx.counters().guard_hits, 2u);
  EXPECT_EQ(tx.counters().full_validations, 0u);
}

TEST(Arena, ComputedAddressesReachSlotsAndHeap) {
  ScriptedScheduler sched;
  Stm stm(4, config_for(Strategy::LazyTimer), sched);
  TxDescriptor tx(stm, Strategy::LazyTimer);
  tx.begin();
  const FrameRef f = tx.push_frame(2);
  tx.store(f.slot(1), 5);
  EXPECT_EQ(tx.load(f, 1), 5u);
  tx.store(RawAddr{2}, 11);
  EXPECT_EQ(stm.heap().load(2), 0u);
  EXPECT_EQ(tx.load(RawAddr{2}), 11u);
  tx.pop_frame();
  EXPECT_EQ(tx.commit(), CommitOutcome::Committed);
  EXPECT_EQ(stm.heap().load(2), 11u);
}

TEST(Arena, UnmappedStoreVerdictDependsOnClock) {
  ScriptedScheduler sched;
  Stm stm(4, config_for(Strategy::LazyTimer), sched);
  TxDescriptor tx(stm, Strategy::LazyTimer);
  const RawAddr wild = RawAddr{1} << 40;
  tx.begin();
  EXPECT_THROW(tx.store(wild, 1), ApplicationFault);
  tx.rollback(AbortReason::Explicit);
  tx.begin();
  tx.read(0);
  commit_write(stm, 0, 1);
  EXPECT_EQ(abort_reason([&] { tx.store(wild, 1); }), AbortReason::StaleFault);
}

TEST(Arena, RollbackDropsFramesWithoutChecks) {
  ScriptedScheduler sched;
  Stm stm(4, config_for(Strategy::LazyTimer), sched);
  TxDescriptor tx(stm, Strategy::LazyTimer);
  tx.begin();
  const FrameRef f = tx.push_frame(2);
  tx.arena().poke_guard_for_test(f.slot(-1), 0);
  tx.rollback(AbortReason::Explicit);
  EXPECT_TRUE(tx.arena().empty());
}

}  // namespace
}  // namespace sandtm
