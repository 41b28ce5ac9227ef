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
#include <atomic>
#include <cassert>
#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>

#include "sandtm/arena.hpp"
#include "sandtm/logs.hpp"
#include "sandtm/runtime.hpp"
#include "sandtm/sandbox.hpp"

namespace sandtm {

struct TxCounters {
  std::uint64_t validation_comparisons = 0;
  std::uint64_t full_validations = 0;
  std::uint64_t aborts = 0;
  std::uint64_t commits = 0;
  std::uint64_t body_executions = 0;
  /// TM API entries including arena accesses; the "instruction" count.
  std::uint64_t tm_ops = 0;
  /// Read-log and write-buffer lengths summed over committed attempts.
  std::uint64_t committed_reads = 0;
  std::uint64_t committed_writes = 0;
  std::uint64_t guard_hits = 0;
  std::uint64_t beacon_fires = 0;
  std::array<std::uint64_t, kAbortReasonCount> aborts_by_reason{};
};

namespace detail {
/// Single-writer counter that another thread may read.
class Tally {
 public:
  void add(std::uint64_t n = 1) noexcept {
    v_.store(v_.load(std::memory_order_relaxed) + n, std::memory_order_relaxed);
  }
  std::uint64_t get() const noexcept { return v_.load(std::memory_order_relaxed); }

 private:
  std::atomic<std::uint64_t> v_{0};
};
}  // namespace detail

class TxDescriptor;

/// Out-of-band validation attached to a leader descriptor.
class OutOfBand {
 public:
  virtual ~OutOfBand() = default;
  /// Called once per attempt at the end of begin.
  virtual void start(TxDescriptor& leader) = 0;
  /// Returns once the helper no longer touches the attempt. Idempotent.
  virtual void stop(TxDescriptor& leader) = 0;
};

/// Ties a clone helper's descriptor to the leader attempt it shadows.
struct CloneLink {
  const std::atomic<std::uint64_t>* stop_epoch = nullptr;
  std::uint64_t epoch = 0;
  /// Number of reads the leader has started in this attempt.
  const std::atomic<std::uint64_t>* leader_reads = nullptr;

  bool stop_requested() const noexcept {
    return stop_epoch->load(std::memory_order_acquire) >= epoch;
  }
};

enum class TxRole { Leader, CloneHelper };

/// Per-thread transaction state, reused across attempts.
///
/// Reads log (address, value) pairs; writes are buffered and applied at
/// commit under the global sequence lock. Eager descriptors revalidate on
/// every read that observes a moved clock and extend their snapshot; lazy
/// descriptors validate only at commit and at out-of-band points (beacon,
/// doom flag, over-budget allocation, faults).
class TxDescriptor {
 public:
  TxDescriptor(Stm& stm, Strategy strategy, TxRole role = TxRole::Leader)
      : stm_(stm),
        strategy_(strategy),
        role_(role),
        mode_(role == TxRole::CloneHelper ? ValidationMode::Eager
                                          : mode_of(strategy)),
        id_(stm.next_descriptor_id()),
        arena_(stm.config().arena_capacity) {
    sandbox_.beacon = Beacon(stm.config().beacon);
    sandbox_.alloc_budget = stm.config().alloc_budget;
  }

  TxDescriptor(const TxDescriptor&) = delete;
  TxDescriptor& operator=(const TxDescriptor&) = delete;

  ~TxDescriptor() {
    if (active()) rollback(AbortReason::Explicit);
  }

  // ---- lifecycle ---------------------------------------------------------

  void begin() {
    if (active()) throw std::logic_error("nested transaction");
    enter_unchecked(YieldPoint::Begin);
    snapshot_ = stm_.clock().wait_even(sched());
    reset_attempt();
    status_ = TxStatus::Active;
    if (strategy_ == Strategy::LazyTimer && role_ == TxRole::Leader) {
      sandbox_.beacon.arm(sched().now());
    }
    if (oob_ != nullptr) oob_->start(*this);
  }

  /// Clone helpers start on the leader's snapshot instead of the clock.
  void begin_clone(Word snapshot, CloneLink link) {
    assert(role_ == TxRole::CloneHelper);
    link_ = link;
    snapshot_ = snapshot;
    reset_attempt();
    status_ = TxStatus::Active;
  }

  Word read(Addr a) {
    enter(YieldPoint::Read);
    doom_check();
    if (auto v = writes_.find(a)) return *v;
    if (!stm_.heap().contains(a)) raise_fault("read-unmapped", describe(a));
    if (mode_ == ValidationMode::Eager) return read_eager(a);
    if (strategy_ == Strategy::LazyHelperClone) {
      reads_started_.store(reads_.size() + 1, std::memory_order_seq_cst);
    }
    const Word v = stm_.heap().load(a);
    reads_.push({a, v});
    return v;
  }

  void write(Addr a, Word v) {
    enter(YieldPoint::Write);
    doom_check();
    if (!stm_.heap().contains(a)) raise_fault("write-unmapped", describe(a));
    writes_.put(a, v);
  }

  /// Full value-based validation under a stable even clock.
  bool validate() { return validate_stable().has_value(); }

  CommitOutcome commit() {
    enter(YieldPoint::Commit);
    try {
      doom_check();
    } catch (const TxAbort& a) {
      rollback(a.reason);
      return CommitOutcome::Aborted;
    }
    auto& clock = stm_.clock();
    Word serialized_at = 0;
    if (writes_.empty()) {
      if (mode_ == ValidationMode::Eager && clock.load() == snapshot_) {
        serialized_at = snapshot_;
      } else {
        auto at = validate_stable();
        if (!at) {
          rollback(AbortReason::Validation);
          return CommitOutcome::Aborted;
        }
        serialized_at = *at;
      }
      record(serialized_at);
    } else {
      Word v = 0;
      for (;;) {
        v = clock.wait_even(sched());
        if (mode_ == ValidationMode::Lazy || v != snapshot_) {
          auto at = validate_stable();
          if (!at) {
            rollback(AbortReason::Validation);
            return CommitOutcome::Aborted;
          }
          v = *at;
          snapshot_ = v;
        }
        if (clock.try_acquire(v)) break;
      }
      for (const auto& [addr, value] : writes_.entries()) {
        stm_.heap().store(addr, value);
      }
      serialized_at = v + 2;
      record(serialized_at);
      clock.release(v);
      sched().notify();
    }
    counters_.commits.add();
    counters_.committed_reads.add(reads_.size());
    counters_.committed_writes.add(writes_.size());
    sandbox_.fault_retries.clear();
    finish(TxStatus::Committed);
    // Granted blocks now belong to the application.
    sandbox_.alloc_log.clear();
    return CommitOutcome::Committed;
  }

  /// Roll back the attempt. Inside a suspended region the abort is latched
  /// and delivered by the outermost resume.
  void abort(AbortReason reason = AbortReason::Explicit) {
    if (!active()) return;
    if (sandbox_.suspend_depth > 0) {
      sandbox_.pending_doom = true;
      pending_reason_ = reason;
      return;
    }
    rollback(reason);
  }

  /// Unconditional rollback; used by the retry loop.
  void rollback(AbortReason reason) {
    if (!active()) return;
    sandbox_.suspend_depth = 0;
    sandbox_.pending_doom = false;
    counters_.aborts.add();
    abort_reasons_[static_cast<std::size_t>(reason)].add();
    last_abort_ = reason;
    finish(TxStatus::Aborted);
    for (const Block& b : sandbox_.alloc_log) {
      stm_.allocator().release(b, sched());
    }
    sandbox_.alloc_log.clear();
  }

  // ---- containment -------------------------------------------------------

  /// Delivery point for helper notifications and the timer beacon.
  void doom_check() {
    if (role_ != TxRole::Leader) return;
    if (sandbox_.doomed(epoch_)) {
      if (sandbox_.suspend_depth > 0) {
        sandbox_.pending_doom = true;
        pending_reason_ = AbortReason::Doom;
        return;
      }
      status_ = TxStatus::Doomed;
      throw TxAbort{AbortReason::Doom};
    }
    poll_beacon();
  }

  /// Hook for loops that contain no TM operation.
  void progress() {
    enter(YieldPoint::Progress);
    if (mode_ == ValidationMode::Eager) return;
    doom_check();
  }

  /// Verdict for a would-be hardware fault.
  ///
  /// A moved clock means some commit may have made the read set
  /// inconsistent, so the fault is suppressed without validating. An
  /// unmoved clock proves consistency. After `max_fault_retries`
  /// consecutive suppressions at one site an explicit validation decides.
  FaultVerdict fault_verdict(const std::string& site) {
    unsigned& streak = sandbox_.fault_retries[site];
    if (stm_.clock().load() == snapshot_) {
      streak = 0;
      return FaultVerdict::PropagateConsistent;
    }
    if (streak >= stm_.config().max_fault_retries) {
      if (validate()) {
        streak = 0;
        return FaultVerdict::PropagateConsistent;
      }
      return FaultVerdict::AbortRetry;
    }
    ++streak;
    return FaultVerdict::AbortRetry;
  }

  /// Raise a fault from transactional code. Never returns: either the
  /// attempt aborts or the fault propagates to the application.
  [[noreturn]] void raise_fault(const std::string& site, const std::string& info) {
    enter(YieldPoint::Fault);
    if (fault_verdict(site) == FaultVerdict::AbortRetry) {
      throw TxAbort{AbortReason::StaleFault};
    }
    throw ApplicationFault(site, info);
  }

  CloneId lookup(const CloneRegistry& registry, FnId fn) {
    enter(YieldPoint::Lookup);
    doom_check();
    if (auto c = registry.find(fn)) return *c;
    if (stm_.config().debug_validation && validate()) {
      throw CloneLookupError(fn);
    }
    throw TxAbort{AbortReason::CloneMiss};
  }

  /// Allocation with the hybrid budget rule: within budget grants directly,
  /// beyond it validates first. Grants are released if the attempt rolls
  /// back.
  Block alloc(std::size_t bytes) {
    enter(YieldPoint::Alloc);
    if (bytes == 0) throw std::invalid_argument("zero-size allocation");
    doom_check();
    if (bytes > sandbox_.alloc_budget ||
        sandbox_.alloc_used > sandbox_.alloc_budget - bytes) {
      if (!validate()) throw TxAbort{AbortReason::Budget};
      sandbox_.alloc_used = 0;
    }
    suspend();
    std::optional<Block> b;
    try {
      b = stm_.allocator().allocate(bytes, sched());
    } catch (...) {
      --sandbox_.suspend_depth;
      throw;
    }
    if (b) sandbox_.alloc_log.push_back(*b);
    resume();
    if (!b) raise_fault("alloc-exhausted", std::to_string(bytes) + " bytes");
    sandbox_.alloc_used += bytes;
    return *b;
  }

  void suspend() noexcept { ++sandbox_.suspend_depth; }

  void resume() {
    if (sandbox_.suspend_depth == 0) {
      throw std::logic_error("resume without matching suspend");
    }
    if (--sandbox_.suspend_depth > 0) return;
    if (role_ == TxRole::Leader &&
        (sandbox_.pending_doom || sandbox_.doomed(epoch_))) {
      const AbortReason r =
          sandbox_.pending_doom ? pending_reason_ : AbortReason::Doom;
      sandbox_.pending_doom = false;
      status_ = TxStatus::Doomed;
      throw TxAbort{r};
    }
  }

  // ---- local arena -------------------------------------------------------

  FrameRef push_frame(std::size_t n_slots) {
    count_op();
    if (auto f = arena_.push(n_slots)) return *f;
    raise_fault("arena-capacity", std::to_string(n_slots) + " slots");
  }

  void pop_frame() {
    count_op();
    arena_.pop();
  }

  /// Store through a computed address.
  void store(RawAddr a, Word v) {
    count_op();
    switch (arena_.classify(a, stm_.heap().size())) {
      case WriteClass::Local:
        arena_.store_local(a, v);
        return;
      case WriteClass::Guard:
        counters_.guard_hits.add();
        throw TxAbort{AbortReason::GuardHit};
      case WriteClass::Shared:
        write(a, v);
        return;
      case WriteClass::Unmapped:
        raise_fault("store-unmapped", describe(a));
    }
  }

  /// Load through a computed address.
  Word load(RawAddr a) {
    count_op();
    switch (arena_.classify(a, stm_.heap().size())) {
      case WriteClass::Local:
        return arena_.load_local(a);
      case WriteClass::Guard:
        counters_.guard_hits.add();
        throw TxAbort{AbortReason::GuardHit};
      case WriteClass::Shared:
        return read(a);
      case WriteClass::Unmapped:
        raise_fault("load-unmapped", describe(a));
    }
    return 0;
  }

  /// Fixed-offset slot access. An index outside the frame is a computed
  /// address and goes through classification.
  Word load(const FrameRef& f, std::int64_t i) {
    if (i >= 0 && static_cast<std::size_t>(i) < f.slots) {
      count_op();
      return arena_.load_local(f.slot(i));
    }
    return load(f.slot(i));
  }

  void store(const FrameRef& f, std::int64_t i, Word v) {
    if (i >= 0 && static_cast<std::size_t>(i) < f.slots) {
      count_op();
      arena_.store_local(f.slot(i), v);
      return;
    }
    store(f.slot(i), v);
  }

  // ---- clone helper support ---------------------------------------------

  /// Eager snapshot extension for a clone helper that noticed a moved clock
  /// outside a read.
  void revalidate() { extend(); }

  /// Drop a helper attempt without counting it as an abort.
  void discard() {
    if (!active()) return;
    finish(TxStatus::Aborted);
    for (const Block& b : sandbox_.alloc_log) stm_.allocator().release(b, sched());
    sandbox_.alloc_log.clear();
  }

  // ---- wiring and inspection --------------------------------------------

  void set_out_of_band(OutOfBand* oob) noexcept { oob_ = oob; }
  void set_clone_body(const std::function<void(TxDescriptor&)>* body) noexcept {
    clone_body_ = body;
  }
  const std::function<void(TxDescriptor&)>* clone_body() const noexcept {
    return clone_body_;
  }
  void note_body_execution() noexcept { counters_.body_executions.add(); }

  Stm& stm() noexcept { return stm_; }
  Strategy strategy() const noexcept { return strategy_; }
  ValidationMode mode() const noexcept { return mode_; }
  TxRole role() const noexcept { return role_; }
  TxStatus status() const noexcept { return status_; }
  bool active() const noexcept {
    return status_ == TxStatus::Active || status_ == TxStatus::Doomed;
  }
  Word snapshot() const noexcept { return snapshot_; }
  std::uint64_t epoch() const noexcept { return epoch_; }
  std::uint64_t id() const noexcept { return id_; }
  const ReadLog& read_log() const noexcept { return reads_; }
  const WriteBuffer& write_buffer() const noexcept { return writes_; }
  const std::atomic<std::uint64_t>& reads_started() const noexcept {
    return reads_started_;
  }
  SandboxState& sandbox() noexcept { return sandbox_; }
  const SandboxState& sandbox() const noexcept { return sandbox_; }
  LocalArena& arena() noexcept { return arena_; }
  std::optional<AbortReason> last_abort() const noexcept { return last_abort_; }

  TxCounters counters() const {
    TxCounters c;
    c.validation_comparisons = counters_.validation_comparisons.get();
    c.full_validations = counters_.full_validations.get();
    c.aborts = counters_.aborts.get();
    c.commits = counters_.commits.get();
    c.body_executions = counters_.body_executions.get();
    c.tm_ops = counters_.tm_ops.get();
    c.committed_reads = counters_.committed_reads.get();
    c.committed_writes = counters_.committed_writes.get();
    c.guard_hits = counters_.guard_hits.get();
    c.beacon_fires = counters_.beacon_fires.get();
    for (std::size_t i = 0; i < kAbortReasonCount; ++i) {
      c.aborts_by_reason[i] = abort_reasons_[i].get();
    }
    return c;
  }

 private:
  Scheduler& sched() const noexcept { return stm_.scheduler(); }

  void count_op() {
    assert(active());
    counters_.tm_ops.add();
  }

  void enter_unchecked(YieldPoint p) {
    sched().yield(p);
    counters_.tm_ops.add();
  }

  void enter(YieldPoint p) {
    assert(active());
    enter_unchecked(p);
    if (role_ == TxRole::CloneHelper && link_.stop_epoch != nullptr &&
        link_.stop_requested()) {
      throw TxAbort{AbortReason::HelperStop};
    }
  }

  void reset_attempt() {
    ++epoch_;
    reads_.clear();
    writes_.clear();
    arena_.clear();
    reads_started_.store(0, std::memory_order_seq_cst);
    sandbox_.suspend_depth = 0;
    sandbox_.pending_doom = false;
    sandbox_.alloc_used = 0;
    sandbox_.alloc_log.clear();
  }

  void finish(TxStatus s) {
    // The helper may still be reading the log; quiesce it before clearing.
    if (oob_ != nullptr) oob_->stop(*this);
    status_ = s;
    sandbox_.beacon.disarm();
    reads_.clear();
    writes_.clear();
    arena_.clear();
  }

  Word read_eager(Addr a) {
    auto& clock = stm_.clock();
    Word v = stm_.heap().load(a);
    while (clock.load() != snapshot_) {
      extend();
      v = stm_.heap().load(a);
    }
    reads_.push({a, v});
    return v;
  }

  /// Revalidate and move the snapshot to the validated clock. A clone
  /// helper additionally refuses to extend while the leader has started
  /// more reads than it has: those leader reads may predate the commit it
  /// is skipping over, and the helper can no longer vouch for them.
  void extend() {
    for (;;) {
      auto at = validate_stable();
      if (!at) throw TxAbort{AbortReason::Validation};
      if (role_ == TxRole::CloneHelper && link_.leader_reads != nullptr) {
        if (link_.leader_reads->load(std::memory_order_seq_cst) > reads_.size()) {
          throw TxAbort{AbortReason::Validation};
        }
        if (stm_.clock().load() != *at) continue;
      }
      snapshot_ = *at;
      return;
    }
  }

  std::optional<Word> validate_stable() {
    counters_.full_validations.add();
    auto& clock = stm_.clock();
    for (;;) {
      const Word at = clock.wait_even(sched());
      if (role_ == TxRole::CloneHelper && link_.stop_epoch != nullptr &&
          link_.stop_requested()) {
        throw TxAbort{AbortReason::HelperStop};
      }
      const std::size_t n = reads_.size();
      for (std::size_t i = 0; i < n; ++i) {
        sched().yield(YieldPoint::ValidateStep);
        counters_.validation_comparisons.add();
        const ReadLogEntry& e = reads_[i];
        if (stm_.heap().load(e.addr) != e.value) return std::nullopt;
      }
      if (clock.load() == at) return at;
    }
  }

  void poll_beacon() {
    if (strategy_ != Strategy::LazyTimer || role_ != TxRole::Leader) return;
    Beacon& b = sandbox_.beacon;
    if (sandbox_.suspend_depth > 0) return;
    const Nanos now = sched().now();
    if (!b.due(now)) return;
    const bool ok = validate();
    counters_.beacon_fires.add();
    b.fired(now, ok);
    if (!ok) {
      status_ = TxStatus::Doomed;
      throw TxAbort{AbortReason::Beacon};
    }
  }

  void record(Word clock_value) {
    HistoryRecorder* rec = stm_.recorder();
    if (rec == nullptr || role_ != TxRole::Leader) return;
    CommitRecord r;
    r.tx = (id_ << 32) | (counters_.commits.get() + 1);
    r.reads.reserve(reads_.size());
    for (std::size_t i = 0; i < reads_.size(); ++i) {
      r.reads.emplace_back(reads_[i].addr, reads_[i].value);
    }
    r.writes = writes_.entries();
    r.clock = clock_value;
    rec->append(std::move(r));
  }

  static std::string describe(RawAddr a) { return "address " + std::to_string(a); }

  struct Counters {
    detail::Tally validation_comparisons, full_validations, aborts, commits,
        body_executions, tm_ops, committed_reads, committed_writes, guard_hits,
        beacon_fires;
  };

  Stm& stm_;
  Strategy strategy_;
  TxRole role_;
  ValidationMode mode_;
  std::uint64_t id_;
  Word snapshot_ = 0;
  std::uint64_t epoch_ = 0;
  TxStatus status_ = TxStatus::Idle;
  ReadLog reads_;
  WriteBuffer writes_;
  LocalArena arena_;
  SandboxState sandbox_;
  std::atomic<std::uint64_t> reads_started_{0};
  Counters counters_;
  std::array<detail::Tally, kAbortReasonCount> abort_reasons_{};
  std::optional<AbortReason> last_abort_;
  AbortReason pending_reason_ = AbortReason::Doom;
  OutOfBand* oob_ = nullptr;
  CloneLink link_{};
  const std::function<void(TxDescriptor&)>* clone_body_ = nullptr;
};

using Tx = TxDescriptor;

}  // namespace sandtm
