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

#include <atomic>
#include <cstdint>
#include <limits>
#include <memory>

#include "sandtm/tx.hpp"

namespace sandtm {

struct HelperCounters {
  std::uint64_t body_executions = 0;
  std::uint64_t validation_rounds = 0;
  std::uint64_t validation_comparisons = 0;
  std::uint64_t dooms = 0;
};

/// Persistent out-of-band validator serving one leader descriptor.
///
/// The leader posts each attempt by epoch and, when the attempt resolves,
/// requests a stop and waits for the acknowledgement. Between those two
/// points the helper either validates the leader's published read-log
/// prefix (read-set mode) or runs the same body eagerly on its own
/// descriptor (clone mode). Either way its only effect on the leader is the
/// doom flag, tagged with the attempt epoch so that a late flag is inert.
class Helper final : public OutOfBand {
 public:
  Helper(Stm& stm, TxDescriptor& leader)
      : stm_(stm), leader_(leader), mode_(leader.strategy()) {
    if (mode_ == Strategy::LazyHelperClone) {
      clone_ = std::make_unique<TxDescriptor>(stm, mode_, TxRole::CloneHelper);
    }
    thread_ = stm.scheduler().spawn([this] { loop(); }, ThreadRole::Helper);
  }

  Helper(const Helper&) = delete;
  Helper& operator=(const Helper&) = delete;

  ~Helper() override {
    shutdown_.store(true, std::memory_order_release);
    posted_.store(kShutdown, std::memory_order_release);
    posted_.notify_all();
    stm_.scheduler().notify();
    thread_->join();
  }

  void start(TxDescriptor& leader) override {
    snapshot_ = leader.snapshot();
    body_ = leader.clone_body();
    posted_.store(leader.epoch(), std::memory_order_release);
    posted_.notify_all();
    stm_.scheduler().notify();
  }

  void stop(TxDescriptor& leader) override {
    const std::uint64_t e = leader.epoch();
    if (stop_.load(std::memory_order_relaxed) < e) {
      stop_.store(e, std::memory_order_release);
      stop_.notify_all();
      stm_.scheduler().notify();
    }
    for (;;) {
      const std::uint64_t a = ack_.load(std::memory_order_acquire);
      if (a >= e) return;
      stm_.scheduler().wait_change(ack_, a);
    }
  }

  HelperCounters counters() const {
    HelperCounters c;
    c.body_executions = executions_.get();
    c.validation_rounds = rounds_.get();
    c.validation_comparisons = comparisons_.get();
    c.dooms = dooms_.get();
    if (clone_) {
      const TxCounters t = clone_->counters();
      c.validation_rounds += t.full_validations;
      c.validation_comparisons += t.validation_comparisons;
    }
    return c;
  }

  /// The clone helper's descriptor; null in read-set mode.
  const TxDescriptor* clone_descriptor() const noexcept { return clone_.get(); }

 private:
  static constexpr std::uint64_t kShutdown =
      std::numeric_limits<std::uint64_t>::max();

  Scheduler& sched() const noexcept { return stm_.scheduler(); }

  bool stop_requested(std::uint64_t e) const noexcept {
    return stop_.load(std::memory_order_acquire) >= e;
  }

  void loop() {
    std::uint64_t done = 0;
    for (;;) {
      const std::uint64_t p = posted_.load(std::memory_order_acquire);
      if (shutdown_.load(std::memory_order_acquire)) return;
      if (p == done) {
        sched().wait_change(posted_, p);
        continue;
      }
      if (mode_ == Strategy::LazyHelperClone) {
        serve_clone(p);
      } else {
        serve_read_set(p);
      }
      done = p;
      ack_.store(p, std::memory_order_release);
      ack_.notify_all();
      sched().notify();
    }
  }

  void idle() {
    sched().yield(YieldPoint::Spin);
    sched().pause();
  }

  void doom(std::uint64_t e) {
    leader_.sandbox().doom(e);
    dooms_.add();
    sched().notify();
  }

  void wait_for_stop(std::uint64_t e) {
    while (!stop_requested(e)) {
      const std::uint64_t s = stop_.load(std::memory_order_acquire);
      if (s >= e) break;
      sched().wait_change(stop_, s);
    }
  }

  Nanos period() const {
    if (auto p = stm_.config().helper_period) return *p;
    return leader_.sandbox().beacon.period();
  }

  /// Periodically compare the leader's published entries with the heap.
  void serve_read_set(std::uint64_t e) {
    const ReadLog& log = leader_.read_log();
    const auto& clock = stm_.clock();
    bool first = true;
    Nanos last_round{0};
    Word seen_clock = 0;
    std::size_t seen_len = 0;
    while (!stop_requested(e)) {
      const Word c = clock.load();
      const std::size_t len = log.published();
      const Nanos now = sched().now();
      const bool changed = first || c != seen_clock || len != seen_len;
      if (!changed || !GlobalSeqLock::is_even(c) ||
          (!first && now - last_round < period())) {
        idle();
        continue;
      }
      rounds_.add();
      bool consistent = true;
      for (std::size_t i = 0; i < len; ++i) {
        comparisons_.add();
        const ReadLogEntry& entry = log[i];
        if (stm_.heap().load(entry.addr) != entry.value) {
          consistent = false;
          break;
        }
      }
      if (!consistent) {
        doom(e);
        wait_for_stop(e);
        return;
      }
      if (clock.load() != c) continue;
      first = false;
      seen_clock = c;
      seen_len = len;
      last_round = now;
    }
  }

  /// Execute the leader's body eagerly from the leader's snapshot, then keep
  /// the resulting read set validated until the leader resolves.
  void serve_clone(std::uint64_t e) {
    if (body_ == nullptr) {
      wait_for_stop(e);
      return;
    }
    TxDescriptor& h = *clone_;
    h.begin_clone(snapshot_, CloneLink{&stop_, e, &leader_.reads_started()});
    executions_.add();
    h.note_body_execution();
    bool inconsistent = false;
    try {
      (*body_)(h);
    } catch (const TxAbort& a) {
      if (a.reason == AbortReason::HelperStop) {
        h.discard();
        return;
      }
      inconsistent = a.reason == AbortReason::Validation;
    } catch (...) {
      // A consistent clone hit an application error; the leader will meet
      // it on its own. Keep watching the read set.
    }
    while (!inconsistent && !stop_requested(e)) {
      if (stm_.clock().load() == h.snapshot()) {
        idle();
        continue;
      }
      try {
        h.revalidate();
      } catch (const TxAbort& a) {
        if (a.reason == AbortReason::HelperStop) break;
        inconsistent = true;
      }
    }
    h.discard();
    if (inconsistent) {
      doom(e);
      wait_for_stop(e);
    }
  }

  Stm& stm_;
  TxDescriptor& leader_;
  Strategy mode_;
  std::unique_ptr<TxDescriptor> clone_;
  std::unique_ptr<Joinable> thread_;

  // Written by the leader before publishing `posted_`.
  Word snapshot_ = 0;
  const std::function<void(TxDescriptor&)>* body_ = nullptr;

  std::atomic<std::uint64_t> posted_{0};
  std::atomic<std::uint64_t> stop_{0};
  std::atomic<std::uint64_t> ack_{0};
  std::atomic<bool> shutdown_{false};

  detail::Tally executions_, rounds_, comparisons_, dooms_;
};

}  // namespace sandtm
