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
#include <functional>
#include <memory>
#include <optional>
#include <type_traits>
#include <utility>

#include "sandtm/helper.hpp"
#include "sandtm/tx.hpp"

namespace sandtm {

struct WorkerStats {
  std::uint64_t commits = 0;
  std::uint64_t aborts = 0;
  std::uint64_t full_validations = 0;
  std::uint64_t validation_comparisons = 0;
  std::uint64_t leader_executions = 0;
  std::uint64_t helper_executions = 0;
  std::uint64_t helper_validations = 0;
  std::uint64_t helper_comparisons = 0;
  std::uint64_t dooms_sent = 0;
  std::uint64_t tm_ops = 0;
  std::uint64_t committed_reads = 0;
  std::uint64_t committed_writes = 0;
  std::uint64_t guard_hits = 0;
  std::uint64_t beacon_fires = 0;
  std::array<std::uint64_t, kAbortReasonCount> aborts_by_reason{};

  std::uint64_t aborts_for(AbortReason r) const {
    return aborts_by_reason[static_cast<std::size_t>(r)];
  }

  WorkerStats& operator+=(const WorkerStats& o) {
    commits += o.commits;
    aborts += o.aborts;
    full_validations += o.full_validations;
    validation_comparisons += o.validation_comparisons;
    leader_executions += o.leader_executions;
    helper_executions += o.helper_executions;
    helper_validations += o.helper_validations;
    helper_comparisons += o.helper_comparisons;
    dooms_sent += o.dooms_sent;
    tm_ops += o.tm_ops;
    committed_reads += o.committed_reads;
    committed_writes += o.committed_writes;
    guard_hits += o.guard_hits;
    beacon_fires += o.beacon_fires;
    for (std::size_t i = 0; i < kAbortReasonCount; ++i) {
      aborts_by_reason[i] += o.aborts_by_reason[i];
    }
    return *this;
  }
};

/// A leader thread's handle on the STM: its descriptor, and for helper
/// strategies the persistent helper thread that serves it.
///
/// Create one per thread, inside that thread.
class Worker {
 public:
  explicit Worker(Stm& stm, std::optional<Strategy> strategy = std::nullopt)
      : stm_(stm), tx_(stm, strategy.value_or(stm.config().strategy)) {
    if (uses_helper(tx_.strategy())) {
      helper_ = std::make_unique<Helper>(stm, tx_);
      tx_.set_out_of_band(helper_.get());
    }
  }

  Worker(const Worker&) = delete;
  Worker& operator=(const Worker&) = delete;

  ~Worker() {
    tx_.set_out_of_band(nullptr);
    helper_.reset();
  }

  /// Run `body` as a transaction, retrying until it commits.
  ///
  /// `body` must be a deterministic function of what it reads through the
  /// descriptor and must have no other side effects; it may run several
  /// times, and a clone helper runs it too.
  template <class F>
  auto run(F&& body) -> std::invoke_result_t<F&, TxDescriptor&> {
    using R = std::invoke_result_t<F&, TxDescriptor&>;
    std::function<void(TxDescriptor&)> clone;
    if (tx_.strategy() == Strategy::LazyHelperClone) {
      clone = [&body](TxDescriptor& t) { (void)std::invoke(body, t); };
      tx_.set_clone_body(&clone);
    }
    struct ResetClone {
      TxDescriptor& t;
      ~ResetClone() { t.set_clone_body(nullptr); }
    } reset{tx_};

    for (;;) {
      tx_.begin();
      tx_.note_body_execution();
      try {
        if constexpr (std::is_void_v<R>) {
          std::invoke(body, tx_);
          if (tx_.commit() == CommitOutcome::Committed) return;
        } else {
          R result = std::invoke(body, tx_);
          if (tx_.commit() == CommitOutcome::Committed) return result;
        }
      } catch (const TxAbort& a) {
        tx_.rollback(a.reason);
      } catch (const GuardCorruption&) {
        tx_.rollback(AbortReason::Explicit);
        throw;
      } catch (const ApplicationFault&) {
        tx_.rollback(AbortReason::Explicit);
        throw;
      } catch (const CloneLookupError&) {
        tx_.rollback(AbortReason::Explicit);
        throw;
      } catch (const std::exception&) {
        // An exception thrown by the body itself: same verdict as a fault.
        if (tx_.active() &&
            tx_.fault_verdict("exception") == FaultVerdict::AbortRetry) {
          tx_.rollback(AbortReason::StaleFault);
          continue;
        }
        tx_.rollback(AbortReason::Explicit);
        throw;
      }
    }
  }

  TxDescriptor& descriptor() noexcept { return tx_; }
  const TxDescriptor& descriptor() const noexcept { return tx_; }
  Strategy strategy() const noexcept { return tx_.strategy(); }
  const Helper* helper() const noexcept { return helper_.get(); }

  WorkerStats stats() const {
    const TxCounters c = tx_.counters();
    WorkerStats s;
    s.commits = c.commits;
    s.aborts = c.aborts;
    s.full_validations = c.full_validations;
    s.validation_comparisons = c.validation_comparisons;
    s.leader_executions = c.body_executions;
    s.tm_ops = c.tm_ops;
    s.committed_reads = c.committed_reads;
    s.committed_writes = c.committed_writes;
    s.guard_hits = c.guard_hits;
    s.beacon_fires = c.beacon_fires;
    s.aborts_by_reason = c.aborts_by_reason;
    if (helper_) {
      const HelperCounters h = helper_->counters();
      s.helper_executions = h.body_executions;
      s.helper_validations = h.validation_rounds;
      s.helper_comparisons = h.validation_comparisons;
      s.dooms_sent = h.dooms;
    }
    return s;
  }

 private:
  Stm& stm_;
  TxDescriptor tx_;
  std::unique_ptr<Helper> helper_;
};

/// One-shot convenience: run `body` on a temporary worker.
template <class F>
auto run_transaction(Stm& stm, Strategy strategy, F&& body) {
  Worker w(stm, strategy);
  return w.run(std::forward<F>(body));
}

}  // namespace sandtm
