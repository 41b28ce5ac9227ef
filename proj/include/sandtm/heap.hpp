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
#include <cassert>
#include <memory>
#include <span>
#include <vector>

#include "sandtm/scheduler.hpp"
#include "sandtm/types.hpp"

namespace sandtm {

/// Shared machine words. Every access is a single atomic load or store; the
/// only writers are commit write-back and non-transactional setup.
class SharedHeap {
 public:
  explicit SharedHeap(std::size_t cells)
      : cells_(std::make_unique<std::atomic<Word>[]>(cells)), size_(cells) {
    for (std::size_t i = 0; i < size_; ++i) cells_[i].store(0);
  }

  std::size_t size() const noexcept { return size_; }
  bool contains(RawAddr a) const noexcept { return a < size_; }

  Word load(Addr a) const {
    assert(a < size_);
    return cells_[a].load(std::memory_order_seq_cst);
  }

  void store(Addr a, Word v) {
    assert(a < size_);
    cells_[a].store(v, std::memory_order_seq_cst);
  }

  /// Setup outside any running transaction.
  void fill(std::span<const Word> values) {
    assert(values.size() <= size_);
    for (std::size_t i = 0; i < values.size(); ++i) store(i, values[i]);
  }

  std::vector<Word> snapshot() const {
    std::vector<Word> out(size_);
    for (std::size_t i = 0; i < size_; ++i) out[i] = load(i);
    return out;
  }

 private:
  std::unique_ptr<std::atomic<Word>[]> cells_;
  std::size_t size_;
};

/// Global version counter. Even: quiescent. Odd: one writer is in write-back.
class GlobalSeqLock {
 public:
  Word load() const noexcept { return counter_.load(std::memory_order_seq_cst); }

  static constexpr bool is_even(Word v) noexcept { return (v & 1) == 0; }

  /// Spin (through the scheduler) until the counter is even; returns it.
  Word wait_even(Scheduler& sched) const {
    for (;;) {
      const Word v = load();
      if (is_even(v)) return v;
      sched.yield(YieldPoint::Spin);
      sched.pause();
    }
  }

  /// even `v` -> `v + 1`. Fails if another writer moved the counter.
  bool try_acquire(Word v) noexcept {
    assert(is_even(v));
    return counter_.compare_exchange_strong(v, v + 1, std::memory_order_seq_cst);
  }

  /// odd `v + 1` -> `v + 2`.
  void release(Word acquired_from) noexcept {
    assert(counter_.load() == acquired_from + 1);
    counter_.store(acquired_from + 2, std::memory_order_seq_cst);
  }

  /// Test setup only.
  void reset(Word v) noexcept { counter_.store(v); }

 private:
  std::atomic<Word> counter_{0};
};

}  // namespace sandtm
