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
#include <atomic>
#include <cmath>
#include <cstdint>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "sandtm/config.hpp"
#include "sandtm/scheduler.hpp"
#include "sandtm/types.hpp"

namespace sandtm {

enum class FaultVerdict { AbortRetry, PropagateConsistent };

/// Timer-driven validation trigger with an adaptive frequency.
///
/// The frequency stays within [min_hz, max_hz]. A fire that finds an
/// inconsistency doubles it; `clean_fires_to_halve` consecutive clean fires
/// halve it.
class Beacon {
 public:
  explicit Beacon(BeaconConfig cfg = {})
      : cfg_(cfg), hz_(std::clamp(cfg.initial_hz, cfg.min_hz, cfg.max_hz)) {}

  const BeaconConfig& config() const noexcept { return cfg_; }
  double frequency_hz() const noexcept { return hz_; }
  Nanos period() const noexcept {
    return Nanos(static_cast<std::int64_t>(std::llround(1e9 / hz_)));
  }

  bool armed() const noexcept { return armed_; }
  Nanos last_fire() const noexcept { return last_fire_; }

  void arm(Nanos now) noexcept {
    armed_ = cfg_.enabled;
    last_fire_ = now;
  }
  void disarm() noexcept { armed_ = false; }

  bool due(Nanos now) const noexcept {
    return armed_ && now - last_fire_ >= period();
  }

  /// Record a fire at `now` and adapt the frequency to its result.
  void fired(Nanos now, bool consistent) noexcept {
    last_fire_ = now;
    if (!consistent) {
      hz_ = std::min(hz_ * 2.0, cfg_.max_hz);
      clean_streak_ = 0;
    } else if (++clean_streak_ >= cfg_.clean_fires_to_halve) {
      hz_ = std::max(hz_ / 2.0, cfg_.min_hz);
      clean_streak_ = 0;
    }
  }

 private:
  BeaconConfig cfg_;
  double hz_;
  unsigned clean_streak_ = 0;
  bool armed_ = false;
  Nanos last_fire_{0};
};

using FnId = std::uint64_t;
using CloneId = std::uint64_t;

/// Function identifier -> transactional clone. Built up front, then frozen;
/// lookups never mutate.
class CloneRegistry {
 public:
  void add(FnId fn, CloneId clone) {
    if (frozen_) throw std::logic_error("clone registry is frozen");
    map_[fn] = clone;
  }
  void freeze() noexcept { frozen_ = true; }
  bool frozen() const noexcept { return frozen_; }

  std::optional<CloneId> find(FnId fn) const {
    auto it = map_.find(fn);
    if (it == map_.end()) return std::nullopt;
    return it->second;
  }

 private:
  std::unordered_map<FnId, CloneId> map_;
  bool frozen_ = false;
};

struct Block {
  std::uint64_t id = 0;
  std::size_t size = 0;
};

/// Shared allocator with an internal lock, standing in for malloc.
///
/// Only bookkeeping is modeled: a block is an id and a size charged against
/// `capacity`. The lock is a scheduler-aware spin lock so that the
/// deterministic scheduler can interleave other threads while it is held.
class BlockAllocator {
 public:
  explicit BlockAllocator(std::size_t capacity) : capacity_(capacity) {}

  /// nullopt on exhaustion.
  std::optional<Block> allocate(std::size_t size, Scheduler& sched) {
    lock(sched);
    sched.yield(YieldPoint::AllocInternal);
    std::optional<Block> out;
    if (size <= capacity_ - live_bytes_) {
      out = Block{++next_id_, size};
      live_.emplace(out->id, size);
      live_bytes_ += size;
      ++granted_;
    }
    unlock(sched);
    return out;
  }

  void release(const Block& b, Scheduler& sched) {
    lock(sched);
    auto it = live_.find(b.id);
    if (it == live_.end()) {
      unlock(sched);
      throw std::logic_error("double release of block " + std::to_string(b.id));
    }
    live_bytes_ -= it->second;
    live_.erase(it);
    unlock(sched);
  }

  std::size_t live_blocks() const {
    std::lock_guard g(stats_mu_);
    return live_.size();
  }
  std::size_t live_bytes() const {
    std::lock_guard g(stats_mu_);
    return live_bytes_;
  }
  std::uint64_t granted() const {
    std::lock_guard g(stats_mu_);
    return granted_;
  }

 private:
  void lock(Scheduler& sched) {
    while (busy_.exchange(true, std::memory_order_acquire)) {
      sched.yield(YieldPoint::Spin);
      sched.pause();
    }
    stats_mu_.lock();
  }
  void unlock(Scheduler& sched) {
    stats_mu_.unlock();
    busy_.store(false, std::memory_order_release);
    sched.notify();
  }

  std::size_t capacity_;
  std::atomic<bool> busy_{false};
  mutable std::mutex stats_mu_;
  std::unordered_map<std::uint64_t, std::size_t> live_;
  std::size_t live_bytes_ = 0;
  std::uint64_t next_id_ = 0;
  std::uint64_t granted_ = 0;
};

/// Per-descriptor containment state.
struct SandboxState {
  /// Epoch of the attempt a helper declared doomed. A flag for any other
  /// epoch is stale and ignored, which is how it is "cleared" between
  /// attempts without a second writer.
  std::atomic<std::uint64_t> doomed_epoch{0};
  Beacon beacon{};
  unsigned suspend_depth = 0;
  bool pending_doom = false;
  std::size_t alloc_budget = 0;
  std::size_t alloc_used = 0;
  std::vector<Block> alloc_log;
  std::unordered_map<std::string, unsigned> fault_retries;

  void doom(std::uint64_t epoch) noexcept {
    doomed_epoch.store(epoch, std::memory_order_release);
  }
  bool doomed(std::uint64_t epoch) const noexcept {
    return doomed_epoch.load(std::memory_order_acquire) == epoch;
  }
};

}  // namespace sandtm
