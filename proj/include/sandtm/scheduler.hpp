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
#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <thread>

#include "sandtm/types.hpp"

namespace sandtm {

/// Where a thread is when it calls into the scheduler.
enum class YieldPoint {
  // TM API entries. These are the interleaving points.
  Begin,
  Read,
  Write,
  Commit,
  Alloc,
  Lookup,
  Fault,
  // Progress hook of an uninstrumented loop. Advances time, never switches.
  Progress,
  // Between two comparisons of a validation pass. Only scripted tests use it.
  ValidateStep,
  // Inside the allocator's critical section (suspended region).
  AllocInternal,
  // The caller cannot make progress until another thread changes something.
  Spin,
  // Non-transactional local work (`advance`).
  Work,
};

constexpr bool is_tm_entry(YieldPoint p) {
  return p <= YieldPoint::Fault || p == YieldPoint::AllocInternal;
}

enum class ThreadRole { Program, Helper };

class Joinable {
 public:
  virtual ~Joinable() = default;
  virtual void join() = 0;
};

/// Hook through which every TM thread passes at API entries and in waits.
///
/// The production implementation is a thin wrapper over the OS; the
/// deterministic scheduler serializes all participants on one timeline and
/// supplies virtual time.
class Scheduler {
 public:
  virtual ~Scheduler() = default;

  virtual void yield(YieldPoint) {}

  /// Some shared state that another thread may be waiting on has changed.
  virtual void notify() {}

  /// Block until `word` no longer holds `old` (or spuriously). Callers loop.
  virtual void wait_change(const std::atomic<std::uint64_t>& word,
                           std::uint64_t old) {
    word.wait(old, std::memory_order_acquire);
  }

  /// One iteration of a busy-wait loop.
  virtual void pause() { std::this_thread::yield(); }

  virtual Nanos now() const {
    return std::chrono::duration_cast<Nanos>(
        std::chrono::steady_clock::now().time_since_epoch());
  }

  /// Non-transactional local work of the given duration.
  virtual void advance(Nanos d) {
    const auto until = now() + d;
    while (now() < until) {
    }
  }

  virtual std::unique_ptr<Joinable> spawn(std::function<void()> fn,
                                          ThreadRole role);

  static Scheduler& real();
};

namespace detail {
class OsThread final : public Joinable {
 public:
  explicit OsThread(std::function<void()> fn) : t_(std::move(fn)) {}
  ~OsThread() override {
    if (t_.joinable()) t_.join();
  }
  void join() override {
    if (t_.joinable()) t_.join();
  }

 private:
  std::thread t_;
};
}  // namespace detail

inline std::unique_ptr<Joinable> Scheduler::spawn(std::function<void()> fn,
                                                  ThreadRole) {
  return std::make_unique<detail::OsThread>(std::move(fn));
}

inline Scheduler& Scheduler::real() {
  static Scheduler instance;
  return instance;
}

}  // namespace sandtm
