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
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <functional>
#include <limits>
#include <memory>
#include <random>
#include <semaphore>
#include <thread>
#include <vector>

#include "sandtm/scheduler.hpp"

namespace sandtm {

/// Serializes every participating thread onto one logical timeline.
///
/// Exactly one participant runs at a time; the baton changes hands only at
/// yield points. Program threads are the interleaving subjects. Helper
/// threads are spawned by the library through `spawn`; by default they run
/// to idle after every program step, which models a helper that keeps up
/// with its leader. Time is virtual and advances by `tick` per program step.
///
/// Only TM-entry yields and local work of program threads are choice points. A thread that
/// yields `Spin` is not scheduled again until some other thread has changed
/// state (any non-spin yield, `notify`, or exit); if the helpers alone
/// unblock it, it simply continues.
class DeterministicScheduler final : public Scheduler {
 public:
  enum class Policy { Random, Explore, Segments };
  enum class HelperMode { RunToIdle, Interleaved };

  static constexpr std::size_t kUntilDone = std::numeric_limits<std::size_t>::max();

  /// Program thread `thread` gets `turns` consecutive turns; a turn runs
  /// from one yield point to the next.
  struct Segment {
    std::size_t thread;
    std::size_t turns;
  };

  struct Options {
    Policy policy = Policy::Random;
    std::uint64_t seed = 0;
    HelperMode helpers = HelperMode::RunToIdle;
    Nanos tick{1'000'000};
    /// If above `tick`, each step draws its duration from [tick, tick_max].
    Nanos tick_max{0};
    /// Explore: choice indices to replay before defaulting to 0.
    std::vector<std::size_t> choices = {};
    std::vector<Segment> segments = {};
  };

  DeterministicScheduler() : DeterministicScheduler(Options{}) {}
  explicit DeterministicScheduler(Options o) : opt_(std::move(o)), rng_(opt_.seed) {
    if (opt_.policy != Policy::Random) opt_.helpers = HelperMode::RunToIdle;
  }

  DeterministicScheduler(const DeterministicScheduler&) = delete;
  DeterministicScheduler& operator=(const DeterministicScheduler&) = delete;

  ~DeterministicScheduler() override {
    if (!ran_) {
      abandon_ = true;
      for (auto& p : parts_) p->go.release();
    }
    for (auto& p : parts_) {
      if (p->os.joinable()) p->os.join();
    }
  }

  /// Register a program thread. Call before `run`.
  std::size_t spawn_program(std::function<void()> fn) {
    Participant* p = add(std::move(fn), ThreadRole::Program);
    p->program_index = programs_++;
    return p->program_index;
  }

  /// Run all participants to completion on the calling thread's behalf.
  /// Rethrows the first exception that escaped a participant.
  void run() {
    ran_ = true;
    Participant* first = choose(nullptr, YieldPoint::Begin, false);
    if (first != nullptr) {
      first->go.release();
      done_.acquire();
    }
    for (auto& p : parts_) {
      if (p->os.joinable()) p->os.join();
    }
    if (error_) std::rethrow_exception(error_);
  }

  // ---- Scheduler ---------------------------------------------------------

  void yield(YieldPoint kind) override {
    Participant* self = current();
    if (self == nullptr || kind == YieldPoint::ValidateStep) return;
    account(self, kind);
    switch_to(self, choose(self, kind, false));
  }

  void notify() override {
    if (current() != nullptr) ++epoch_;
  }

  void wait_change(const std::atomic<std::uint64_t>& word,
                   std::uint64_t old) override {
    if (current() == nullptr) {
      Scheduler::wait_change(word, old);
      return;
    }
    if (word.load(std::memory_order_acquire) != old) return;
    yield(YieldPoint::Spin);
  }

  void pause() override {}

  Nanos now() const override { return now_; }

  /// Local work is a choice point that takes `d` of virtual time.
  void advance(Nanos d) override {
    Participant* self = current();
    if (self == nullptr) return;
    now_ += d;
    if (self->role != ThreadRole::Program) return;
    switch_to(self, choose(self, YieldPoint::Work, false));
  }

  std::unique_ptr<Joinable> spawn(std::function<void()> fn,
                                  ThreadRole role) override {
    Participant* p = add(std::move(fn), role);
    if (role == ThreadRole::Program) p->program_index = programs_++;
    return std::make_unique<Handle>(*this, *p);
  }

  // ---- inspection --------------------------------------------------------

  /// Choice index taken at each branching point, and how many options it had.
  const std::vector<std::size_t>& taken() const noexcept { return taken_; }
  const std::vector<std::size_t>& arity() const noexcept { return arity_; }
  /// TM-entry yields made by program threads.
  std::size_t program_yields() const noexcept { return program_yields_; }
  std::size_t switches() const noexcept { return switches_; }

 private:
  static constexpr std::uint64_t kNone = std::numeric_limits<std::uint64_t>::max();

  struct Participant {
    std::size_t id = 0;
    std::size_t program_index = kUntilDone;
    ThreadRole role = ThreadRole::Program;
    std::function<void()> fn;
    std::binary_semaphore go{0};
    std::thread os;
    bool finished = false;
    std::uint64_t spin_epoch = kNone;
    std::uint64_t seen_epoch = kNone;
  };

  class Handle final : public Joinable {
   public:
    Handle(DeterministicScheduler& s, Participant& p) : s_(s), p_(p) {}
    void join() override {
      while (!p_.finished) s_.yield(YieldPoint::Spin);
      if (p_.os.joinable()) p_.os.join();
    }

   private:
    DeterministicScheduler& s_;
    Participant& p_;
  };

  static inline thread_local DeterministicScheduler* tl_sched_ = nullptr;
  static inline thread_local Participant* tl_self_ = nullptr;

  Participant* current() const noexcept {
    return tl_sched_ == this ? tl_self_ : nullptr;
  }

  Participant* add(std::function<void()> fn, ThreadRole role) {
    auto owned = std::make_unique<Participant>();
    Participant* p = owned.get();
    p->id = parts_.size();
    p->role = role;
    p->fn = std::move(fn);
    parts_.push_back(std::move(owned));
    p->os = std::thread([this, p] { entry(p); });
    return p;
  }

  void entry(Participant* p) {
    tl_sched_ = this;
    tl_self_ = p;
    p->go.acquire();
    if (abandon_) return;
    try {
      p->fn();
    } catch (...) {
      if (!error_) error_ = std::current_exception();
    }
    p->finished = true;
    ++epoch_;
    if (forced_ == p) forced_ = nullptr;
    Participant* next = choose(p, YieldPoint::Spin, true);
    if (next != nullptr) {
      ++switches_;
      next->go.release();
    } else {
      done_.release();
    }
  }

  void switch_to(Participant* self, Participant* next) {
    if (next == self || next == nullptr) return;
    ++switches_;
    next->go.release();
    self->go.acquire();
  }

  static bool interleaving_point(YieldPoint k) {
    return is_tm_entry(k) || k == YieldPoint::Work;
  }

  void account(Participant* self, YieldPoint kind) {
    if (self->role != ThreadRole::Program) return;
    if (is_tm_entry(kind) || kind == YieldPoint::Progress) {
      Nanos step = opt_.tick;
      if (opt_.tick_max > opt_.tick) {
        std::uniform_int_distribution<std::int64_t> d(opt_.tick.count(),
                                                      opt_.tick_max.count());
        step = Nanos(d(rng_));
      }
      now_ += step;
    }
    if (is_tm_entry(kind)) ++program_yields_;
  }

  bool eligible(const Participant* p) const {
    return !p->finished && (p->spin_epoch == kNone || p->spin_epoch < epoch_);
  }

  Participant* choose(Participant* self, YieldPoint kind, bool self_finished) {
    const bool run_to_idle = opt_.helpers == HelperMode::RunToIdle;
    if (self != nullptr && !self_finished) {
      if (kind == YieldPoint::Spin) {
        self->spin_epoch = epoch_;
      } else {
        self->spin_epoch = kNone;
        ++epoch_;
      }
      if (self->role == ThreadRole::Helper && run_to_idle && kind != YieldPoint::Spin) {
        return self;
      }
      if (self->role == ThreadRole::Program && !interleaving_point(kind)) {
        forced_ = self;
      }
    }
    if (run_to_idle) {
      for (auto& h : parts_) {
        if (h->role == ThreadRole::Helper && !h->finished && h->seen_epoch != epoch_) {
          h->seen_epoch = epoch_;
          h->spin_epoch = kNone;
          return h.get();
        }
      }
    }
    if (forced_ != nullptr) {
      Participant* f = forced_;
      forced_ = nullptr;
      if (eligible(f)) return f;
    }

    std::vector<Participant*> cands;
    bool any_alive = false;
    for (auto& p : parts_) {
      if (p->finished) continue;
      if (p->role == ThreadRole::Helper && run_to_idle) {
        any_alive = true;
        continue;
      }
      any_alive = true;
      if (eligible(p.get())) cands.push_back(p.get());
    }
    if (!any_alive) return nullptr;
    if (cands.empty()) {
      // Everyone is waiting. Let them re-check; this only loops forever on
      // a genuine deadlock.
      if (++stalls_ > 1'000'000) {
        std::fprintf(stderr, "DeterministicScheduler: deadlock\n");
        std::abort();
      }
      ++epoch_;
      return choose(nullptr, YieldPoint::Spin, true);
    }
    stalls_ = 0;
    if (cands.size() == 1) return cands.front();

    switch (opt_.policy) {
      case Policy::Random: {
        std::uniform_int_distribution<std::size_t> d(0, cands.size() - 1);
        return cands[d(rng_)];
      }
      case Policy::Explore: {
        const std::size_t k = taken_.size();
        std::size_t idx = k < opt_.choices.size() ? opt_.choices[k] : 0;
        if (idx >= cands.size()) idx = 0;
        taken_.push_back(idx);
        arity_.push_back(cands.size());
        return cands[idx];
      }
      case Policy::Segments: {
        while (seg_ < opt_.segments.size()) {
          Segment& s = opt_.segments[seg_];
          Participant* t = nullptr;
          for (Participant* c : cands) {
            if (c->program_index == s.thread) t = c;
          }
          if (t == nullptr || s.turns == 0) {
            ++seg_;
            continue;
          }
          if (s.turns != kUntilDone) --s.turns;
          return t;
        }
        return cands.front();
      }
    }
    return cands.front();
  }

  Options opt_;
  std::mt19937_64 rng_;
  std::vector<std::unique_ptr<Participant>> parts_;
  std::size_t programs_ = 0;
  std::binary_semaphore done_{0};
  std::exception_ptr error_;
  bool ran_ = false;
  bool abandon_ = false;
  Participant* forced_ = nullptr;
  std::uint64_t epoch_ = 0;
  std::uint64_t stalls_ = 0;
  Nanos now_{0};
  std::size_t seg_ = 0;
  std::vector<std::size_t> taken_;
  std::vector<std::size_t> arity_;
  std::size_t program_yields_ = 0;
  std::size_t switches_ = 0;
};

}  // namespace sandtm
