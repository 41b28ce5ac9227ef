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

#include "sandtm/config.hpp"
#include "sandtm/heap.hpp"
#include "sandtm/history.hpp"
#include "sandtm/sandbox.hpp"
#include "sandtm/scheduler.hpp"

namespace sandtm {

/// Everything transactions share: heap, global clock, allocator, hooks.
class Stm {
 public:
  explicit Stm(std::size_t heap_cells, Config config = {},
               Scheduler& sched = Scheduler::real())
      : heap_(heap_cells),
        config_(config),
        sched_(&sched),
        allocator_(config.alloc_capacity) {}

  Stm(const Stm&) = delete;
  Stm& operator=(const Stm&) = delete;

  SharedHeap& heap() noexcept { return heap_; }
  const SharedHeap& heap() const noexcept { return heap_; }
  GlobalSeqLock& clock() noexcept { return clock_; }
  const GlobalSeqLock& clock() const noexcept { return clock_; }
  Scheduler& scheduler() const noexcept { return *sched_; }
  const Config& config() const noexcept { return config_; }
  BlockAllocator& allocator() noexcept { return allocator_; }

  HistoryRecorder* recorder() const noexcept { return recorder_; }
  void set_recorder(HistoryRecorder* r) noexcept { recorder_ = r; }

  std::uint64_t next_descriptor_id() noexcept {
    return next_id_.fetch_add(1, std::memory_order_relaxed) + 1;
  }

 private:
  SharedHeap heap_;
  GlobalSeqLock clock_;
  Config config_;
  Scheduler* sched_;
  BlockAllocator allocator_;
  HistoryRecorder* recorder_ = nullptr;
  std::atomic<std::uint64_t> next_id_{0};
};

}  // namespace sandtm
