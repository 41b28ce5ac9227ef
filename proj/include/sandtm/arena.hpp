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

#include <cassert>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sandtm/types.hpp"

namespace sandtm {

enum class WriteClass { Local, Guard, Shared, Unmapped };

constexpr std::string_view to_string(WriteClass c) {
  switch (c) {
    case WriteClass::Local: return "local";
    case WriteClass::Guard: return "guard";
    case WriteClass::Shared: return "shared";
    case WriteClass::Unmapped: return "unmapped";
  }
  return "?";
}

/// Handle to a pushed frame. Slot `i` lives at raw address `slot(i)`; the
/// words at `slot(-2)`, `slot(-1)`, `slot(n)`, `slot(n+1)` are its guards.
struct FrameRef {
  std::size_t depth = 0;
  RawAddr slot_base = 0;
  std::size_t slots = 0;

  RawAddr slot(std::int64_t i) const noexcept {
    return slot_base + static_cast<RawAddr>(i);
  }
};

/// Transaction-local stack of frames bracketed by guard runs.
///
/// A frame occupies `kGuardWords` guard words, its slots, then another
/// `kGuardWords` guard words. The guard words stand in for the saved base
/// pointer and return address of a machine stack frame: no legal program
/// writes them, so a computed access that lands there is proof of an
/// inconsistent view.
class LocalArena {
 public:
  static constexpr std::size_t kGuardWords = 2;
  static constexpr Word kSentinel = 0x5AFE'B0A7'F4A3'E5A1ull;
  /// Arena addresses start here; heap cells sit at [0, heap size).
  static constexpr RawAddr kBase = RawAddr{1} << 48;

  explicit LocalArena(std::size_t capacity = 1 << 16) : capacity_(capacity) {}

  std::optional<FrameRef> push(std::size_t n_slots) {
    const std::size_t need = n_slots + 2 * kGuardWords;
    if (words_.size() + need > capacity_) return std::nullopt;
    const std::size_t start = words_.size();
    words_.insert(words_.end(), kGuardWords, kSentinel);
    guard_.insert(guard_.end(), kGuardWords, true);
    words_.insert(words_.end(), n_slots, Word{0});
    guard_.insert(guard_.end(), n_slots, false);
    words_.insert(words_.end(), kGuardWords, kSentinel);
    guard_.insert(guard_.end(), kGuardWords, true);
    frames_.push_back({start, n_slots});
    return top();
  }

  /// Removes the top frame after checking that both guard runs are intact.
  void pop() {
    assert(!frames_.empty());
    const Frame f = frames_.back();
    const std::size_t end = f.start + f.slots + 2 * kGuardWords;
    for (std::size_t i = f.start; i < end; ++i) {
      if (guard_[i] && words_[i] != kSentinel) {
        throw GuardCorruption("guard slot at arena offset " + std::to_string(i) +
                              " overwritten outside the classified path");
      }
    }
    words_.resize(f.start);
    guard_.resize(f.start);
    frames_.pop_back();
  }

  std::size_t depth() const noexcept { return frames_.size(); }
  bool empty() const noexcept { return frames_.empty(); }

  FrameRef top() const {
    assert(!frames_.empty());
    const Frame& f = frames_.back();
    return {frames_.size() - 1, kBase + f.start + kGuardWords, f.slots};
  }

  /// Pure function of the arena layout, heap size and address.
  WriteClass classify(RawAddr a, std::size_t heap_size) const noexcept {
    if (a < heap_size) return WriteClass::Shared;
    if (a >= kBase && a - kBase < words_.size()) {
      return guard_[a - kBase] ? WriteClass::Guard : WriteClass::Local;
    }
    return WriteClass::Unmapped;
  }

  Word load_local(RawAddr a) const {
    assert(a >= kBase && a - kBase < words_.size() && !guard_[a - kBase]);
    return words_[a - kBase];
  }

  void store_local(RawAddr a, Word v) {
    assert(a >= kBase && a - kBase < words_.size() && !guard_[a - kBase]);
    words_[a - kBase] = v;
  }

  /// Drop every frame without guard checks (rollback).
  void clear() noexcept {
    words_.clear();
    guard_.clear();
    frames_.clear();
  }

#ifdef SANDTM_TESTING
  /// Overwrite a guard word directly, bypassing classification.
  void poke_guard_for_test(RawAddr a, Word v) {
    assert(a >= kBase && guard_.at(a - kBase));
    words_[a - kBase] = v;
  }
  Word peek_for_test(RawAddr a) const { return words_.at(a - kBase); }
#endif

 private:
  struct Frame {
    std::size_t start;
    std::size_t slots;
  };

  std::size_t capacity_;
  std::vector<Word> words_;
  std::vector<bool> guard_;
  std::vector<Frame> frames_;
};

}  // namespace sandtm
