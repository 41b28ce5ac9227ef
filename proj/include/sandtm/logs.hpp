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
#include <bit>
#include <cassert>
#include <memory>
#include <optional>
#include <unordered_map>
#include <utility>
#include <vector>

#include "sandtm/types.hpp"

namespace sandtm {

struct ReadLogEntry {
  Addr addr;
  Word value;

  friend bool operator==(const ReadLogEntry&, const ReadLogEntry&) = default;
};

/// Append-only read log that one other thread may inspect concurrently.
///
/// Entries live in segments of geometrically growing size that never move,
/// so a reader holding a published length can index without locks. The
/// owner writes an entry fully, then bumps `published` with release order.
class ReadLog {
 public:
  ReadLog() = default;
  ReadLog(const ReadLog&) = delete;
  ReadLog& operator=(const ReadLog&) = delete;

  void push(ReadLogEntry e) {
    auto [seg, off] = locate(size_);
    if (!segments_[seg]) {
      segments_[seg] = std::make_unique<ReadLogEntry[]>(kFirstSegment << seg);
    }
    segments_[seg][off] = e;
    ++size_;
    published_.store(size_, std::memory_order_release);
  }

  /// Owner-side length.
  std::size_t size() const noexcept { return size_; }
  bool empty() const noexcept { return size_ == 0; }

  /// Length visible to a concurrent reader. Entries below it are immutable
  /// until the owner clears the log.
  std::size_t published() const noexcept {
    return published_.load(std::memory_order_acquire);
  }

  const ReadLogEntry& operator[](std::size_t i) const {
    auto [seg, off] = locate(i);
    return segments_[seg][off];
  }

  void clear() noexcept {
    size_ = 0;
    published_.store(0, std::memory_order_release);
  }

  std::vector<ReadLogEntry> to_vector() const {
    std::vector<ReadLogEntry> out;
    out.reserve(size_);
    for (std::size_t i = 0; i < size_; ++i) out.push_back((*this)[i]);
    return out;
  }

 private:
  static constexpr std::size_t kFirstSegment = 64;
  static constexpr std::size_t kSegments = 40;

  static std::pair<std::size_t, std::size_t> locate(std::size_t i) noexcept {
    const std::size_t block = i / kFirstSegment + 1;
    const std::size_t seg = std::bit_width(block) - 1;
    const std::size_t start = kFirstSegment * ((std::size_t{1} << seg) - 1);
    return {seg, i - start};
  }

  std::array<std::unique_ptr<ReadLogEntry[]>, kSegments> segments_{};
  std::size_t size_ = 0;
  std::atomic<std::size_t> published_{0};
};

/// Deferred writes: one entry per address, written back in first-insertion
/// order.
class WriteBuffer {
 public:
  void put(Addr a, Word v) {
    auto [it, inserted] = index_.try_emplace(a, entries_.size());
    if (inserted) {
      entries_.emplace_back(a, v);
    } else {
      entries_[it->second].second = v;
    }
  }

  std::optional<Word> find(Addr a) const {
    auto it = index_.find(a);
    if (it == index_.end()) return std::nullopt;
    return entries_[it->second].second;
  }

  bool empty() const noexcept { return entries_.empty(); }
  std::size_t size() const noexcept { return entries_.size(); }

  /// (addr, value) in write-back order.
  const std::vector<std::pair<Addr, Word>>& entries() const noexcept {
    return entries_;
  }

  void clear() {
    entries_.clear();
    index_.clear();
  }

 private:
  std::vector<std::pair<Addr, Word>> entries_;
  std::unordered_map<Addr, std::size_t> index_;
};

}  // namespace sandtm
