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
#include <cstdint>
#include <functional>
#include <mutex>
#include <utility>
#include <vector>

#include "sandtm/types.hpp"

namespace sandtm {

struct CommitRecord {
  std::uint64_t tx = 0;
  std::vector<std::pair<Addr, Word>> reads;
  std::vector<std::pair<Addr, Word>> writes;
  /// Writers: the even value the seqlock was released to. Read-only
  /// transactions: the stable even value they validated against.
  Word clock = 0;

  bool read_only() const noexcept { return writes.empty(); }
  friend bool operator==(const CommitRecord&, const CommitRecord&) = default;
};

struct History {
  std::vector<Word> initial;
  std::vector<CommitRecord> commits;
  std::vector<Word> final_state;

  friend bool operator==(const History&, const History&) = default;
};

/// Orders records by their serialization point: by clock, and a writer that
/// released clock c before read-only transactions that validated at c.
inline void sort_commit_order(std::vector<CommitRecord>& records) {
  std::stable_sort(records.begin(), records.end(),
                   [](const CommitRecord& a, const CommitRecord& b) {
                     if (a.clock != b.clock) return a.clock < b.clock;
                     return !a.read_only() && b.read_only();
                   });
}

/// Commit-time sink. Appended to from inside commit; aborted attempts never
/// reach it.
class HistoryRecorder {
 public:
  /// Called from inside commit, before the clock is released.
  std::function<void(const CommitRecord&)> on_append;

  void append(CommitRecord r) {
    if (on_append) on_append(r);
    std::lock_guard g(mu_);
    records_.push_back(std::move(r));
  }

  std::vector<CommitRecord> records() const {
    std::vector<CommitRecord> out;
    {
      std::lock_guard g(mu_);
      out = records_;
    }
    sort_commit_order(out);
    return out;
  }

  std::size_t size() const {
    std::lock_guard g(mu_);
    return records_.size();
  }

 private:
  mutable std::mutex mu_;
  std::vector<CommitRecord> records_;
};

}  // namespace sandtm
