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
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "sandtm/history.hpp"

namespace sandtm::oracle {

struct Violation {
  enum class Kind { ReadMismatch, FinalMismatch, BadAddress, NoSerialOrder };

  Kind kind = Kind::ReadMismatch;
  /// Position in replay order; for FinalMismatch the number of records.
  std::size_t index = 0;
  std::uint64_t tx = 0;
  Addr addr = 0;
  Word expected = 0;
  Word observed = 0;

  std::string describe() const {
    switch (kind) {
      case Kind::ReadMismatch:
        return "record " + std::to_string(index) + " (tx " + std::to_string(tx) +
               ") read " + std::to_string(observed) + " at " + std::to_string(addr) +
               ", serial state holds " + std::to_string(expected);
      case Kind::FinalMismatch:
        return "final state at " + std::to_string(addr) + " is " +
               std::to_string(observed) + ", replay gives " + std::to_string(expected);
      case Kind::BadAddress:
        return "record " + std::to_string(index) + " (tx " + std::to_string(tx) +
               ") touches address " + std::to_string(addr) + " outside the heap";
      case Kind::NoSerialOrder:
        return "no serial order of " + std::to_string(index) +
               " committed transactions explains the history";
    }
    return "?";
  }
};

struct CheckResult {
  std::optional<Violation> violation;
  std::size_t records = 0;

  bool ok() const noexcept { return !violation.has_value(); }
  explicit operator bool() const noexcept { return ok(); }
};

namespace detail {

inline std::optional<Violation> bad_address(const History& h) {
  const std::size_t n = h.initial.size();
  for (std::size_t i = 0; i < h.commits.size(); ++i) {
    const CommitRecord& r = h.commits[i];
    for (const auto* set : {&r.reads, &r.writes}) {
      for (const auto& [a, v] : *set) {
        if (a >= n) {
          Violation x;
          x.kind = Violation::Kind::BadAddress;
          x.index = i;
          x.tx = r.tx;
          x.addr = a;
          return x;
        }
      }
    }
  }
  return std::nullopt;
}

inline std::optional<Violation> final_mismatch(const std::vector<Word>& state,
                                               const History& h) {
  if (h.final_state.empty()) return std::nullopt;
  for (std::size_t a = 0; a < state.size(); ++a) {
    const Word got = a < h.final_state.size() ? h.final_state[a] : 0;
    if (got != state[a]) {
      Violation x;
      x.kind = Violation::Kind::FinalMismatch;
      x.index = h.commits.size();
      x.addr = a;
      x.expected = state[a];
      x.observed = got;
      return x;
    }
  }
  return std::nullopt;
}

}  // namespace detail

/// Replays committed transactions in seqlock order against the initial
/// state. Every read must see the replayed state and the end state must
/// match `final_state` (if present). Linear in the history size.
inline CheckResult check_serializable(const History& history) {
  CheckResult res;
  res.records = history.commits.size();
  if (auto v = detail::bad_address(history)) {
    res.violation = v;
    return res;
  }
  if (!history.final_state.empty() &&
      history.final_state.size() != history.initial.size()) {
    Violation x;
    x.kind = Violation::Kind::FinalMismatch;
    x.index = history.commits.size();
    x.addr = std::min(history.final_state.size(), history.initial.size());
    res.violation = x;
    return res;
  }
  std::vector<CommitRecord> order = history.commits;
  sort_commit_order(order);
  std::vector<Word> state = history.initial;
  for (std::size_t i = 0; i < order.size(); ++i) {
    const CommitRecord& r = order[i];
    for (const auto& [a, v] : r.reads) {
      if (state[a] != v) {
        Violation x;
        x.kind = Violation::Kind::ReadMismatch;
        x.index = i;
        x.tx = r.tx;
        x.addr = a;
        x.expected = state[a];
        x.observed = v;
        res.violation = x;
        return res;
      }
    }
    for (const auto& [a, v] : r.writes) state[a] = v;
  }
  res.violation = detail::final_mismatch(state, history);
  return res;
}

/// Order-free check: searches all serial orders of the committed
/// transactions for one that explains every read and the final state.
/// Exponential; meant for small histories and for cross-checking
/// `check_serializable`.
inline CheckResult check_serializable_any_order(const History& history,
                                                std::size_t max_records = 12) {
  CheckResult res;
  res.records = history.commits.size();
  if (history.commits.size() > max_records) {
    throw std::invalid_argument("history too large for permutation search");
  }
  if (auto v = detail::bad_address(history)) {
    res.violation = v;
    return res;
  }
  if (!history.final_state.empty() &&
      history.final_state.size() != history.initial.size()) {
    Violation x;
    x.kind = Violation::Kind::NoSerialOrder;
    x.index = history.commits.size();
    res.violation = x;
    return res;
  }
  const auto& rs = history.commits;
  std::vector<bool> used(rs.size(), false);
  std::vector<Word> state = history.initial;

  auto search = [&](auto& self, std::size_t depth) -> bool {
    if (depth == rs.size()) {
      return !detail::final_mismatch(state, history).has_value();
    }
    for (std::size_t i = 0; i < rs.size(); ++i) {
      if (used[i]) continue;
      bool fits = true;
      for (const auto& [a, v] : rs[i].reads) {
        if (state[a] != v) {
          fits = false;
          break;
        }
      }
      if (!fits) continue;
      std::vector<std::pair<Addr, Word>> undo;
      undo.reserve(rs[i].writes.size());
      for (const auto& [a, v] : rs[i].writes) {
        undo.emplace_back(a, state[a]);
        state[a] = v;
      }
      used[i] = true;
      if (self(self, depth + 1)) return true;
      used[i] = false;
      for (auto it = undo.rbegin(); it != undo.rend(); ++it) state[it->first] = it->second;
    }
    return false;
  };

  if (!search(search, 0)) {
    Violation x;
    x.kind = Violation::Kind::NoSerialOrder;
    x.index = rs.size();
    res.violation = x;
  }
  return res;
}

}  // namespace sandtm::oracle
