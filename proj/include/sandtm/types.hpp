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
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace sandtm {

using Word = std::uint64_t;
/// Dense index of a shared heap cell.
using Addr = std::uint64_t;
/// An address as computed by transaction code; may hit the heap, a local
/// frame, a guard slot, or nothing at all.
using RawAddr = std::uint64_t;
using Nanos = std::chrono::nanoseconds;

enum class ValidationMode { Eager, Lazy };

/// Validation layer of a transaction. Eager is the incremental baseline, the
/// three others validate lazily and contain doomed transactions out of band.
enum class Strategy { Eager, LazyTimer, LazyHelperReadSet, LazyHelperClone };

inline constexpr std::array<Strategy, 4> kAllStrategies = {
    Strategy::Eager, Strategy::LazyTimer, Strategy::LazyHelperReadSet,
    Strategy::LazyHelperClone};
inline constexpr std::array<Strategy, 3> kLazyStrategies = {
    Strategy::LazyTimer, Strategy::LazyHelperReadSet, Strategy::LazyHelperClone};

constexpr ValidationMode mode_of(Strategy s) {
  return s == Strategy::Eager ? ValidationMode::Eager : ValidationMode::Lazy;
}

constexpr bool uses_helper(Strategy s) {
  return s == Strategy::LazyHelperReadSet || s == Strategy::LazyHelperClone;
}

constexpr std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::Eager: return "eager";
    case Strategy::LazyTimer: return "lazy-timer";
    case Strategy::LazyHelperReadSet: return "lazy-helper-readset";
    case Strategy::LazyHelperClone: return "lazy-helper-clone";
  }
  return "?";
}

inline Strategy parse_strategy(std::string_view name) {
  for (Strategy s : kAllStrategies) {
    if (to_string(s) == name) return s;
  }
  // Short aliases.
  if (name == "norec") return Strategy::Eager;
  if (name == "norecsb" || name == "timer") return Strategy::LazyTimer;
  if (name == "norecht" || name == "readset") return Strategy::LazyHelperReadSet;
  if (name == "noreciv" || name == "clone") return Strategy::LazyHelperClone;
  throw std::invalid_argument("unknown strategy: " + std::string(name));
}

enum class TxStatus { Idle, Active, Doomed, Committed, Aborted };

enum class CommitOutcome { Committed, Aborted };

/// Why an attempt was rolled back. Used for containment accounting.
enum class AbortReason : std::size_t {
  Validation,   // read set failed validation (eager read, commit, beacon)
  Doom,         // doom flag delivered from a helper
  Beacon,       // timer beacon validation failed
  GuardHit,     // computed store/load landed on a guard slot
  CloneMiss,    // function id without transactional clone
  StaleFault,   // fault raised while the clock had moved
  Budget,       // over-budget allocation failed pre-validation
  Explicit,     // caller requested abort
  HelperStop,   // clone helper told to quiesce (helper-internal)
  kCount
};

inline constexpr std::size_t kAbortReasonCount =
    static_cast<std::size_t>(AbortReason::kCount);

constexpr std::string_view to_string(AbortReason r) {
  switch (r) {
    case AbortReason::Validation: return "validation";
    case AbortReason::Doom: return "doom";
    case AbortReason::Beacon: return "beacon";
    case AbortReason::GuardHit: return "guard";
    case AbortReason::CloneMiss: return "clone-miss";
    case AbortReason::StaleFault: return "stale-fault";
    case AbortReason::Budget: return "budget";
    case AbortReason::Explicit: return "explicit";
    case AbortReason::HelperStop: return "helper-stop";
    case AbortReason::kCount: break;
  }
  return "?";
}

/// Abort signal. Deliberately not a std::exception so that application code
/// catching std::exception inside a transaction body does not swallow it.
struct TxAbort {
  AbortReason reason;
};

/// A fault that survived the verdict: the transaction was consistent, so the
/// fault belongs to the application.
class ApplicationFault : public std::runtime_error {
 public:
  ApplicationFault(std::string site, const std::string& info)
      : std::runtime_error("application fault at " + site + ": " + info),
        site_(std::move(site)) {}
  const std::string& site() const noexcept { return site_; }

 private:
  std::string site_;
};

/// Debug-mode diagnostic: a clone lookup missed on a consistent state.
class CloneLookupError : public std::runtime_error {
 public:
  explicit CloneLookupError(std::uint64_t fn)
      : std::runtime_error("no transactional clone for function id " +
                           std::to_string(fn)),
        fn_(fn) {}
  std::uint64_t fn_id() const noexcept { return fn_; }

 private:
  std::uint64_t fn_;
};

/// A guard run changed without passing through the classified store path.
/// This is an implementation bug, never a transactional condition.
class GuardCorruption : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace sandtm
