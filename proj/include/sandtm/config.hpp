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

#include <cstddef>
#include <optional>

#include "sandtm/types.hpp"

namespace sandtm {

struct BeaconConfig {
  bool enabled = true;
  double min_hz = 1.0;
  double max_hz = 100.0;
  double initial_hz = 100.0;
  /// Consecutive clean fires after which the frequency halves.
  unsigned clean_fires_to_halve = 8;

  /// Approximates the "validate once per transaction run" configuration:
  /// starts at the floor and only speeds up when inconsistencies are seen.
  static BeaconConfig once_per_run() {
    BeaconConfig b;
    b.initial_hz = b.min_hz;
    return b;
  }
  static BeaconConfig fixed(double hz) {
    BeaconConfig b;
    b.min_hz = b.max_hz = b.initial_hz = hz;
    return b;
  }
};

struct Config {
  Strategy strategy = Strategy::Eager;
  BeaconConfig beacon{};
  std::size_t alloc_budget = std::size_t{1} << 20;
  /// Capacity of the modeled allocator (the "system memory").
  std::size_t alloc_capacity = std::size_t{4} << 30;
  unsigned max_fault_retries = 16;
  /// Validate before surfacing a clone-lookup miss as a diagnostic.
  bool debug_validation = false;
  /// Minimum gap between read-set helper validation rounds. Unset means the
  /// current beacon period; zero means every opportunity.
  std::optional<Nanos> helper_period{};
  /// Local arena words per attempt (slots plus guards).
  std::size_t arena_capacity = 1 << 16;
};

}  // namespace sandtm
