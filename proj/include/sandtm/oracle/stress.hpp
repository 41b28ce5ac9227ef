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
#include <limits>
#include <random>
#include <vector>

#include "sandtm/oracle/explorer.hpp"

namespace sandtm::oracle {

struct StressShape {
  std::size_t max_cells = 8;
  std::size_t max_threads = 4;
  std::size_t max_ops = 8;
  std::size_t max_txs_per_thread = 3;
};

struct RandomOp {
  bool write = false;
  Addr addr = 0;
  Word salt = 0;
};

using RandomTx = std::vector<RandomOp>;

/// Random transactions over a tiny heap. A write stores a value derived from
/// everything the transaction has read so far, so an inconsistent read that
/// reached commit would surface as a replay mismatch.
inline ExploreSpec random_spec(Strategy strategy, std::uint64_t seed,
                               const StressShape& shape = {}) {
  std::mt19937_64 rng(seed);
  auto pick = [&](std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
  };
  ExploreSpec spec;
  spec.heap_cells = pick(2, shape.max_cells);
  spec.config.strategy = strategy;
  spec.config.helper_period = Nanos{0};
  spec.initial.resize(spec.heap_cells);
  for (auto& w : spec.initial) w = pick(0, 9);
  spec.max_yields = std::numeric_limits<std::size_t>::max();

  const std::size_t threads = pick(2, shape.max_threads);
  std::vector<std::vector<RandomTx>> plan(threads);
  for (auto& txs : plan) {
    txs.resize(pick(1, shape.max_txs_per_thread));
    for (auto& tx : txs) {
      tx.resize(pick(1, shape.max_ops));
      for (auto& op : tx) {
        op.write = pick(0, 2) == 0;
        op.addr = pick(0, spec.heap_cells - 1);
        op.salt = pick(1, 1000);
      }
    }
  }
  spec.build = [plan](Stm&) {
    std::vector<Program> programs;
    for (const auto& txs : plan) {
      programs.push_back([txs](ProgramEnv& env) {
        for (const RandomTx& ops : txs) {
          env.worker().run([&ops](Tx& tx) {
            Word acc = 0;
            for (const RandomOp& op : ops) {
              if (op.write) {
                tx.write(op.addr, acc * 31 + op.salt);
              } else {
                acc += tx.read(op.addr);
              }
            }
          });
        }
      });
    }
    return programs;
  };
  return spec;
}

/// One randomized schedule of `random_spec(strategy, seed)`. Step durations
/// are jittered around the beacon period so timer validation fires at
/// arbitrary points; helpers are interleaved freely on odd seeds.
inline RunOutcome random_history(Strategy strategy, std::uint64_t seed,
                                 const StressShape& shape = {}) {
  ExploreSpec spec = random_spec(strategy, seed, shape);
  spec.tick = Nanos{1'000'000};
  DeterministicScheduler::Options o;
  o.policy = DeterministicScheduler::Policy::Random;
  o.seed = seed ^ 0x9E3779B97F4A7C15ull;
  o.tick_max = Nanos{15'000'000};
  o.helpers = (seed & 1) ? DeterministicScheduler::HelperMode::Interleaved
                         : DeterministicScheduler::HelperMode::RunToIdle;
  return run_schedule(spec, o);
}

}  // namespace sandtm::oracle
