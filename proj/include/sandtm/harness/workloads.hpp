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
#include <array>
#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <memory>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "sandtm/det_scheduler.hpp"
#include "sandtm/stm.hpp"

namespace sandtm::harness {

enum class Kernel { CounterArray, KvIndex, ListSet, GridRouter };

inline constexpr std::array<Kernel, 4> kAllKernels = {
    Kernel::CounterArray, Kernel::KvIndex, Kernel::ListSet, Kernel::GridRouter};

constexpr std::string_view to_string(Kernel k) {
  switch (k) {
    case Kernel::CounterArray: return "counter-array";
    case Kernel::KvIndex: return "kv-index";
    case Kernel::ListSet: return "list-set";
    case Kernel::GridRouter: return "grid-router";
  }
  return "?";
}

inline Kernel parse_kernel(std::string_view name) {
  for (Kernel k : kAllKernels) {
    if (to_string(k) == name) return k;
  }
  throw std::invalid_argument("unknown workload: " + std::string(name));
}

/// Low / Medium / High on every axis. Printed as Short/Medium/Long for
/// transaction length and Small/Medium/Large for read/write-set size.
enum class Level { Low, Medium, High };

enum class Axis { TxLength, RwSet, TxTime, Contention };

constexpr std::string_view to_string(Axis a, Level l) {
  constexpr std::string_view length[] = {"Short", "Medium", "Long"};
  constexpr std::string_view size[] = {"Small", "Medium", "Large"};
  constexpr std::string_view plain[] = {"Low", "Medium", "High"};
  const auto i = static_cast<std::size_t>(l);
  switch (a) {
    case Axis::TxLength: return length[i];
    case Axis::RwSet: return size[i];
    default: return plain[i];
  }
}

struct Characteristics {
  Level tx_length = Level::Low;
  Level rw_set = Level::Low;
  Level tx_time = Level::Low;
  Level contention = Level::Low;

  friend bool operator==(const Characteristics&, const Characteristics&) = default;

  std::string describe() const {
    return std::string(to_string(Axis::TxLength, tx_length)) + "/" +
           std::string(to_string(Axis::RwSet, rw_set)) + "/" +
           std::string(to_string(Axis::TxTime, tx_time)) + "/" +
           std::string(to_string(Axis::Contention, contention));
  }
};

/// Bucket boundaries used by the self-check.
struct BucketRule {
  /// TM operations (including local-arena accesses) per attempt.
  double short_max = 64, long_min = 512;
  /// Read-log plus write-buffer entries per committed transaction.
  double small_max = 8, large_min = 128;
  /// Fraction of a thread's virtual time spent inside transactions.
  double time_low_below = 0.35, time_high_above = 0.65;
  /// Aborts per commit.
  double contention_low_below = 0.1, contention_high_from = 0.5;
};

struct Measured {
  double tx_length = 0;
  double rw_set = 0;
  double tx_time = 0;
  double contention = 0;

  Characteristics buckets(const BucketRule& r = {}) const {
    Characteristics c;
    c.tx_length = tx_length <= r.short_max  ? Level::Low
                  : tx_length >= r.long_min ? Level::High
                                            : Level::Medium;
    c.rw_set = rw_set <= r.small_max   ? Level::Low
               : rw_set >= r.large_min ? Level::High
                                       : Level::Medium;
    c.tx_time = tx_time < r.time_low_below     ? Level::Low
                : tx_time > r.time_high_above ? Level::High
                                               : Level::Medium;
    c.contention = contention < r.contention_low_below    ? Level::Low
                   : contention >= r.contention_high_from ? Level::High
                                                          : Level::Medium;
    return c;
  }
};

struct KernelInfo {
  Kernel kernel;
  std::string_view analog;
  Characteristics declared;
  std::size_t default_ops_per_thread;
};

inline KernelInfo kernel_info(Kernel k) {
  using L = Level;
  switch (k) {
    case Kernel::CounterArray:
      return {k, "ssca2", {L::Low, L::Low, L::Low, L::Low}, 400};
    case Kernel::KvIndex:
      return {k, "kmeans", {L::Low, L::Medium, L::Low, L::Low}, 200};
    case Kernel::ListSet:
      return {k, "intruder", {L::Low, L::Medium, L::Medium, L::High}, 150};
    case Kernel::GridRouter:
      return {k, "labyrinth", {L::High, L::High, L::High, L::High}, 4};
  }
  throw std::invalid_argument("bad kernel");
}

/// Non-transactional work in units of `step`.
class LocalWork {
 public:
  LocalWork(Scheduler& s, Nanos step) : s_(s), step_(step) {}
  void run(std::size_t steps) {
    for (std::size_t i = 0; i < steps; ++i) s_.advance(step_);
    total_ += step_ * static_cast<std::int64_t>(steps);
  }
  Nanos total() const noexcept { return total_; }

 private:
  Scheduler& s_;
  Nanos step_;
  Nanos total_{0};
};

namespace kernels {

/// Interface every kernel implements. `thread` runs on its own thread with
/// its own worker and must record what it needs for `check` in per-thread
/// slots only.
class KernelBase {
 public:
  virtual ~KernelBase() = default;
  virtual std::size_t cells() const = 0;
  virtual void init(Stm& stm) = 0;
  virtual void thread(Stm& stm, Worker& w, std::size_t tid, std::size_t ops,
                      std::uint64_t seed, LocalWork& work) = 0;
  /// Empty when the end state is correct.
  virtual std::string check(Stm& stm) = 0;
};

/// Pairs of counter increments over a large array.
class CounterArray final : public KernelBase {
 public:
  static constexpr std::size_t kCounters = 1024;
  static constexpr std::size_t kWork = 20;

  explicit CounterArray(std::size_t threads) : issued_(threads, 0) {}

  std::size_t cells() const override { return kCounters; }
  void init(Stm&) override {}

  void thread(Stm&, Worker& w, std::size_t tid, std::size_t ops, std::uint64_t seed,
              LocalWork& work) override {
    std::mt19937_64 rng(seed);
    for (std::size_t i = 0; i < ops; ++i) {
      work.run(kWork);
      const Addr a = rng() % kCounters;
      const Addr b = (a + 1 + rng() % (kCounters - 1)) % kCounters;
      w.run([&](Tx& tx) {
        tx.write(a, tx.read(a) + 1);
        tx.write(b, tx.read(b) + 1);
      });
      issued_[tid] += 2;
    }
  }

  std::string check(Stm& stm) override {
    Word sum = 0;
    for (Addr a = 0; a < kCounters; ++a) sum += stm.heap().load(a);
    Word want = 0;
    for (Word n : issued_) want += n;
    if (sum != want) {
      return "counter total " + std::to_string(sum) + ", expected " + std::to_string(want);
    }
    return {};
  }

 private:
  std::vector<Word> issued_;
};

/// Cluster accumulators: each point adds its coordinates and a count to the
/// nearest of a few centers.
class KvIndex final : public KernelBase {
 public:
  static constexpr std::size_t kClusters = 16;
  static constexpr std::size_t kDims = 8;
  static constexpr std::size_t kStride = kDims + 1;
  static constexpr std::size_t kWork = 120;

  explicit KvIndex(std::size_t threads)
      : expect_(threads, std::vector<Word>(kClusters * kStride, 0)) {}

  std::size_t cells() const override { return kClusters * kStride; }
  void init(Stm&) override {}

  void thread(Stm&, Worker& w, std::size_t tid, std::size_t ops, std::uint64_t seed,
              LocalWork& work) override {
    std::mt19937_64 rng(seed);
    std::array<Word, kDims> point{};
    for (std::size_t i = 0; i < ops; ++i) {
      for (auto& x : point) x = rng() % 100;
      work.run(kWork);
      const std::size_t c = nearest(point);
      const Addr base = c * kStride;
      w.run([&](Tx& tx) {
        for (std::size_t d = 0; d < kDims; ++d) {
          tx.write(base + d, tx.read(base + d) + point[d]);
        }
        tx.write(base + kDims, tx.read(base + kDims) + 1);
      });
      for (std::size_t d = 0; d < kDims; ++d) expect_[tid][base + d] += point[d];
      expect_[tid][base + kDims] += 1;
    }
  }

  std::string check(Stm& stm) override {
    for (Addr a = 0; a < cells(); ++a) {
      Word want = 0;
      for (const auto& e : expect_) want += e[a];
      if (stm.heap().load(a) != want) {
        return "accumulator " + std::to_string(a) + " is " +
               std::to_string(stm.heap().load(a)) + ", expected " + std::to_string(want);
      }
    }
    return {};
  }

 private:
  // Fixed pseudo-centers; the distance computation itself is the local work.
  static std::size_t nearest(const std::array<Word, kDims>& p) {
    std::size_t best = 0;
    Word best_d = ~Word{0};
    for (std::size_t c = 0; c < kClusters; ++c) {
      Word d = 0;
      for (std::size_t k = 0; k < kDims; ++k) {
        const Word center = (c * 37 + k * 11) % 100;
        d += p[k] > center ? p[k] - center : center - p[k];
      }
      if (d < best_d) {
        best_d = d;
        best = c;
      }
    }
    return best;
  }

  std::vector<std::vector<Word>> expect_;
};

/// Sorted singly linked set fed from a shared work queue. Cell 0 is the
/// queue cursor and cell 1 the list head; node i keeps its key at 2i and its
/// successor at 2i + 1. Nodes are never reused.
class ListSet final : public KernelBase {
 public:
  static constexpr Word kKeys = 64;
  static constexpr std::size_t kInitial = 32;

  ListSet(std::size_t threads, std::size_t ops)
      : threads_(threads),
        ops_(ops),
        nodes_(kInitial + threads * ops),
        delta_(threads, 0) {}

  std::size_t cells() const override { return 2 * (nodes_ + 1); }

  void init(Stm& stm) override {
    // Every other key, in order.
    Word prev_next = 1;
    for (std::size_t i = 1; i <= kInitial; ++i) {
      stm.heap().store(key_cell(i), (i - 1) * 2);
      stm.heap().store(prev_next, i);
      prev_next = next_cell(i);
    }
    stm.heap().store(prev_next, 0);
  }

  void thread(Stm&, Worker& w, std::size_t tid, std::size_t ops, std::uint64_t seed,
              LocalWork& work) override {
    std::mt19937_64 rng(seed);
    std::size_t fresh = kInitial + 1 + tid * ops_;
    const std::size_t cap = nodes_ + 1;
    for (std::size_t i = 0; i < ops; ++i) {
      const Word key = rng() % kKeys;
      const unsigned kind = rng() % 10;  // 0-3 insert, 4-7 remove, 8-9 lookup
      work.run(kWork);
      const std::size_t node = fresh;
      const bool changed = w.run([&](Tx& tx) -> bool {
        tx.write(0, tx.read(0) + 1);
        Addr link = 1;
        Word cur = tx.read(link);
        std::size_t steps = 0;
        while (cur != 0 && tx.read(key_cell(cur)) < key) {
          if (++steps > cap) tx.raise_fault("list-cycle", "key " + std::to_string(key));
          link = next_cell(cur);
          cur = tx.read(link);
        }
        const bool present = cur != 0 && tx.read(key_cell(cur)) == key;
        if (kind < 4) {
          if (present) return false;
          tx.write(key_cell(node), key);
          tx.write(next_cell(node), cur);
          tx.write(link, node);
          return true;
        }
        if (kind < 8) {
          if (!present) return false;
          tx.write(link, tx.read(next_cell(cur)));
          return true;
        }
        return false;
      });
      if (changed && kind < 4) {
        ++fresh;
        ++delta_[tid];
      } else if (changed) {
        --delta_[tid];
      }
    }
  }

  std::string check(Stm& stm) override {
    std::int64_t want = kInitial;
    for (auto d : delta_) want += d;
    std::int64_t n = 0;
    Word cur = stm.heap().load(1);
    std::optional<Word> last;
    while (cur != 0) {
      if (++n > static_cast<std::int64_t>(nodes_)) return "cycle in list";
      const Word k = stm.heap().load(key_cell(cur));
      if (last && k <= *last) return "list not strictly sorted at key " + std::to_string(k);
      last = k;
      cur = stm.heap().load(next_cell(cur));
    }
    const Word taken = stm.heap().load(0);
    if (taken != threads_ * ops_) {
      return "queue cursor " + std::to_string(taken) + ", expected " +
             std::to_string(threads_ * ops_);
    }
    if (n != want) {
      return "set size " + std::to_string(n) + ", expected " + std::to_string(want);
    }
    return {};
  }

 private:
  static constexpr std::size_t kWork = 90;
  static Addr key_cell(Word node) { return 2 * node; }
  static Addr next_cell(Word node) { return 2 * node + 1; }

  std::size_t threads_;
  std::size_t ops_;
  std::size_t nodes_;
  std::vector<std::int64_t> delta_;
};

/// Routes paths across a shared grid with a breadth-first search whose
/// queue and parent map live in the local arena; a found path claims its
/// cells. Cell value 0 is free, otherwise the owning route id.
class GridRouter final : public KernelBase {
 public:
  static constexpr std::size_t kSide = 24;
  static constexpr std::size_t kCells = kSide * kSide;
  static constexpr std::size_t kWork = 20;

  explicit GridRouter(std::size_t threads) : routes_(threads) {}

  std::size_t cells() const override { return kCells; }
  void init(Stm&) override {}

  void thread(Stm&, Worker& w, std::size_t tid, std::size_t ops, std::uint64_t seed,
              LocalWork& work) override {
    std::mt19937_64 rng(seed);
    for (std::size_t i = 0; i < ops; ++i) {
      const Addr src = rng() % kCells;
      Addr dst = rng() % kCells;
      while (distance(src, dst) < kSide / 2) dst = rng() % kCells;
      const Word id = (tid + 1) * 1000 + i + 1;
      work.run(kWork);
      std::vector<Addr> path = w.run([&](Tx& tx) { return route(tx, src, dst, id); });
      if (!path.empty()) routes_[tid].push_back({id, src, dst, std::move(path)});
    }
  }

  std::string check(Stm& stm) override {
    std::size_t claimed = 0;
    for (const auto& per : routes_) {
      for (const Route& r : per) {
        if (r.cells.front() != r.src || r.cells.back() != r.dst) {
          return "route " + std::to_string(r.id) + " has wrong endpoints";
        }
        for (std::size_t k = 0; k < r.cells.size(); ++k) {
          if (stm.heap().load(r.cells[k]) != r.id) {
            return "route " + std::to_string(r.id) + " lost cell " +
                   std::to_string(r.cells[k]);
          }
          if (k > 0 && distance(r.cells[k - 1], r.cells[k]) != 1) {
            return "route " + std::to_string(r.id) + " is not contiguous";
          }
        }
        claimed += r.cells.size();
      }
    }
    std::size_t used = 0;
    for (Addr a = 0; a < kCells; ++a) used += stm.heap().load(a) != 0;
    if (used != claimed) {
      return std::to_string(used) + " cells claimed, routes account for " +
             std::to_string(claimed);
    }
    return {};
  }

 private:
  struct Route {
    Word id;
    Addr src, dst;
    std::vector<Addr> cells;
  };

  static std::size_t distance(Addr a, Addr b) {
    const auto ax = static_cast<std::int64_t>(a % kSide), ay = static_cast<std::int64_t>(a / kSide);
    const auto bx = static_cast<std::int64_t>(b % kSide), by = static_cast<std::int64_t>(b / kSide);
    return static_cast<std::size_t>(std::abs(ax - bx) + std::abs(ay - by));
  }

  static std::vector<Addr> route(Tx& tx, Addr src, Addr dst, Word id) {
    if (tx.read(src) != 0 || tx.read(dst) != 0) return {};
    // parent[c] = predecessor + 1, 0 = unseen.
    FrameRef parent = tx.push_frame(kCells);
    FrameRef queue = tx.push_frame(kCells);
    std::size_t head = 0, tail = 0;
    tx.store(queue, tail++, src);
    tx.store(parent, src, src + 1);
    bool found = false;
    while (head < tail && !found) {
      const Addr c = tx.load(queue, head++);
      const std::int64_t x = c % kSide, y = c / kSide;
      constexpr std::int64_t dx[] = {1, -1, 0, 0}, dy[] = {0, 0, 1, -1};
      for (int k = 0; k < 4; ++k) {
        const std::int64_t nx = x + dx[k], ny = y + dy[k];
        if (nx < 0 || ny < 0 || nx >= static_cast<std::int64_t>(kSide) ||
            ny >= static_cast<std::int64_t>(kSide)) {
          continue;
        }
        const Addr n = static_cast<Addr>(ny) * kSide + static_cast<Addr>(nx);
        if (tx.load(parent, n) != 0) continue;
        if (n != dst && tx.read(n) != 0) continue;
        tx.store(parent, n, c + 1);
        if (n == dst) {
          found = true;
          break;
        }
        tx.store(queue, tail++, n);
      }
    }
    std::vector<Addr> path;
    if (found) {
      for (Addr c = dst;; c = tx.load(parent, c) - 1) {
        path.push_back(c);
        if (c == src) break;
        if (path.size() > kCells) tx.raise_fault("route-cycle", "");
      }
      std::reverse(path.begin(), path.end());
      for (Addr c : path) tx.write(c, id);
    }
    tx.pop_frame();
    tx.pop_frame();
    return path;
  }

  std::vector<std::vector<Route>> routes_;
};

inline std::unique_ptr<KernelBase> make(Kernel k, std::size_t threads, std::size_t ops) {
  switch (k) {
    case Kernel::CounterArray: return std::make_unique<CounterArray>(threads);
    case Kernel::KvIndex: return std::make_unique<KvIndex>(threads);
    case Kernel::ListSet: return std::make_unique<ListSet>(threads, ops);
    case Kernel::GridRouter: return std::make_unique<GridRouter>(threads);
  }
  throw std::invalid_argument("bad kernel");
}

}  // namespace kernels

struct KernelOptions {
  std::size_t threads = 4;
  /// Defaults to the kernel's own default.
  std::optional<std::size_t> ops_per_thread;
  std::uint64_t seed = 1;
  /// Run on the deterministic scheduler (virtual time) instead of OS threads.
  bool deterministic = false;
  /// Duration of one local-work step, and under the deterministic scheduler
  /// also of one TM operation.
  Nanos step{1000};
  Config config{};
};

struct KernelRun {
  Kernel kernel = Kernel::CounterArray;
  Strategy strategy = Strategy::Eager;
  std::size_t threads = 0;
  std::uint64_t expected_commits = 0;
  std::vector<WorkerStats> per_thread;
  WorkerStats total;
  Nanos work_time{0};
  double wall_seconds = 0;
  std::string end_state_error;
  Measured measured;

  bool end_state_ok() const noexcept { return end_state_error.empty(); }
  bool commits_match() const noexcept { return total.commits == expected_commits; }
};

namespace detail {

inline Measured measure(const WorkerStats& t, Nanos step, Nanos work) {
  Measured m;
  if (t.leader_executions > 0) {
    m.tx_length = static_cast<double>(t.tm_ops) / static_cast<double>(t.leader_executions);
  }
  if (t.commits > 0) {
    m.rw_set = static_cast<double>(t.committed_reads + t.committed_writes) /
               static_cast<double>(t.commits);
    m.contention = static_cast<double>(t.aborts) / static_cast<double>(t.commits);
  }
  const double in_tx = static_cast<double>(t.tm_ops) * static_cast<double>(step.count());
  const double total = in_tx + static_cast<double>(work.count());
  if (total > 0) m.tx_time = in_tx / total;
  return m;
}

}  // namespace detail

/// Run one kernel to completion and check its end state.
inline KernelRun run_kernel(Kernel k, Strategy s, const KernelOptions& o = {}) {
  if (o.threads == 0) throw std::invalid_argument("threads must be positive");
  const std::size_t ops = o.ops_per_thread.value_or(kernel_info(k).default_ops_per_thread);
  auto kern = kernels::make(k, o.threads, ops);
  Config cfg = o.config;
  cfg.strategy = s;

  KernelRun r;
  r.kernel = k;
  r.strategy = s;
  r.threads = o.threads;
  r.expected_commits = static_cast<std::uint64_t>(ops) * o.threads;
  r.per_thread.resize(o.threads);
  std::vector<Nanos> work(o.threads, Nanos{0});
  std::vector<std::exception_ptr> errors(o.threads);

  auto body = [&](Stm& stm, std::size_t tid) {
    try {
      Worker w(stm);
      LocalWork lw(stm.scheduler(), o.step);
      kern->thread(stm, w, tid, ops, o.seed * 0x9e3779b97f4a7c15ULL + tid + 1, lw);
      r.per_thread[tid] = w.stats();
      work[tid] = lw.total();
    } catch (...) {
      errors[tid] = std::current_exception();
    }
  };
  auto finish = [&](Stm& stm) {
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
    for (const auto& st : r.per_thread) r.total += st;
    for (Nanos w : work) r.work_time += w;
    r.end_state_error = kern->check(stm);
    r.measured = detail::measure(r.total, o.step, r.work_time);
  };

  if (o.deterministic) {
    DeterministicScheduler::Options so;
    so.seed = o.seed;
    so.tick = o.step;
    DeterministicScheduler sched(so);
    Stm stm(kern->cells(), cfg, sched);
    kern->init(stm);
    for (std::size_t t = 0; t < o.threads; ++t) {
      sched.spawn_program([&, t] { body(stm, t); });
    }
    sched.run();
    r.wall_seconds = std::chrono::duration<double>(sched.now()).count();
    finish(stm);
    return r;
  }

  Stm stm(kern->cells(), cfg);
  kern->init(stm);
  const auto start = std::chrono::steady_clock::now();
  {
    std::vector<std::jthread> pool;
    pool.reserve(o.threads);
    for (std::size_t t = 0; t < o.threads; ++t) {
      pool.emplace_back([&, t] { body(stm, t); });
    }
  }
  r.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  finish(stm);
  return r;
}

struct SelfCheck {
  Kernel kernel = Kernel::CounterArray;
  Characteristics declared;
  Characteristics observed;
  KernelRun run;

  bool buckets_match() const noexcept { return declared == observed; }
  bool ok() const noexcept {
    return buckets_match() && run.end_state_ok() && run.commits_match();
  }
};

/// Measure a kernel's characteristics on four deterministic threads and
/// compare them with its declared buckets.
inline SelfCheck self_check(Kernel k, std::uint64_t seed = 1,
                            Strategy s = Strategy::Eager) {
  KernelOptions o;
  o.threads = 4;
  o.seed = seed;
  o.deterministic = true;
  SelfCheck c;
  c.kernel = k;
  c.declared = kernel_info(k).declared;
  c.run = run_kernel(k, s, o);
  c.observed = c.run.measured.buckets();
  return c;
}

}  // namespace sandtm::harness
