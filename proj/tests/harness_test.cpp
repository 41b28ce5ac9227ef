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

#include <gtest/gtest.h>

#include <cmath>
#include <ostream>
#include <random>

#include "sandtm/harness/bench.hpp"
#include "sandtm/harness/hazards.hpp"
#include "test_support.hpp"

namespace sandtm::harness {

void PrintTo(Kernel k, std::ostream* os) { *os << to_string(k); }

namespace {

// ---- CI rule ----------------------------------------------------------------

// Standard-normal quantile by bisection on erf, independent of boost.
double z_by_bisection(double confidence) {
  const double target = 1.0 - (1.0 - confidence) / 2.0;
  double lo = 0, hi = 10;
  for (int i = 0; i < 200; ++i) {
    const double mid = (lo + hi) / 2;
    const double cdf = 0.5 * (1.0 + std::erf(mid / std::sqrt(2.0)));
    (cdf < target ? lo : hi) = mid;
  }
  return (lo + hi) / 2;
}

TEST(CiRule, CriticalValueMatchesIndependentQuantile) {
  for (double c : {0.80, 0.90, 0.95, 0.99}) {
    EXPECT_NEAR(normal_z(c), z_by_bisection(c), 1e-9) << c;
  }
  EXPECT_NEAR(normal_z(0.90), 1.6448536, 1e-6);
  EXPECT_THROW(normal_z(1.0), std::invalid_argument);
}

TEST(CiRule, IdenticalSamplesStopAtTwo) {
  const CiRule rule;
  const std::vector<double> xs(10, 0.25);
  EXPECT_EQ(rule.decide(std::span(xs).first(1)), CiDecision::Continue);
  EXPECT_EQ(rule.stop_index(xs), 2u);
}

TEST(CiRule, TwoWildlyDifferentSamplesContinue) {
  const CiRule rule;
  const std::vector<double> xs{0.001, 1000.0};
  EXPECT_EQ(rule.decide(xs), CiDecision::Continue);
}

TEST(CiRule, StopIndexMatchesClosedForm) {
  // With s > 0 the rule z s / sqrt(n) < t s reduces to n > (z / t)^2.
  const struct {
    double confidence, threshold;
  } params[] = {{0.90, 0.05}, {0.90, 0.5}, {0.95, 0.3}, {0.80, 0.4}, {0.99, 0.6}};
  for (const auto& p : params) {
    const CiRule rule{p.confidence, p.threshold};
    const double z = z_by_bisection(p.confidence);
    const auto want = static_cast<std::size_t>(std::floor((z / p.threshold) * (z / p.threshold))) + 1;
    std::vector<double> xs;
    std::mt19937_64 rng(7);
    std::normal_distribution<double> d(1.0, 0.1);
    for (std::size_t i = 0; i < want + 10; ++i) xs.push_back(d(rng));
    EXPECT_EQ(rule.stop_index(xs), std::max<std::size_t>(want, 2))
        << p.confidence << " " << p.threshold;
  }
}

// ---- reports ----------------------------------------------------------------

CellReport sample_cell(int i) {
  CellReport c;
  c.workload = "list-set";
  c.strategy = "lazy-timer";
  c.threads = 2 + i;
  c.mean_s = 0.0123456789 * (i + 1);
  c.ci_halfwidth_s = 0.000987654 * (i + 1);
  c.reps = 12;
  c.commits = 1200;
  c.aborts = 37 + i;
  c.full_validations = 1237;
  c.comparisons = 40000;
  c.leader_execs = 1237 + i;
  c.helper_execs = 3;
  return c;
}

TEST(Report, EmptyReportIsHeaderOnlyCsv) {
  EXPECT_EQ(emit_report(RunReport{}, Format::Csv), std::string(kCsvHeader) + "\n");
}

TEST(Report, OneCellIsOneRowInColumnOrder) {
  RunReport r;
  r.cells.push_back(sample_cell(0));
  const std::string csv = emit_report(r, Format::Csv);
  EXPECT_EQ(csv, std::string(kCsvHeader) +
                     "\nlist-set,lazy-timer,2,0.012346,0.000988,12,1200,37,1237,40000,1237,3\n");
}

TEST(Report, JsonAndCsvRoundTripAtMicrosecondPrecision) {
  RunReport r;
  r.z = normal_z(0.9);
  r.seed = 42;
  r.warnings.push_back("oversubscribed");
  for (int i = 0; i < 5; ++i) r.cells.push_back(sample_cell(i));

  const std::string csv = emit_report(r, Format::Csv);
  RunReport from_csv = r;
  from_csv.cells = parse_csv_cells(csv);
  const std::string json = emit_report(from_csv, Format::Json);
  const RunReport back = parse_json_report(json);
  EXPECT_EQ(back.seed, 42u);
  EXPECT_EQ(back.warnings, r.warnings);
  EXPECT_EQ(emit_report(back, Format::Csv), csv);
  for (std::size_t i = 0; i < r.cells.size(); ++i) {
    EXPECT_NEAR(back.cells[i].mean_s, r.cells[i].mean_s, 0.5e-6);
    EXPECT_EQ(back.cells[i].aborts, r.cells[i].aborts);
  }
  EXPECT_EQ(emit_report(parse_json_report(emit_report(r, Format::Json)), Format::Csv), csv);
}

TEST(Report, MarkdownIsDeterministicAndTabular) {
  RunReport r;
  r.cells.push_back(sample_cell(1));
  const std::string a = emit_report(r, Format::Markdown);
  EXPECT_EQ(a, emit_report(r, Format::Markdown));
  EXPECT_NE(a.find("| workload | strategy | threads |"), std::string::npos);
  EXPECT_NE(a.find("| list-set | lazy-timer | 3 |"), std::string::npos);
  EXPECT_NE(a.find("normal"), std::string::npos);
}

TEST(Report, MalformedCsvIsRejected) {
  EXPECT_THROW(parse_csv_cells("a,b\n"), std::invalid_argument);
  EXPECT_THROW(parse_csv_cells(std::string(kCsvHeader) + "\nx,y,1\n"), std::invalid_argument);
  EXPECT_EQ(parse_format("md"), Format::Markdown);
  EXPECT_THROW(parse_format("xml"), std::invalid_argument);
}

// ---- workloads --------------------------------------------------------------

class KernelTest : public ::testing::TestWithParam<Kernel> {};

TEST_P(KernelTest, SelfCheckBucketsMatchDeclaration) {
  const SelfCheck c = self_check(GetParam());
  EXPECT_TRUE(c.ok()) << c.observed.describe() << " vs " << c.declared.describe() << " "
                      << c.run.end_state_error;
}

TEST_P(KernelTest, EndStateCorrectUnderEveryStrategyDeterministic) {
  for (Strategy s : kAllStrategies) {
    KernelOptions o;
    o.threads = 3;
    o.seed = 5;
    o.deterministic = true;
    o.ops_per_thread = GetParam() == Kernel::GridRouter ? 3 : 40;
    const KernelRun r = run_kernel(GetParam(), s, o);
    EXPECT_TRUE(r.end_state_ok()) << to_string(s) << ": " << r.end_state_error;
    EXPECT_TRUE(r.commits_match()) << to_string(s);
    EXPECT_EQ(r.total.commits + r.total.aborts, r.total.leader_executions);
  }
}

TEST_P(KernelTest, EndStateCorrectOnRealThreads) {
  for (Strategy s : kAllStrategies) {
    KernelOptions o;
    o.threads = 2;
    o.ops_per_thread = GetParam() == Kernel::GridRouter ? 3 : 50;
    EXPECT_NO_THROW(verify_run(run_kernel(GetParam(), s, o))) << to_string(s);
  }
}

TEST_P(KernelTest, DeterministicRunsAreReproducible) {
  KernelOptions o;
  o.deterministic = true;
  o.seed = 3;
  o.ops_per_thread = GetParam() == Kernel::GridRouter ? 2 : 20;
  const KernelRun a = run_kernel(GetParam(), Strategy::LazyHelperReadSet, o);
  const KernelRun b = run_kernel(GetParam(), Strategy::LazyHelperReadSet, o);
  EXPECT_EQ(a.total.aborts, b.total.aborts);
  EXPECT_EQ(a.total.tm_ops, b.total.tm_ops);
  EXPECT_EQ(a.wall_seconds, b.wall_seconds);
}

INSTANTIATE_TEST_SUITE_P(All, KernelTest, ::testing::ValuesIn(kAllKernels),
                         [](const auto& info) {
                           std::string n(to_string(info.param));
                           std::erase(n, '-');
                           return n;
                         });

TEST(Workloads, NamesRoundTrip) {
  for (Kernel k : kAllKernels) EXPECT_EQ(parse_kernel(to_string(k)), k);
  EXPECT_THROW(parse_kernel("genome"), std::invalid_argument);
}

TEST(Workloads, BucketBoundaries) {
  Measured m{64, 8, 0.349, 0.099};
  EXPECT_EQ(m.buckets().describe(), "Short/Small/Low/Low");
  m = {65, 9, 0.35, 0.1};
  EXPECT_EQ(m.buckets().describe(), "Medium/Medium/Medium/Medium");
  m = {512, 128, 0.651, 0.5};
  EXPECT_EQ(m.buckets().describe(), "Long/Large/High/High");
}

// ---- bench ------------------------------------------------------------------

TEST(Bench, SingleThreadBodyExecutionsPerCommit) {
  BenchConfig cfg;
  cfg.workloads = {Kernel::CounterArray, Kernel::KvIndex};
  cfg.threads = {1};
  cfg.max_reps = 2;
  cfg.ops_per_thread = 50;
  const RunReport r = run_benchmark_matrix(cfg);
  ASSERT_EQ(r.cells.size(), 8u);
  for (const CellReport& c : r.cells) {
    const auto total = c.leader_execs + c.helper_execs;
    if (c.strategy == "eager" || c.strategy == "lazy-timer") {
      EXPECT_EQ(total, c.commits) << c.workload << " " << c.strategy;
    }
    if (c.strategy == "lazy-helper-clone") {
      EXPECT_GE(total, 2 * c.commits) << c.workload;
    }
  }
}

TEST(Bench, RepetitionsStopAtRuleOrCap) {
  BenchConfig cfg;
  cfg.workloads = {Kernel::CounterArray};
  cfg.strategies = {Strategy::Eager};
  cfg.threads = {1, 2};
  cfg.ops_per_thread = 20;
  cfg.max_reps = 4;
  RunReport r = run_benchmark_matrix(cfg);
  for (const CellReport& c : r.cells) {
    EXPECT_EQ(c.reps, 4u);
    EXPECT_EQ(c.commits, 20u * c.threads * c.reps);
  }
  // (z / t)^2 < 1 for t = 2, so the rule stops at its minimum.
  cfg.ci.threshold = 2.0;
  cfg.max_reps = 50;
  r = run_benchmark_matrix(cfg);
  for (const CellReport& c : r.cells) EXPECT_EQ(c.reps, 2u);
  EXPECT_NEAR(r.z, z_by_bisection(0.90), 1e-9);
}

TEST(Bench, WarnsWhenOversubscribed) {
  BenchConfig cfg;
  cfg.workloads = {Kernel::CounterArray};
  cfg.strategies = {Strategy::Eager};
  cfg.threads = {std::thread::hardware_concurrency() + 1};
  cfg.ops_per_thread = 5;
  cfg.max_reps = 1;
  EXPECT_EQ(run_benchmark_matrix(cfg).warnings.size(), 1u);
}

// ---- hazards ----------------------------------------------------------------

TEST(Hazards, EveryScenarioIsContainedUnderEveryStrategy) {
  for (auto name : kHazardNames) {
    for (Strategy s : kAllStrategies) {
      for (std::uint64_t seed = 1; seed <= 4; ++seed) {
        const HazardOutcome o = run_hazard_scenario(name, s, seed);
        EXPECT_TRUE(o.contained) << name << " " << to_string(s) << " seed " << seed << ": "
                                 << o.error;
        EXPECT_FALSE(o.propagated_fault);
        EXPECT_FALSE(o.guard_corruption);
        EXPECT_TRUE(o.serializable);
      }
    }
  }
}

TEST(Hazards, ScriptedScenariosReachTheHazardUnderLazyValidation) {
  for (Strategy s : {Strategy::LazyTimer, Strategy::LazyHelperReadSet}) {
    for (auto name : kHazardNames) {
      EXPECT_TRUE(run_hazard_scenario(name, s, 1).hazard_seen) << name << " " << to_string(s);
    }
  }
  EXPECT_FALSE(run_hazard_scenario("doomed-loop", Strategy::Eager, 1).hazard_seen);
}

TEST(Hazards, PrivatizationFaultAbortsWithoutValidation) {
  for (Strategy s : kLazyStrategies) {
    const HazardOutcome o = run_hazard_scenario("privatization-fault", s, 1);
    ASSERT_TRUE(o.mechanism.has_value()) << to_string(s);
    EXPECT_EQ(*o.mechanism, AbortReason::StaleFault) << to_string(s);
    EXPECT_EQ(o.validations_on_path, 0u) << to_string(s);
  }
}

TEST(Hazards, StrayStackWriteHitsGuard) {
  for (Strategy s : {Strategy::LazyTimer, Strategy::LazyHelperReadSet}) {
    const HazardOutcome o = run_hazard_scenario("stray-stack-write", s, 1);
    EXPECT_EQ(o.mechanism, AbortReason::GuardHit);
    EXPECT_EQ(o.validations_on_path, 0u);
    EXPECT_GE(o.victim.guard_hits, 1u);
  }
}

TEST(Hazards, DoomedLoopExitsWithinTwoBeaconPeriods) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const HazardOutcome o = run_hazard_scenario("doomed-loop", Strategy::LazyTimer, seed);
    ASSERT_TRUE(o.doom_latency.has_value());
    EXPECT_LE(*o.doom_latency, Nanos{20'000'000}) << seed;
    EXPECT_EQ(o.mechanism, AbortReason::Beacon);
  }
}

TEST(Hazards, OverAllocationValidatesOnceBeforeAnyGrant) {
  for (Strategy s : {Strategy::LazyTimer, Strategy::LazyHelperReadSet}) {
    const HazardOutcome o = run_hazard_scenario("over-allocation", s, 1);
    EXPECT_EQ(o.mechanism, AbortReason::Budget);
    EXPECT_EQ(o.validations_on_path, 1u);
    EXPECT_EQ(o.state.granted_after_big, o.state.granted_before_big);
    EXPECT_EQ(o.state.leaked_blocks, 0u);
  }
}

TEST(Hazards, DoomedLoopExplorationIsContained) {
  const HazardExploration ex = explore_hazard("doomed-loop", Strategy::LazyTimer);
  EXPECT_TRUE(ex.all_contained());
  EXPECT_GT(ex.hazardous_runs, 0u);
  EXPECT_LE(ex.max_program_yields, 20u);
}

TEST(Hazards, CloneHelperReadsMatchLeader) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    EXPECT_TRUE(clone_equivalence_trial(seed).identical()) << seed;
  }
}

TEST(Hazards, UnknownNameIsRejected) {
  EXPECT_FALSE(is_hazard_name("buffer-overflow"));
  EXPECT_THROW(make_scenario("buffer-overflow", Strategy::Eager, 1), std::invalid_argument);
}

}  // namespace
}  // namespace sandtm::harness
