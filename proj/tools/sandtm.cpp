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

// sandtm command line: benchmark matrix, hazard scenarios, workload
// self-check and history checking.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "sandtm/harness/bench.hpp"
#include "sandtm/harness/hazards.hpp"
#include "sandtm/harness/workloads.hpp"
#include "sandtm/oracle/checker.hpp"
#include "sandtm/oracle/history_json.hpp"

namespace {

using namespace sandtm;
using namespace sandtm::harness;

constexpr int kOk = 0;
constexpr int kFailed = 1;
constexpr int kUsage = 2;

struct UsageError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

template <class T, class Parse>
std::vector<T> parse_list(const std::vector<std::string>& names, Parse parse) {
  std::vector<T> out;
  for (const auto& n : names) {
    try {
      out.push_back(parse(n));
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
  }
  return out;
}

std::string us(std::optional<Nanos> d) {
  return d ? std::to_string(d->count() / 1000) + "us" : "-";
}

int cmd_bench(const std::vector<std::string>& workloads,
              const std::vector<std::string>& strategies,
              const std::vector<std::size_t>& threads, double confidence,
              double threshold, std::size_t max_reps, std::uint64_t seed,
              const std::string& format, const std::string& out, std::size_t ops,
              bool verbose) {
  BenchConfig cfg;
  if (!workloads.empty()) cfg.workloads = parse_list<Kernel>(workloads, parse_kernel);
  if (!strategies.empty()) cfg.strategies = parse_list<Strategy>(strategies, parse_strategy);
  if (!threads.empty()) cfg.threads = threads;
  for (std::size_t t : cfg.threads) {
    if (t == 0) throw UsageError("thread counts must be positive");
  }
  if (!(confidence > 0 && confidence < 1)) throw UsageError("--confidence must be in (0, 1)");
  if (!(threshold > 0)) throw UsageError("--ci-threshold must be positive");
  if (max_reps == 0) throw UsageError("--max-reps must be positive");
  cfg.ci = {confidence, threshold};
  cfg.max_reps = max_reps;
  cfg.seed = seed;
  if (ops > 0) cfg.ops_per_thread = ops;
  Format fmt;
  try {
    fmt = parse_format(format);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  if (verbose) cfg.progress = [](const std::string& line) { std::cerr << line << "\n"; };

  RunReport report;
  try {
    report = run_benchmark_matrix(cfg);
  } catch (const CorrectnessFailure& e) {
    std::cerr << "correctness failure: " << e.what() << "\n";
    return kFailed;
  }
  for (const auto& w : report.warnings) std::cerr << "warning: " << w << "\n";
  const std::string text = emit_report(report, fmt);
  if (out.empty() || out == "-") {
    std::cout << text;
  } else {
    std::ofstream f(out);
    if (!f) {
      std::cerr << "cannot write " << out << "\n";
      return kFailed;
    }
    f << text;
  }
  return kOk;
}

int cmd_hazard(const std::string& name, const std::string& strategy, std::uint64_t seed,
               bool trace) {
  if (!is_hazard_name(name)) throw UsageError("unknown hazard: " + name);
  Strategy s;
  try {
    s = parse_strategy(strategy);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  const HazardOutcome o = run_hazard_scenario(name, s, seed);
  std::cout << "hazard " << o.name << " strategy " << to_string(o.strategy) << " seed "
            << o.seed << "\n"
            << "  contained: " << (o.contained ? "yes" : "no") << "\n"
            << "  inconsistent view reached: " << (o.hazard_seen ? "yes" : "no") << "\n"
            << "  mechanism: " << (o.mechanism ? to_string(*o.mechanism) : "-") << "\n"
            << "  doom latency: " << us(o.doom_latency) << "\n"
            << "  helper rounds: "
            << (o.helper_rounds ? std::to_string(*o.helper_rounds) : "-") << "\n"
            << "  validations on path: "
            << (o.validations_on_path ? std::to_string(*o.validations_on_path) : "-")
            << "\n"
            << "  propagated fault: " << (o.propagated_fault ? "yes" : "no") << "\n"
            << "  guard corruption: " << (o.guard_corruption ? "yes" : "no") << "\n"
            << "  serializable: " << (o.serializable ? "yes" : "no") << "\n"
            << "  victim: commits " << o.victim.commits << " aborts " << o.victim.aborts
            << " full_validations " << o.victim.full_validations << "\n";
  if (!o.error.empty()) std::cout << "  error: " << o.error << "\n";
  if (trace || !o.contained) {
    std::cout << "trace:\n";
    for (const auto& line : o.state.trace) std::cout << "  " << line << "\n";
  }
  return o.contained ? kOk : kFailed;
}

int cmd_selfcheck(const std::string& workload, const std::string& strategy,
                  std::uint64_t seed) {
  std::vector<Kernel> kernels;
  if (workload == "all") {
    kernels.assign(kAllKernels.begin(), kAllKernels.end());
  } else {
    kernels = parse_list<Kernel>({workload}, parse_kernel);
  }
  Strategy s;
  try {
    s = parse_strategy(strategy);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  bool all_ok = true;
  for (Kernel k : kernels) {
    const SelfCheck c = self_check(k, seed, s);
    const Measured& m = c.run.measured;
    std::printf(
        "%-14s tx_length %.1f  rw_set %.1f  tx_time %.3f  contention %.3f\n"
        "%-14s observed %s, declared %s: %s\n",
        std::string(to_string(k)).c_str(), m.tx_length, m.rw_set, m.tx_time, m.contention,
        "", c.observed.describe().c_str(), c.declared.describe().c_str(),
        c.buckets_match() ? "match" : "MISMATCH");
    if (!c.run.end_state_ok()) {
      std::printf("%-14s end state: %s\n", "", c.run.end_state_error.c_str());
    }
    if (!c.run.commits_match()) {
      std::printf("%-14s commits %llu, expected %llu\n", "",
                  static_cast<unsigned long long>(c.run.total.commits),
                  static_cast<unsigned long long>(c.run.expected_commits));
    }
    all_ok = all_ok && c.ok();
  }
  return all_ok ? kOk : kFailed;
}

int cmd_check(const std::string& path) {
  History h;
  try {
    h = oracle::load_history(path);
  } catch (const std::exception& e) {
    std::cerr << e.what() << "\n";
    return kUsage;
  }
  const oracle::CheckResult r = oracle::check_serializable(h);
  if (r.ok()) {
    std::cout << "serializable: " << h.commits.size() << " committed transactions\n";
    return kOk;
  }
  std::cout << "NOT serializable: " << r.violation->describe() << "\n";
  return kFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sandtm: sandboxed lazy-validation STM toolkit"};
  app.require_subcommand(1);

  std::vector<std::string> workloads, strategies;
  std::vector<std::size_t> threads;
  double confidence = 0.90, threshold = 0.05;
  std::size_t max_reps = 20, ops = 0;
  std::uint64_t seed = 1;
  std::string format = "csv", out;
  bool verbose = false;
  auto* bench = app.add_subcommand("bench", "Run the benchmark matrix on real threads");
  bench->add_option("--workloads", workloads, "Workloads (default: all)")->delimiter(',');
  bench->add_option("--strategies", strategies, "Strategies (default: all)")->delimiter(',');
  bench->add_option("--threads", threads, "Thread counts (default: 1,2,4,8)")->delimiter(',');
  bench->add_option("--confidence", confidence, "CI confidence level");
  bench->add_option("--ci-threshold", threshold, "Stop when half-width < threshold x stddev");
  bench->add_option("--max-reps", max_reps, "Repetition cap per cell");
  bench->add_option("--seed", seed, "Seed");
  bench->add_option("--format", format, "csv, json or markdown");
  bench->add_option("--out", out, "Output file (default: stdout)");
  bench->add_option("--ops", ops, "Operations per thread (default: per workload)");
  bench->add_flag("--verbose", verbose, "Print progress to stderr");

  std::string hz_name, hz_strategy = "lazy-timer";
  std::uint64_t hz_seed = 1;
  bool hz_trace = false;
  auto* hazard = app.add_subcommand("hazard", "Run one scripted hazard scenario");
  hazard->add_option("--name", hz_name, "Scenario name")->required();
  hazard->add_option("--strategy", hz_strategy, "Strategy");
  hazard->add_option("--seed", hz_seed, "Seed");
  hazard->add_flag("--trace", hz_trace, "Print the event trace");

  std::string sc_workload = "all", sc_strategy = "eager";
  std::uint64_t sc_seed = 1;
  auto* selfcheck = app.add_subcommand("selfcheck", "Measure workload characteristics");
  selfcheck->add_option("--workload", sc_workload, "Workload or 'all'");
  selfcheck->add_option("--strategy", sc_strategy, "Strategy");
  selfcheck->add_option("--seed", sc_seed, "Seed");

  std::string history;
  auto* check = app.add_subcommand("check", "Check a recorded history for serializability");
  check->add_option("--history", history, "History JSON file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    if (*bench) {
      return cmd_bench(workloads, strategies, threads, confidence, threshold, max_reps, seed,
                       format, out, ops, verbose);
    }
    if (*hazard) return cmd_hazard(hz_name, hz_strategy, hz_seed, hz_trace);
    if (*selfcheck) return cmd_selfcheck(sc_workload, sc_strategy, sc_seed);
    if (*check) return cmd_check(history);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailed;
  }
  return kUsage;
}
