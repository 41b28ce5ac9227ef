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

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace sandtm::harness {

enum class Format { Csv, Json, Markdown };

constexpr std::string_view to_string(Format f) {
  switch (f) {
    case Format::Csv: return "csv";
    case Format::Json: return "json";
    case Format::Markdown: return "markdown";
  }
  return "?";
}

inline Format parse_format(std::string_view s) {
  if (s == "csv") return Format::Csv;
  if (s == "json") return Format::Json;
  if (s == "markdown" || s == "md") return Format::Markdown;
  throw std::invalid_argument("unknown format: " + std::string(s));
}

/// One (workload, strategy, threads) cell. Counters are totals over all
/// repetitions of the cell.
struct CellReport {
  std::string workload;
  std::string strategy;
  std::uint64_t threads = 0;
  double mean_s = 0;
  double ci_halfwidth_s = 0;
  std::uint64_t reps = 0;
  std::uint64_t commits = 0;
  std::uint64_t aborts = 0;
  std::uint64_t full_validations = 0;
  std::uint64_t comparisons = 0;
  std::uint64_t leader_execs = 0;
  std::uint64_t helper_execs = 0;
  // Not in the CSV.
  std::uint64_t helper_validations = 0;
  std::uint64_t dooms = 0;
  std::uint64_t beacon_fires = 0;

  friend bool operator==(const CellReport&, const CellReport&) = default;
};

struct RunReport {
  double confidence = 0.90;
  double ci_threshold = 0.05;
  double z = 0;
  std::string ci_method = "normal";
  std::uint64_t seed = 0;
  std::uint64_t max_reps = 0;
  unsigned hardware_threads = 0;
  std::vector<std::string> warnings;
  std::vector<CellReport> cells;
};

inline constexpr std::string_view kCsvHeader =
    "workload,strategy,threads,mean_s,ci_halfwidth_s,reps,commits,aborts,"
    "full_validations,comparisons,leader_execs,helper_execs";

namespace detail {

/// Seconds at microsecond precision.
inline std::string seconds(double s) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", s);
  return buf;
}

inline double round_us(double s) { return std::round(s * 1e6) / 1e6; }

inline std::vector<std::string> split(std::string_view line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

inline std::uint64_t to_u64(const std::string& s) {
  std::size_t used = 0;
  const auto v = std::stoull(s, &used);
  if (used != s.size()) throw std::invalid_argument("bad integer: " + s);
  return v;
}

inline double to_double(const std::string& s) {
  std::size_t used = 0;
  const double v = std::stod(s, &used);
  if (used != s.size()) throw std::invalid_argument("bad number: " + s);
  return v;
}

inline std::vector<std::string> csv_fields(const CellReport& c) {
  return {c.workload,
          c.strategy,
          std::to_string(c.threads),
          seconds(c.mean_s),
          seconds(c.ci_halfwidth_s),
          std::to_string(c.reps),
          std::to_string(c.commits),
          std::to_string(c.aborts),
          std::to_string(c.full_validations),
          std::to_string(c.comparisons),
          std::to_string(c.leader_execs),
          std::to_string(c.helper_execs)};
}

inline std::string emit_csv(const RunReport& r) {
  std::string out(kCsvHeader);
  out += '\n';
  for (const CellReport& c : r.cells) {
    const auto f = csv_fields(c);
    for (std::size_t i = 0; i < f.size(); ++i) {
      if (i > 0) out += ',';
      out += f[i];
    }
    out += '\n';
  }
  return out;
}

inline nlohmann::ordered_json cell_json(const CellReport& c) {
  nlohmann::ordered_json j;
  j["workload"] = c.workload;
  j["strategy"] = c.strategy;
  j["threads"] = c.threads;
  j["mean_s"] = round_us(c.mean_s);
  j["ci_halfwidth_s"] = round_us(c.ci_halfwidth_s);
  j["reps"] = c.reps;
  j["commits"] = c.commits;
  j["aborts"] = c.aborts;
  j["full_validations"] = c.full_validations;
  j["comparisons"] = c.comparisons;
  j["leader_execs"] = c.leader_execs;
  j["helper_execs"] = c.helper_execs;
  j["helper_validations"] = c.helper_validations;
  j["dooms"] = c.dooms;
  j["beacon_fires"] = c.beacon_fires;
  return j;
}

inline std::string emit_json(const RunReport& r) {
  nlohmann::ordered_json j;
  j["ci"] = {{"method", r.ci_method},
             {"confidence", r.confidence},
             {"threshold", r.ci_threshold},
             {"z", r.z}};
  j["seed"] = r.seed;
  j["max_reps"] = r.max_reps;
  j["hardware_threads"] = r.hardware_threads;
  j["warnings"] = r.warnings;
  j["cells"] = nlohmann::ordered_json::array();
  for (const CellReport& c : r.cells) j["cells"].push_back(cell_json(c));
  return j.dump(2) + "\n";
}

inline std::string emit_markdown(const RunReport& r) {
  std::ostringstream o;
  o << "# sandtm benchmark report\n\n";
  o << "- CI: " << r.ci_method << " approximation, confidence " << r.confidence
    << ", threshold " << r.ci_threshold << " x stddev, z = " << r.z << "\n";
  o << "- seed " << r.seed << ", max repetitions " << r.max_reps << ", hardware threads "
    << r.hardware_threads << "\n";
  for (const auto& w : r.warnings) o << "- warning: " << w << "\n";
  o << "\n|";
  for (const auto& h : split(kCsvHeader, ',')) o << ' ' << h << " |";
  o << "\n|";
  for (std::size_t i = 0; i < split(kCsvHeader, ',').size(); ++i) o << " --- |";
  o << "\n";
  for (const CellReport& c : r.cells) {
    o << "|";
    for (const auto& f : csv_fields(c)) o << ' ' << f << " |";
    o << "\n";
  }
  return o.str();
}

}  // namespace detail

/// Deterministic serialization of `r`.
inline std::string emit_report(const RunReport& r, Format f) {
  switch (f) {
    case Format::Csv: return detail::emit_csv(r);
    case Format::Json: return detail::emit_json(r);
    case Format::Markdown: return detail::emit_markdown(r);
  }
  throw std::invalid_argument("bad format");
}

/// Parse CSV emitted by `emit_report`. Only the CSV columns are restored.
inline std::vector<CellReport> parse_csv_cells(std::string_view text) {
  std::vector<CellReport> cells;
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line) || detail::split(line, ',') != detail::split(kCsvHeader, ',')) {
    throw std::invalid_argument("unexpected CSV header");
  }
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    const auto f = detail::split(line, ',');
    if (f.size() != 12) throw std::invalid_argument("CSV row has wrong arity: " + line);
    CellReport c;
    c.workload = f[0];
    c.strategy = f[1];
    c.threads = detail::to_u64(f[2]);
    c.mean_s = detail::to_double(f[3]);
    c.ci_halfwidth_s = detail::to_double(f[4]);
    c.reps = detail::to_u64(f[5]);
    c.commits = detail::to_u64(f[6]);
    c.aborts = detail::to_u64(f[7]);
    c.full_validations = detail::to_u64(f[8]);
    c.comparisons = detail::to_u64(f[9]);
    c.leader_execs = detail::to_u64(f[10]);
    c.helper_execs = detail::to_u64(f[11]);
    cells.push_back(std::move(c));
  }
  return cells;
}

inline RunReport parse_json_report(std::string_view text) {
  const auto j = nlohmann::json::parse(text);
  RunReport r;
  const auto& ci = j.at("ci");
  r.ci_method = ci.at("method").get<std::string>();
  r.confidence = ci.at("confidence").get<double>();
  r.ci_threshold = ci.at("threshold").get<double>();
  r.z = ci.at("z").get<double>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.max_reps = j.at("max_reps").get<std::uint64_t>();
  r.hardware_threads = j.at("hardware_threads").get<unsigned>();
  r.warnings = j.at("warnings").get<std::vector<std::string>>();
  for (const auto& c : j.at("cells")) {
    CellReport x;
    x.workload = c.at("workload").get<std::string>();
    x.strategy = c.at("strategy").get<std::string>();
    x.threads = c.at("threads").get<std::uint64_t>();
    x.mean_s = c.at("mean_s").get<double>();
    x.ci_halfwidth_s = c.at("ci_halfwidth_s").get<double>();
    x.reps = c.at("reps").get<std::uint64_t>();
    x.commits = c.at("commits").get<std::uint64_t>();
    x.aborts = c.at("aborts").get<std::uint64_t>();
    x.full_validations = c.at("full_validations").get<std::uint64_t>();
    x.comparisons = c.at("comparisons").get<std::uint64_t>();
    x.leader_execs = c.at("leader_execs").get<std::uint64_t>();
    x.helper_execs = c.at("helper_execs").get<std::uint64_t>();
    x.helper_validations = c.value("helper_validations", std::uint64_t{0});
    x.dooms = c.value("dooms", std::uint64_t{0});
    x.beacon_fires = c.value("beacon_fires", std::uint64_t{0});
    r.cells.push_back(std::move(x));
  }
  return r;
}

}  // namespace sandtm::harness
