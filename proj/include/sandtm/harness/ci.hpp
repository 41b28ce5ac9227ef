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
#include <cstddef>
#include <span>
#include <stdexcept>

#include <boost/math/distributions/normal.hpp>

namespace sandtm::harness {

enum class CiDecision { Continue, Stop };

struct SampleSummary {
  std::size_t n = 0;
  double mean = 0;
  /// Sample standard deviation (n - 1 denominator).
  double stddev = 0;
};

inline SampleSummary summarize(std::span<const double> xs) {
  SampleSummary s;
  s.n = xs.size();
  if (s.n == 0) return s;
  double sum = 0;
  for (double x : xs) sum += x;
  s.mean = sum / static_cast<double>(s.n);
  if (s.n < 2) return s;
  double sq = 0;
  for (double x : xs) sq += (x - s.mean) * (x - s.mean);
  s.stddev = std::sqrt(sq / static_cast<double>(s.n - 1));
  return s;
}

/// Two-sided standard-normal critical value for `confidence`.
inline double normal_z(double confidence) {
  if (!(confidence > 0.0 && confidence < 1.0)) {
    throw std::invalid_argument("confidence must be in (0, 1)");
  }
  const boost::math::normal_distribution<double> n;
  return boost::math::quantile(n, 1.0 - (1.0 - confidence) / 2.0);
}

/// Repeat-until-tight rule: keep sampling while the confidence half-width
/// z * s / sqrt(n) is at least `threshold` * s. Needs two samples before it
/// can stop; zero spread stops immediately.
struct CiRule {
  double confidence = 0.90;
  double threshold = 0.05;

  double z() const { return normal_z(confidence); }

  double halfwidth(const SampleSummary& s) const {
    if (s.n < 2) return 0;
    return z() * s.stddev / std::sqrt(static_cast<double>(s.n));
  }

  CiDecision decide(std::span<const double> xs) const {
    if (!(threshold > 0.0)) throw std::invalid_argument("threshold must be positive");
    const SampleSummary s = summarize(xs);
    if (s.n < 2) return CiDecision::Continue;
    if (s.stddev == 0.0) return CiDecision::Stop;
    return halfwidth(s) < threshold * s.stddev ? CiDecision::Stop : CiDecision::Continue;
  }

  /// First prefix length of `xs` at which the rule stops, or 0 if it never does.
  std::size_t stop_index(std::span<const double> xs) const {
    for (std::size_t n = 2; n <= xs.size(); ++n) {
      if (decide(xs.first(n)) == CiDecision::Stop) return n;
    }
    return 0;
  }
};

}  // namespace sandtm::harness
