// Copyright 2026 The qborn Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

/**
 * @file data_metrics.hpp
 * @brief Bars-and-stripes data, empirical distributions and quality metrics.
 */

#ifndef QBORN_DATA_METRICS_HPP
#define QBORN_DATA_METRICS_HPP

#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "qborn/distribution.hpp"
#include "qborn/errors.hpp"

namespace qborn {

/// An n x m binary image flattened row-major: pixel (r, c) is bit r*m + c + 1.
struct BasSpec {
  int rows = 2;
  int cols = 2;

  int num_bits() const { return rows * cols; }
  void validate() const {
    if (rows < 1 || cols < 1) throw ParameterError("BAS dimensions must be positive");
    if (rows * cols > DiscreteDistribution::kMaxBits) throw CapacityError("BAS image has too many pixels");
  }
};

/// All bar images (constant columns) and stripe images (constant rows).
/// The blank and full images belong to both families and appear once.
inline std::set<Bitstring> bas_patterns(const BasSpec& spec) {
  spec.validate();
  const int n = spec.rows, m = spec.cols, bits = spec.num_bits();
  auto pixel_mask = [&](int r, int c) { return Bitstring{1} << (bits - 1 - (r * m + c)); };
  std::set<Bitstring> out;
  for (Bitstring colset = 0; colset < (Bitstring{1} << m); ++colset) {
    Bitstring img = 0;
    for (int c = 0; c < m; ++c) {
      if ((colset >> c) & 1U) {
        for (int r = 0; r < n; ++r) img |= pixel_mask(r, c);
      }
    }
    out.insert(img);
  }
  for (Bitstring rowset = 0; rowset < (Bitstring{1} << n); ++rowset) {
    Bitstring img = 0;
    for (int r = 0; r < n; ++r) {
      if ((rowset >> r) & 1U) {
        for (int c = 0; c < m; ++c) img |= pixel_mask(r, c);
      }
    }
    out.insert(img);
  }
  return out;
}

/// Uniform mass on the valid BAS images.
inline DiscreteDistribution bas_distribution(const BasSpec& spec) {
  const auto patterns = bas_patterns(spec);
  std::vector<double> mass(std::size_t{1} << spec.num_bits(), 0.0);
  const double w = 1.0 / static_cast<double>(patterns.size());
  for (Bitstring x : patterns) mass[x] = w;
  return {spec.num_bits(), std::move(mass)};
}

/// Normalized counts of `samples`.
inline DiscreteDistribution empirical_distribution(std::span<const Bitstring> samples, int num_bits) {
  if (samples.empty()) throw ParameterError("cannot build an empirical distribution from zero samples");
  std::vector<double> counts(std::size_t{1} << num_bits, 0.0);
  for (Bitstring x : samples) {
    if (x >= counts.size()) throw ShapeError("sample has more bits than the distribution");
    counts[x] += 1.0;
  }
  const double inv = 1.0 / static_cast<double>(samples.size());
  for (double& c : counts) c *= inv;
  return {num_bits, std::move(counts)};
}

/// Total variation. With `normalized` the 1/2 factor is applied (range [0, 1]);
/// without it the plain L1 distance is returned (range [0, 2]).
inline double total_variation(const DiscreteDistribution& p, const DiscreteDistribution& q, bool normalized = true) {
  if (p.num_bits() != q.num_bits()) throw ShapeError("total variation needs distributions of equal width");
  double s = 0;
  for (std::size_t x = 0; x < p.size(); ++x) s += std::abs(p[x] - q[x]);
  return normalized ? 0.5 * s : s;
}

struct ModeCoverage {
  std::vector<Bitstring> covered;
  std::vector<Bitstring> missed;
  double invalid_mass = 0.0;

  int num_covered() const { return static_cast<int>(covered.size()); }
  int num_modes() const { return static_cast<int>(covered.size() + missed.size()); }
};

/// A target mode x counts as covered when p(x) >= threshold * target(x).
/// Invalid mass is the model mass outside the target support.
inline ModeCoverage mode_coverage(const DiscreteDistribution& p, const DiscreteDistribution& target,
                                  double threshold = 0.5) {
  if (p.num_bits() != target.num_bits()) throw ShapeError("mode coverage needs distributions of equal width");
  if (!(threshold > 0.0 && threshold < 1.0)) throw ParameterError("coverage threshold must lie in (0, 1)");
  ModeCoverage out;
  for (std::size_t x = 0; x < p.size(); ++x) {
    if (target[x] > 0.0) {
      (p[x] >= threshold * target[x] ? out.covered : out.missed).push_back(x);
    } else {
      out.invalid_mass += p[x];
    }
  }
  return out;
}

/// %.17g, enough digits to round-trip any double.
inline std::string format_exact(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// `bitstring,probability` rows in lexicographic order, with a header line.
inline void write_distribution_csv(std::ostream& os, const DiscreteDistribution& dist) {
  os << "bitstring,probability\n";
  for (std::size_t x = 0; x < dist.size(); ++x) {
    os << to_bitstring(x, dist.num_bits()) << ',' << format_exact(dist[x]) << '\n';
  }
}

inline DiscreteDistribution read_distribution_csv(std::istream& is) {
  std::string line;
  int lineno = 0;
  std::vector<std::pair<Bitstring, double>> rows;
  int bits = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || (lineno == 1 && line == "bitstring,probability")) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw ParseError(lineno, "expected bitstring,probability");
    const std::string key = line.substr(0, comma);
    if (bits == 0) bits = static_cast<int>(key.size());
    if (static_cast<int>(key.size()) != bits) throw ParseError(lineno, "inconsistent bitstring width");
    double v = 0;
    try {
      std::size_t used = 0;
      v = std::stod(line.substr(comma + 1), &used);
      if (used != line.size() - comma - 1) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw ParseError(lineno, "malformed probability");
    }
    try {
      rows.emplace_back(parse_bitstring(key), v);
    } catch (const Error& e) {
      throw ParseError(lineno, e.what());
    }
  }
  if (bits == 0) throw ParseError(0, "empty distribution file");
  std::vector<double> mass(std::size_t{1} << bits, 0.0);
  for (const auto& [x, v] : rows) mass[x] = v;
  return {bits, std::move(mass)};
}

}  // namespace qborn

#endif  // QBORN_DATA_METRICS_HPP
