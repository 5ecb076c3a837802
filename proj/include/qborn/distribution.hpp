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
 * @file distribution.hpp
 * @brief Bitstrings and probability mass over {0,1}^n.
 *
 * A bitstring of n bits is stored as an integer whose most significant of the
 * n low bits is bit 1 (qubit 1). The text form prints bit 1 first, so
 * lexicographic order of the text equals numeric order of the index.
 */

#ifndef QBORN_DISTRIBUTION_HPP
#define QBORN_DISTRIBUTION_HPP

#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "qborn/errors.hpp"

namespace qborn {

using Bitstring = std::uint64_t;

/// Value (0 or 1) of 1-based bit `position` in an n-bit string.
constexpr int bit_at(Bitstring x, int num_bits, int position) noexcept {
  return static_cast<int>((x >> (num_bits - position)) & 1U);
}

inline std::string to_bitstring(Bitstring x, int num_bits) {
  std::string s(static_cast<std::size_t>(num_bits), '0');
  for (int b = 1; b <= num_bits; ++b) {
    if (bit_at(x, num_bits, b)) s[static_cast<std::size_t>(b - 1)] = '1';
  }
  return s;
}

inline Bitstring parse_bitstring(std::string_view text) {
  if (text.empty() || text.size() > 63) throw ParameterError("bitstring length must be in [1, 63]");
  Bitstring x = 0;
  for (char c : text) {
    if (c != '0' && c != '1') throw ParameterError("bitstring may only contain 0 and 1: " + std::string(text));
    x = (x << 1) | static_cast<Bitstring>(c == '1');
  }
  return x;
}

/// Bits of x as a {0,1}-valued real vector, bit 1 first.
inline std::vector<double> bits_as_reals(Bitstring x, int num_bits) {
  std::vector<double> v(static_cast<std::size_t>(num_bits));
  for (int b = 1; b <= num_bits; ++b) v[static_cast<std::size_t>(b - 1)] = bit_at(x, num_bits, b);
  return v;
}

/// Probability mass over all 2^n bitstrings.
///
/// Construction checks that masses are non-negative and sum to one within
/// `kTolerance`; tiny negative round-off (above -kTolerance) is clipped to 0.
class DiscreteDistribution {
 public:
  static constexpr double kTolerance = 1e-9;
  static constexpr int kMaxBits = 24;

  DiscreteDistribution() = default;

  DiscreteDistribution(int num_bits, std::vector<double> mass) : num_bits_(num_bits), mass_(std::move(mass)) {
    if (num_bits_ < 1 || num_bits_ > kMaxBits) throw CapacityError("distribution bit count must be in [1, 24]");
    if (mass_.size() != (std::size_t{1} << num_bits_)) throw ShapeError("mass vector length must be 2^num_bits");
    double total = 0.0;
    for (double& m : mass_) {
      if (!std::isfinite(m) || m < -kTolerance) throw ParameterError("probability masses must be finite and non-negative");
      if (m < 0.0) m = 0.0;
      total += m;
    }
    if (std::abs(total - 1.0) > kTolerance) {
      throw ParameterError("probability masses sum to " + std::to_string(total) + ", expected 1");
    }
  }

  /// Rescales non-negative weights to a distribution.
  static DiscreteDistribution normalized(int num_bits, std::vector<double> weights) {
    const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
    if (!(total > 0.0)) throw ParameterError("cannot normalize weights with zero total");
    for (double& w : weights) w /= total;
    return {num_bits, std::move(weights)};
  }

  static DiscreteDistribution point_mass(int num_bits, Bitstring x) {
    std::vector<double> m(std::size_t{1} << num_bits, 0.0);
    if (x >= m.size()) throw IndexError("point mass outside the support");
    m[x] = 1.0;
    return {num_bits, std::move(m)};
  }

  static DiscreteDistribution uniform(int num_bits) {
    const std::size_t n = std::size_t{1} << num_bits;
    return {num_bits, std::vector<double>(n, 1.0 / static_cast<double>(n))};
  }

  int num_bits() const noexcept { return num_bits_; }
  std::size_t size() const noexcept { return mass_.size(); }
  double operator[](Bitstring x) const { return mass_[x]; }
  double at(Bitstring x) const {
    if (x >= mass_.size()) throw IndexError("bitstring outside the support");
    return mass_[x];
  }
  std::span<const double> masses() const noexcept { return mass_; }
  double total() const { return std::accumulate(mass_.begin(), mass_.end(), 0.0); }

  friend bool operator==(const DiscreteDistribution&, const DiscreteDistribution&) = default;

 private:
  int num_bits_ = 0;
  std::vector<double> mass_;
};

}  // namespace qborn

#endif  // QBORN_DISTRIBUTION_HPP
