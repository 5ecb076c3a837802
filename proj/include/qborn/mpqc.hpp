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
 * @file mpqc.hpp
 * @brief Multi-layer parameterized quantum circuits used as Born machines.
 *
 * Each layer ("block") applies to every qubit j the single-qubit unitary
 *
 *   U = RZ(t1) RY(t2) RZ(t3) RPHI(phi) RX(t4) RZ(t5) RX(t6)
 *
 * (rightmost factor first) and then the layer's CNOT pattern. Angles live in a
 * layer x qubit x slot tensor with slots ordered (t1, t2, t3, phi, t4, t5, t6).
 * An AnsatzSpec can mask slots and disable entanglement per layer; masked
 * slots hold zero and are not trainable.
 */

#ifndef QBORN_MPQC_HPP
#define QBORN_MPQC_HPP

#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "qborn/distribution.hpp"
#include "qborn/errors.hpp"
#include "qborn/quantum_core.hpp"
#include "qborn/rng.hpp"

namespace qborn {

inline constexpr int kSlotsPerQubit = 7;

/// Slot positions inside one qubit's 7-angle group.
enum Slot : int { kTheta1 = 0, kTheta2 = 1, kTheta3 = 2, kPhi = 3, kTheta4 = 4, kTheta5 = 5, kTheta6 = 6 };

constexpr GateKind slot_gate(int slot) {
  constexpr GateKind kinds[kSlotsPerQubit] = {GateKind::RZ, GateKind::RY, GateKind::RZ, GateKind::RPHI,
                                              GateKind::RX, GateKind::RZ, GateKind::RX};
  return kinds[slot];
}

struct EntanglementPattern {
  std::vector<std::pair<int, int>> pairs;  // (control, target), 1-based

  /// CNOT(1,2), CNOT(1,3), ..., CNOT(1,N); empty for N = 1.
  static EntanglementPattern ladder(int num_qubits) {
    EntanglementPattern p;
    for (int t = 2; t <= num_qubits; ++t) p.pairs.emplace_back(1, t);
    return p;
  }

  void validate(int num_qubits) const {
    for (const auto& [c, t] : pairs) {
      if (c == t) throw ParameterError("entanglement pair has control == target");
      if (c < 1 || c > num_qubits || t < 1 || t > num_qubits) throw IndexError("entanglement pair outside register");
    }
  }

  friend bool operator==(const EntanglementPattern&, const EntanglementPattern&) = default;
};

enum class AnsatzVariant { FULL_BLOCK, EXPERIMENT };

inline std::string to_string(AnsatzVariant v) { return v == AnsatzVariant::FULL_BLOCK ? "FULL_BLOCK" : "EXPERIMENT"; }

inline AnsatzVariant parse_variant(const std::string& s) {
  if (s == "FULL_BLOCK") return AnsatzVariant::FULL_BLOCK;
  if (s == "EXPERIMENT") return AnsatzVariant::EXPERIMENT;
  throw ParameterError("unknown ansatz variant '" + s + "'");
}

using SlotMask = std::array<bool, kSlotsPerQubit>;

/// Which slots train in each layer, and whether each layer entangles.
struct AnsatzSpec {
  AnsatzVariant variant = AnsatzVariant::FULL_BLOCK;
  std::vector<SlotMask> slot_mask;
  std::vector<bool> entangle;

  int num_layers() const { return static_cast<int>(slot_mask.size()); }

  int active_per_qubit() const {
    int n = 0;
    for (const auto& m : slot_mask)
      for (bool b : m) n += b;
    return n;
  }
  int parameter_count(int num_qubits) const { return active_per_qubit() * num_qubits; }

  static AnsatzSpec full_block(int num_layers) {
    AnsatzSpec s;
    s.variant = AnsatzVariant::FULL_BLOCK;
    SlotMask all;
    all.fill(true);
    s.slot_mask.assign(static_cast<std::size_t>(num_layers), all);
    s.entangle.assign(static_cast<std::size_t>(num_layers), true);
    return s;
  }

  /// `depth` entangling layers of RX, RZ, RX (applied in that order) on every
  /// qubit, followed by one rotation-only layer holding a single RX per qubit.
  /// depth 4 on 4 qubits gives 4*4*3 + 4 = 52 trainable angles.
  static AnsatzSpec experiment(int depth = 4) {
    AnsatzSpec s;
    s.variant = AnsatzVariant::EXPERIMENT;
    SlotMask rxzx{};
    rxzx[kTheta4] = rxzx[kTheta5] = rxzx[kTheta6] = true;
    SlotMask rx{};
    rx[kTheta6] = true;
    s.slot_mask.assign(static_cast<std::size_t>(depth), rxzx);
    s.entangle.assign(static_cast<std::size_t>(depth), true);
    s.slot_mask.push_back(rx);
    s.entangle.push_back(false);
    return s;
  }

  void validate() const {
    if (slot_mask.empty()) throw ParameterError("ansatz needs at least one layer");
    if (entangle.size() != slot_mask.size()) throw ShapeError("entangle flags must match the layer count");
  }

  friend bool operator==(const AnsatzSpec&, const AnsatzSpec&) = default;
};

class MpqcProgram {
 public:
  MpqcProgram(int num_qubits, AnsatzSpec ansatz, EntanglementPattern pattern, std::vector<double> angles,
              std::uint64_t seed = 0)
      : num_qubits_(num_qubits),
        ansatz_(std::move(ansatz)),
        pattern_(std::move(pattern)),
        angles_(std::move(angles)),
        seed_(seed) {
    if (num_qubits_ < 1 || num_qubits_ > kMaxStateQubits) throw CapacityError("MPQC qubit count must be in [1, 20]");
    ansatz_.validate();
    pattern_.validate(num_qubits_);
    if (angles_.size() != tensor_size()) throw ShapeError("angle tensor must have L x N x 7 entries");
    for (std::size_t i = 0; i < angles_.size(); ++i) {
      if (!std::isfinite(angles_[i])) throw ParameterError("angles must be finite");
      if (!is_active(i) && angles_[i] != 0.0) throw ParameterError("masked slot holds a nonzero angle");
    }
    for (std::size_t i = 0; i < angles_.size(); ++i)
      if (is_active(i)) active_.push_back(i);
  }

  static MpqcProgram zeros(int num_qubits, AnsatzSpec ansatz, EntanglementPattern pattern) {
    const std::size_t n = static_cast<std::size_t>(ansatz.num_layers()) * num_qubits * kSlotsPerQubit;
    return {num_qubits, std::move(ansatz), std::move(pattern), std::vector<double>(n, 0.0)};
  }

  /// Active angles drawn uniformly from [0, 2 pi) in flat index order.
  static MpqcProgram random(int num_qubits, AnsatzSpec ansatz, EntanglementPattern pattern, std::uint64_t seed) {
    MpqcProgram p = zeros(num_qubits, std::move(ansatz), std::move(pattern));
    Rng rng(seed);
    for (std::size_t i : p.active_) p.angles_[i] = rng.uniform(0.0, 2.0 * kPi);
    p.seed_ = seed;
    return p;
  }

  int num_qubits() const noexcept { return num_qubits_; }
  int num_layers() const noexcept { return ansatz_.num_layers(); }
  const AnsatzSpec& ansatz() const noexcept { return ansatz_; }
  const EntanglementPattern& entanglement() const noexcept { return pattern_; }
  std::span<const double> angles() const noexcept { return angles_; }
  std::uint64_t seed() const noexcept { return seed_; }
  std::size_t tensor_size() const {
    return static_cast<std::size_t>(num_layers()) * num_qubits_ * kSlotsPerQubit;
  }

  /// Flat row-major index; `qubit` is 1-based.
  std::size_t index(int layer, int qubit, int slot) const {
    if (layer < 0 || layer >= num_layers() || qubit < 1 || qubit > num_qubits_ || slot < 0 || slot >= kSlotsPerQubit)
      throw IndexError("angle tensor index out of range");
    return (static_cast<std::size_t>(layer) * num_qubits_ + (qubit - 1)) * kSlotsPerQubit + slot;
  }
  double angle(int layer, int qubit, int slot) const { return angles_[index(layer, qubit, slot)]; }

  bool is_active(std::size_t flat) const {
    if (flat >= tensor_size()) return false;
    const std::size_t layer = flat / (static_cast<std::size_t>(num_qubits_) * kSlotsPerQubit);
    return ansatz_.slot_mask[layer][flat % kSlotsPerQubit];
  }
  const std::vector<std::size_t>& active_indices() const noexcept { return active_; }
  int parameter_count() const noexcept { return static_cast<int>(active_.size()); }

  /// Returns a copy with active angle `flat` replaced.
  MpqcProgram with_angle(std::size_t flat, double value) const {
    check_active(flat);
    MpqcProgram p = *this;
    p.angles_[flat] = value;
    return p;
  }

  /// Replaces every active angle, in active_indices() order.
  MpqcProgram with_parameters(std::span<const double> params) const {
    if (params.size() != active_.size()) throw ShapeError("parameter vector length must equal the active count");
    MpqcProgram p = *this;
    for (std::size_t k = 0; k < active_.size(); ++k) p.angles_[active_[k]] = params[k];
    return p;
  }
  std::vector<double> parameters() const {
    std::vector<double> v;
    v.reserve(active_.size());
    for (std::size_t i : active_) v.push_back(angles_[i]);
    return v;
  }

  /// Angles reduced to [0, 2 pi) for display.
  std::vector<double> reported_angles() const {
    std::vector<double> v(angles_);
    for (double& a : v) {
      a = std::fmod(a, 2.0 * kPi);
      if (a < 0) a += 2.0 * kPi;
    }
    return v;
  }

  void check_active(std::size_t flat) const {
    if (flat >= tensor_size()) throw IndexError("parameter index " + std::to_string(flat) + " out of range");
    if (!is_active(flat)) throw IndexError("parameter index " + std::to_string(flat) + " is masked by the ansatz");
  }

  friend bool operator==(const MpqcProgram& a, const MpqcProgram& b) {
    return a.num_qubits_ == b.num_qubits_ && a.ansatz_ == b.ansatz_ && a.pattern_ == b.pattern_ &&
           a.angles_ == b.angles_ && a.seed_ == b.seed_;
  }

 private:
  int num_qubits_;
  AnsatzSpec ansatz_;
  EntanglementPattern pattern_;
  std::vector<double> angles_;
  std::uint64_t seed_;
  std::vector<std::size_t> active_;
};

/// Gate list of one full block: per qubit the seven rotations, RX(t6) first,
/// then the CNOT pattern. `layer_angles` is N x 7 row-major.
inline std::vector<GateOp> block_unitary(std::span<const double> layer_angles, const EntanglementPattern& pattern,
                                         bool entangle = true) {
  if (layer_angles.empty() || layer_angles.size() % kSlotsPerQubit != 0)
    throw ShapeError("block angles must be N x 7");
  const int n = static_cast<int>(layer_angles.size() / kSlotsPerQubit);
  pattern.validate(n);
  std::vector<GateOp> ops;
  for (int q = 1; q <= n; ++q) {
    for (int slot = kSlotsPerQubit - 1; slot >= 0; --slot) {
      ops.push_back(GateOp::single(slot_gate(slot), q, layer_angles[(q - 1) * kSlotsPerQubit + slot]));
    }
  }
  if (entangle)
    for (const auto& [c, t] : pattern.pairs) ops.push_back(GateOp::pair(GateKind::CNOT, c, t));
  return ops;
}

/// Full gate list of a program; masked slots are omitted.
inline std::vector<GateOp> program_ops(const MpqcProgram& program) {
  std::vector<GateOp> ops;
  const int n = program.num_qubits();
  for (int l = 0; l < program.num_layers(); ++l) {
    const auto& mask = program.ansatz().slot_mask[static_cast<std::size_t>(l)];
    for (int q = 1; q <= n; ++q) {
      for (int slot = kSlotsPerQubit - 1; slot >= 0; --slot) {
        if (mask[slot]) ops.push_back(GateOp::single(slot_gate(slot), q, program.angle(l, q, slot)));
      }
    }
    if (program.ansatz().entangle[static_cast<std::size_t>(l)])
      for (const auto& [c, t] : program.entanglement().pairs) ops.push_back(GateOp::pair(GateKind::CNOT, c, t));
  }
  return ops;
}

namespace detail {

using Mat2 = std::array<std::array<Complex, 2>, 2>;

inline Mat2 mul(const Mat2& a, const Mat2& b) {
  Mat2 r{};
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) r[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
  return r;
}

// Same matrices as make_gate, without the heap and the unitarity check.
inline Mat2 slot_matrix(int slot, double angle) {
  const double c = std::cos(angle / 2), s = std::sin(angle / 2);
  switch (slot_gate(slot)) {
    case GateKind::RX: return Mat2{{{c, Complex(0, s)}, {Complex(0, s), c}}};
    case GateKind::RY: return Mat2{{{c, s}, {-s, c}}};
    case GateKind::RZ: return Mat2{{{Complex(c, s), 0.0}, {0.0, Complex(c, -s)}}};
    default: return Mat2{{{1.0, 0.0}, {0.0, std::polar(1.0, angle)}}};
  }
}

}  // namespace detail

/// U_theta |0...0>.
inline QuantumState evolve(const MpqcProgram& program) {
  const int n = program.num_qubits();
  QuantumState state(n);
  for (int l = 0; l < program.num_layers(); ++l) {
    const auto& mask = program.ansatz().slot_mask[static_cast<std::size_t>(l)];
    for (int q = 1; q <= n; ++q) {
      detail::Mat2 u{{{1.0, 0.0}, {0.0, 1.0}}};
      bool any = false;
      for (int slot = kSlotsPerQubit - 1; slot >= 0; --slot) {
        if (!mask[slot]) continue;
        u = detail::mul(detail::slot_matrix(slot, program.angle(l, q, slot)), u);
        any = true;
      }
      if (any) {
        const Complex raw[2][2] = {{u[0][0], u[0][1]}, {u[1][0], u[1][1]}};
        state.apply_single(q, raw);
      }
    }
    if (program.ansatz().entangle[static_cast<std::size_t>(l)])
      for (const auto& [c, t] : program.entanglement().pairs) state.apply_cnot(c, t);
  }
  return state;
}

inline DiscreteDistribution output_distribution(const MpqcProgram& program) { return probabilities(evolve(program)); }

/// Copy with active angle `flat` moved by direction * pi/2.
inline MpqcProgram shifted_program(const MpqcProgram& program, std::size_t flat, int direction) {
  if (direction != 1 && direction != -1) throw ParameterError("shift direction must be +1 or -1");
  program.check_active(flat);
  return program.with_angle(flat, program.angles()[flat] + direction * kPi / 2);
}

/// Output distributions at theta + pi/2 and theta - pi/2 for one parameter.
struct ShiftedPair {
  std::size_t index;
  DiscreteDistribution plus;
  DiscreteDistribution minus;
};

inline ShiftedPair shifted_distributions(const MpqcProgram& program, std::size_t flat) {
  return {flat, output_distribution(shifted_program(program, flat, +1)),
          output_distribution(shifted_program(program, flat, -1))};
}

/// All active parameters, in active_indices() order.
inline std::vector<ShiftedPair> all_shifted_distributions(const MpqcProgram& program) {
  std::vector<ShiftedPair> out;
  out.reserve(program.active_indices().size());
  for (std::size_t i : program.active_indices()) out.push_back(shifted_distributions(program, i));
  return out;
}

/// d p(x) / d theta = (p_plus(x) - p_minus(x)) / 2 for every x.
inline std::vector<double> prob_gradient(const MpqcProgram& program, std::size_t flat) {
  const auto s = shifted_distributions(program, flat);
  std::vector<double> g(s.plus.size());
  for (std::size_t x = 0; x < g.size(); ++x) g[x] = 0.5 * (s.plus[x] - s.minus[x]);
  return g;
}

// Serialization -------------------------------------------------------------

inline nlohmann::json to_json(const AnsatzSpec& a) {
  nlohmann::json masks = nlohmann::json::array();
  for (const auto& m : a.slot_mask) {
    std::string s;
    for (bool b : m) s += b ? '1' : '0';
    masks.push_back(s);
  }
  return {{"variant", to_string(a.variant)}, {"slot_mask", masks}, {"entangle", a.entangle}};
}

inline AnsatzSpec ansatz_from_json(const nlohmann::json& j) {
  AnsatzSpec a;
  a.variant = parse_variant(j.at("variant").get<std::string>());
  for (const auto& m : j.at("slot_mask")) {
    const auto s = m.get<std::string>();
    if (s.size() != kSlotsPerQubit) throw ParameterError("slot mask must have 7 characters");
    SlotMask mask{};
    for (int k = 0; k < kSlotsPerQubit; ++k) mask[k] = s[k] == '1';
    a.slot_mask.push_back(mask);
  }
  a.entangle = j.at("entangle").get<std::vector<bool>>();
  return a;
}

/// Flat record; doubles are written in shortest round-trip form.
inline nlohmann::json to_json(const MpqcProgram& p) {
  nlohmann::json pairs = nlohmann::json::array();
  for (const auto& [c, t] : p.entanglement().pairs) pairs.push_back({c, t});
  return {{"num_qubits", p.num_qubits()},
          {"num_layers", p.num_layers()},
          {"variant", to_string(p.ansatz().variant)},
          {"ansatz", to_json(p.ansatz())},
          {"angles", std::vector<double>(p.angles().begin(), p.angles().end())},
          {"entanglement", pairs},
          {"seed", p.seed()}};
}

inline MpqcProgram program_from_json(const nlohmann::json& j) {
  EntanglementPattern pattern;
  for (const auto& pr : j.at("entanglement")) pattern.pairs.emplace_back(pr.at(0).get<int>(), pr.at(1).get<int>());
  AnsatzSpec ansatz = ansatz_from_json(j.at("ansatz"));
  if (ansatz.num_layers() != j.at("num_layers").get<int>()) throw ShapeError("num_layers disagrees with the ansatz");
  if (to_string(ansatz.variant) != j.at("variant").get<std::string>()) throw ParameterError("variant mismatch");
  return {j.at("num_qubits").get<int>(), std::move(ansatz), std::move(pattern),
          j.at("angles").get<std::vector<double>>(), j.at("seed").get<std::uint64_t>()};
}

}  // namespace qborn

#endif  // QBORN_MPQC_HPP
