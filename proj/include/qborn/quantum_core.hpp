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
 * @file quantum_core.hpp
 * @brief Dense state-vector simulation.
 *
 * Qubits are numbered from 1. Basis index bit (N - q) holds qubit q, so qubit 1
 * is the most significant bit of a bitstring. Two-qubit gate matrices are
 * written in the basis |t0 t1> with targets[0] as the high bit; for CNOT that
 * makes targets[0] the control.
 *
 * Rotation conventions (note the +i sin in RX and the sign of RZ):
 *
 *   RX(g) = [[cos g/2, i sin g/2], [i sin g/2, cos g/2]]
 *   RY(a) = [[cos a/2, sin a/2], [-sin a/2, cos a/2]]
 *   RZ(t) = diag(e^{i t/2}, e^{-i t/2})
 *   RPHI(f) = diag(1, e^{i f}),   T = RPHI(pi/4),   Z = diag(1, -1)
 */

#ifndef QBORN_QUANTUM_CORE_HPP
#define QBORN_QUANTUM_CORE_HPP

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "qborn/distribution.hpp"
#include "qborn/errors.hpp"
#include "qborn/rng.hpp"

namespace qborn {

using Complex = std::complex<double>;
using ComplexMatrix = Eigen::MatrixXcd;

inline constexpr double kPi = std::numbers::pi;
inline constexpr int kMaxStateQubits = 20;
inline constexpr int kMaxUnitaryQubits = 12;

enum class GateKind { RX, RY, RZ, RPHI, H, Z, T, CNOT, CZ };

inline std::string to_string(GateKind kind) {
  switch (kind) {
    case GateKind::RX: return "RX";
    case GateKind::RY: return "RY";
    case GateKind::RZ: return "RZ";
    case GateKind::RPHI: return "RPHI";
    case GateKind::H: return "H";
    case GateKind::Z: return "Z";
    case GateKind::T: return "T";
    case GateKind::CNOT: return "CNOT";
    case GateKind::CZ: return "CZ";
  }
  return "?";
}

constexpr bool is_rotation(GateKind kind) noexcept {
  return kind == GateKind::RX || kind == GateKind::RY || kind == GateKind::RZ || kind == GateKind::RPHI;
}

/// Max-norm of U^dagger U - I.
inline double unitarity_defect(const ComplexMatrix& u) {
  const ComplexMatrix d = u.adjoint() * u - ComplexMatrix::Identity(u.rows(), u.cols());
  return d.cwiseAbs().maxCoeff();
}

/// A 2x2 or 4x4 unitary.
class GateMatrix {
 public:
  GateMatrix() : GateMatrix(ComplexMatrix::Identity(2, 2)) {}

  explicit GateMatrix(ComplexMatrix entries) : entries_(std::move(entries)) {
    const auto n = entries_.rows();
    if (entries_.cols() != n || (n != 2 && n != 4)) throw ShapeError("gate matrix must be 2x2 or 4x4");
    if (unitarity_defect(entries_) > 1e-10) throw ParameterError("gate matrix is not unitary");
  }

  int arity() const noexcept { return entries_.rows() == 2 ? 1 : 2; }
  const ComplexMatrix& entries() const noexcept { return entries_; }
  Complex operator()(int r, int c) const { return entries_(r, c); }

 private:
  ComplexMatrix entries_;
};

inline ComplexMatrix rx_matrix(double g) {
  const double c = std::cos(g / 2), s = std::sin(g / 2);
  ComplexMatrix m(2, 2);
  m << c, Complex(0, s), Complex(0, s), c;
  return m;
}

inline ComplexMatrix ry_matrix(double a) {
  const double c = std::cos(a / 2), s = std::sin(a / 2);
  ComplexMatrix m(2, 2);
  m << c, s, -s, c;
  return m;
}

inline ComplexMatrix rz_matrix(double t) {
  ComplexMatrix m = ComplexMatrix::Zero(2, 2);
  m(0, 0) = std::polar(1.0, t / 2);
  m(1, 1) = std::polar(1.0, -t / 2);
  return m;
}

inline ComplexMatrix rphi_matrix(double f) {
  ComplexMatrix m = ComplexMatrix::Zero(2, 2);
  m(0, 0) = 1.0;
  m(1, 1) = std::polar(1.0, f);
  return m;
}

/// Builds a gate. Rotations require an angle; fixed gates reject one.
inline GateMatrix make_gate(GateKind kind, std::optional<double> angle = std::nullopt) {
  if (is_rotation(kind) != angle.has_value()) {
    throw ParameterError(to_string(kind) + (angle ? " takes no angle" : " requires an angle"));
  }
  if (angle && !std::isfinite(*angle)) throw ParameterError("gate angle must be finite");
  ComplexMatrix m;
  switch (kind) {
    case GateKind::RX: m = rx_matrix(*angle); break;
    case GateKind::RY: m = ry_matrix(*angle); break;
    case GateKind::RZ: m = rz_matrix(*angle); break;
    case GateKind::RPHI: m = rphi_matrix(*angle); break;
    case GateKind::T: m = rphi_matrix(kPi / 4); break;
    case GateKind::H:
      m = ComplexMatrix(2, 2);
      m << 1, 1, 1, -1;
      m /= std::sqrt(2.0);
      break;
    case GateKind::Z:
      m = ComplexMatrix::Zero(2, 2);
      m(0, 0) = 1;
      m(1, 1) = -1;
      break;
    case GateKind::CNOT:
      m = ComplexMatrix::Zero(4, 4);
      m(0, 0) = m(1, 1) = m(2, 3) = m(3, 2) = 1;
      break;
    case GateKind::CZ:
      m = ComplexMatrix::Identity(4, 4);
      m(3, 3) = -1;
      break;
  }
  return GateMatrix(std::move(m));
}

/// A gate placed on specific qubits (1-based).
struct GateOp {
  GateMatrix gate;
  std::vector<int> targets;

  GateOp(GateMatrix g, std::vector<int> t) : gate(std::move(g)), targets(std::move(t)) {
    if (static_cast<int>(targets.size()) != gate.arity()) throw ShapeError("target count must equal gate arity");
    if (targets.size() == 2 && targets[0] == targets[1]) throw IndexError("gate targets must be distinct");
  }

  static GateOp single(GateKind kind, int qubit, std::optional<double> angle = std::nullopt) {
    return GateOp(make_gate(kind, angle), {qubit});
  }
  static GateOp pair(GateKind kind, int first, int second) { return GateOp(make_gate(kind), {first, second}); }

  void check_targets(int num_qubits) const {
    for (int t : targets) {
      if (t < 1 || t > num_qubits) {
        throw IndexError("gate target " + std::to_string(t) + " outside [1, " + std::to_string(num_qubits) + "]");
      }
    }
  }
};

/// Normalized amplitude vector over 2^N basis states.
class QuantumState {
 public:
  static constexpr double kNormTolerance = 1e-10;

  /// |0...0> on `num_qubits` qubits.
  explicit QuantumState(int num_qubits) : QuantumState(num_qubits, 0) {}

  QuantumState(int num_qubits, Bitstring basis_state) : num_qubits_(num_qubits) {
    if (num_qubits < 1 || num_qubits > kMaxStateQubits) throw CapacityError("qubit count must be in [1, 20]");
    amplitudes_.assign(std::size_t{1} << num_qubits, Complex(0, 0));
    if (basis_state >= amplitudes_.size()) throw IndexError("basis state outside the register");
    amplitudes_[basis_state] = 1.0;
  }

  static QuantumState from_amplitudes(int num_qubits, std::vector<Complex> amplitudes) {
    QuantumState s(num_qubits);
    if (amplitudes.size() != s.amplitudes_.size()) throw ShapeError("amplitude vector length must be 2^N");
    s.amplitudes_ = std::move(amplitudes);
    if (std::abs(s.norm_squared() - 1.0) > kNormTolerance) throw ParameterError("state is not normalized");
    return s;
  }

  /// Haar-random state from normalized i.i.d. complex normal amplitudes.
  static QuantumState random(int num_qubits, Rng& rng) {
    std::vector<Complex> a(std::size_t{1} << num_qubits);
    double n2 = 0;
    for (auto& z : a) {
      z = Complex(rng.normal(), rng.normal());
      n2 += std::norm(z);
    }
    for (auto& z : a) z /= std::sqrt(n2);
    return from_amplitudes(num_qubits, std::move(a));
  }

  int num_qubits() const noexcept { return num_qubits_; }
  std::size_t dimension() const noexcept { return amplitudes_.size(); }
  std::span<const Complex> amplitudes() const noexcept { return amplitudes_; }
  Complex amplitude(Bitstring x) const { return amplitudes_.at(x); }

  double norm_squared() const {
    double s = 0;
    for (const auto& z : amplitudes_) s += std::norm(z);
    return s;
  }

  /// In-place U on one qubit, with U given row-major.
  void apply_single(int qubit, const Complex (&u)[2][2]) {
    const std::size_t stride = std::size_t{1} << (num_qubits_ - qubit);
    const std::size_t n = amplitudes_.size();
    for (std::size_t base = 0; base < n; base += 2 * stride) {
      for (std::size_t i = base; i < base + stride; ++i) {
        const Complex a0 = amplitudes_[i], a1 = amplitudes_[i + stride];
        amplitudes_[i] = u[0][0] * a0 + u[0][1] * a1;
        amplitudes_[i + stride] = u[1][0] * a0 + u[1][1] * a1;
      }
    }
  }

  /// In-place CNOT as an amplitude permutation.
  void apply_cnot(int control, int target) {
    const std::size_t cmask = std::size_t{1} << (num_qubits_ - control);
    const std::size_t tmask = std::size_t{1} << (num_qubits_ - target);
    for (std::size_t i = 0; i < amplitudes_.size(); ++i) {
      if ((i & cmask) && !(i & tmask)) std::swap(amplitudes_[i], amplitudes_[i | tmask]);
    }
  }

  /// In-place general gate.
  void apply(const GateOp& op) {
    op.check_targets(num_qubits_);
    const auto& m = op.gate.entries();
    if (op.gate.arity() == 1) {
      const Complex u[2][2] = {{m(0, 0), m(0, 1)}, {m(1, 0), m(1, 1)}};
      apply_single(op.targets[0], u);
      return;
    }
    const std::size_t hi = std::size_t{1} << (num_qubits_ - op.targets[0]);
    const std::size_t lo = std::size_t{1} << (num_qubits_ - op.targets[1]);
    for (std::size_t i = 0; i < amplitudes_.size(); ++i) {
      if (i & (hi | lo)) continue;
      const std::size_t idx[4] = {i, i | lo, i | hi, i | hi | lo};
      Complex in[4];
      for (int k = 0; k < 4; ++k) in[k] = amplitudes_[idx[k]];
      for (int r = 0; r < 4; ++r) {
        Complex acc = 0;
        for (int c = 0; c < 4; ++c) acc += m(r, c) * in[c];
        amplitudes_[idx[r]] = acc;
      }
    }
  }

 private:
  int num_qubits_;
  std::vector<Complex> amplitudes_;
};

/// Returns (U_op tensor I_rest)|psi>.
inline QuantumState apply_gate(QuantumState state, const GateOp& op) {
  state.apply(op);
  return state;
}

inline QuantumState apply_gates(QuantumState state, std::span<const GateOp> ops) {
  for (const auto& op : ops) state.apply(op);
  return state;
}

/// Dense product of the expanded gates, first op applied first. Brute-force
/// oracle: each op is expanded to a 2^N x 2^N matrix by explicit tensor
/// construction, independent of QuantumState::apply.
inline ComplexMatrix full_unitary(std::span<const GateOp> ops, int num_qubits) {
  if (num_qubits < 1 || num_qubits > kMaxUnitaryQubits) throw CapacityError("full_unitary supports 1 to 12 qubits");
  const Eigen::Index dim = Eigen::Index{1} << num_qubits;
  ComplexMatrix total = ComplexMatrix::Identity(dim, dim);
  for (const auto& op : ops) {
    op.check_targets(num_qubits);
    const auto& g = op.gate.entries();
    const int k = op.gate.arity();
    ComplexMatrix expanded = ComplexMatrix::Zero(dim, dim);
    for (Eigen::Index col = 0; col < dim; ++col) {
      int local_in = 0;
      for (int t = 0; t < k; ++t) local_in = 2 * local_in + bit_at(static_cast<Bitstring>(col), num_qubits, op.targets[t]);
      for (int local_out = 0; local_out < (1 << k); ++local_out) {
        Bitstring row = static_cast<Bitstring>(col);
        for (int t = 0; t < k; ++t) {
          const int bit = (local_out >> (k - 1 - t)) & 1;
          const Bitstring mask = Bitstring{1} << (num_qubits - op.targets[t]);
          row = bit ? (row | mask) : (row & ~mask);
        }
        expanded(static_cast<Eigen::Index>(row), col) += g(local_out, local_in);
      }
    }
    total = expanded * total;
  }
  return total;
}

/// Born-rule distribution p(x) = |alpha_x|^2.
inline DiscreteDistribution probabilities(const QuantumState& state) {
  std::vector<double> p(state.dimension());
  double total = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] = std::norm(state.amplitudes()[i]);
    total += p[i];
  }
  for (double& v : p) v /= total;
  return {state.num_qubits(), std::move(p)};
}

/// Draws from a distribution via its cumulative table.
class Sampler {
 public:
  explicit Sampler(const DiscreteDistribution& dist) : cdf_(dist.size()) {
    std::partial_sum(dist.masses().begin(), dist.masses().end(), cdf_.begin());
  }

  Bitstring draw(Rng& rng) const {
    const double u = rng.uniform() * cdf_.back();
    auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
    if (it == cdf_.end()) --it;
    return static_cast<Bitstring>(it - cdf_.begin());
  }

  std::vector<Bitstring> draw(std::size_t count, Rng& rng) const {
    std::vector<Bitstring> out(count);
    for (auto& x : out) x = draw(rng);
    return out;
  }

 private:
  std::vector<double> cdf_;
};

/// i.i.d. measurement outcomes of `state`.
inline std::vector<Bitstring> sample(const QuantumState& state, std::size_t count, Rng& rng) {
  if (count < 1) throw ParameterError("sample count must be at least 1");
  return Sampler(probabilities(state)).draw(count, rng);
}

/// True iff U = lambda V for a unit-modulus lambda, with lambda read off the
/// largest-magnitude entry of V. Returns lambda through `phase` when given.
inline bool equal_up_to_global_phase(const ComplexMatrix& u, const ComplexMatrix& v, double tol = 1e-9,
                                     Complex* phase = nullptr, double* residual = nullptr) {
  if (u.rows() != v.rows() || u.cols() != v.cols()) throw ShapeError("matrices must have the same shape");
  Eigen::Index r = 0, c = 0;
  const double vmax = v.cwiseAbs().maxCoeff(&r, &c);
  if (vmax == 0.0) {
    const double umax = u.size() ? u.cwiseAbs().maxCoeff() : 0.0;
    if (phase) *phase = 1.0;
    if (residual) *residual = umax;
    return umax < tol;
  }
  Complex lambda = u(r, c) / v(r, c);
  const double mag = std::abs(lambda);
  lambda = mag > 0 ? lambda / mag : Complex(1, 0);
  const double res = (u - lambda * v).cwiseAbs().maxCoeff();
  if (phase) *phase = lambda;
  if (residual) *residual = res;
  return res < tol;
}

}  // namespace qborn

#endif  // QBORN_QUANTUM_CORE_HPP
