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


// IQP circuits: text format, H-sandwich normal form, the Hadamard gadget,
// post-selection, and compilation into MPQC blocks.

#ifndef QBORN_IQP_HPP
#define QBORN_IQP_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "qborn/data_metrics.hpp"
#include "qborn/errors.hpp"
#include "qborn/mpqc.hpp"
#include "qborn/quantum_core.hpp"

namespace qborn {

struct IqpGate {
  GateKind kind = GateKind::H;  // H, T, Z or CZ
  int a = 1;
  int b = 0;  // second qubit of CZ, 0 otherwise

  static IqpGate h(int q) { return {GateKind::H, q, 0}; }
  static IqpGate t(int q) { return {GateKind::T, q, 0}; }
  static IqpGate z(int q) { return {GateKind::Z, q, 0}; }
  static IqpGate cz(int k, int j) { return {GateKind::CZ, k, j}; }

  bool touches(int q) const { return a == q || (kind == GateKind::CZ && b == q); }
  std::string text() const {
    return to_string(kind) + " " + std::to_string(a) + (kind == GateKind::CZ ? " " + std::to_string(b) : "");
  }
  friend bool operator==(const IqpGate&, const IqpGate&) = default;
};

/// Basis in which the listed gates act. In kX each gate G stands for H G H
/// on its qubits, i.e. the X-diagonal form of an IQP circuit.
enum class IqpBasis { kZ, kX };

struct IqpCircuit {
  int num_qubits = 1;
  std::vector<IqpGate> gates;
  std::vector<int> out_register;   // ordered; bit 1 of the conditional distribution is out_register[0]
  std::vector<int> post_register;
  IqpBasis basis = IqpBasis::kZ;

  /// Circuit with every qubit in the output register and nothing post-selected.
  static IqpCircuit on(int num_qubits, std::vector<IqpGate> gates = {}, IqpBasis basis = IqpBasis::kZ) {
    IqpCircuit c;
    c.num_qubits = num_qubits;
    c.gates = std::move(gates);
    for (int q = 1; q <= num_qubits; ++q) c.out_register.push_back(q);
    c.basis = basis;
    c.validate();
    return c;
  }

  void validate() const {
    if (num_qubits < 1 || num_qubits > kMaxStateQubits) throw CapacityError("IQP qubit count must be in [1, 20]");
    for (const auto& g : gates) {
      if (g.kind != GateKind::H && g.kind != GateKind::T && g.kind != GateKind::Z && g.kind != GateKind::CZ)
        throw CircuitError("gate " + to_string(g.kind) + " is not an IQP gate");
      if (g.a < 1 || g.a > num_qubits) throw IndexError("gate target outside register: " + g.text());
      if (g.kind == GateKind::CZ) {
        if (g.b < 1 || g.b > num_qubits) throw IndexError("gate target outside register: " + g.text());
        if (g.a == g.b) throw IndexError("CZ needs two distinct qubits: " + g.text());
      } else if (g.b != 0) {
        throw IndexError("single-qubit gate with a second target: " + g.text());
      }
    }
    std::vector<int> seen(static_cast<std::size_t>(num_qubits) + 1, 0);
    for (int q : out_register) {
      if (q < 1 || q > num_qubits) throw IndexError("output register qubit out of range");
      if (seen[q]++) throw IndexError("qubit listed twice in the registers");
    }
    for (int q : post_register) {
      if (q < 1 || q > num_qubits) throw IndexError("post-selection register qubit out of range");
      if (seen[q]++) throw IndexError("output and post-selection registers must be disjoint");
    }
  }

  friend bool operator==(const IqpCircuit&, const IqpCircuit&) = default;
};

/// The circuit as plain gate operations (X-basis gates are H-conjugated).
inline std::vector<GateOp> circuit_ops(const IqpCircuit& c) {
  c.validate();
  std::vector<GateOp> ops;
  for (const auto& g : c.gates) {
    if (c.basis == IqpBasis::kX && g.kind == GateKind::H)
      throw CircuitError("H is not X-diagonal and cannot appear in an X-basis circuit");
    std::vector<int> qs{g.a};
    if (g.kind == GateKind::CZ) qs.push_back(g.b);
    if (c.basis == IqpBasis::kX)
      for (int q : qs) ops.push_back(GateOp::single(GateKind::H, q));
    ops.push_back(g.kind == GateKind::CZ ? GateOp::pair(GateKind::CZ, g.a, g.b) : GateOp::single(g.kind, g.a));
    if (c.basis == IqpBasis::kX)
      for (int q : qs) ops.push_back(GateOp::single(GateKind::H, q));
  }
  return ops;
}

inline QuantumState circuit_state(const IqpCircuit& c) { return apply_gates(QuantumState(c.num_qubits), circuit_ops(c)); }

inline ComplexMatrix circuit_unitary(const IqpCircuit& c) { return full_unitary(circuit_ops(c), c.num_qubits); }

// Normal form --------------------------------------------------------------

/// Positions of H gates that are neither the first nor the last gate on their qubit.
inline std::vector<std::size_t> interior_hadamards(const IqpCircuit& c) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < c.gates.size(); ++i) {
    const auto& g = c.gates[i];
    if (g.kind != GateKind::H) continue;
    bool before = false, after = false;
    for (std::size_t k = 0; k < i; ++k) before |= c.gates[k].touches(g.a);
    for (std::size_t k = i + 1; k < c.gates.size(); ++k) after |= c.gates[k].touches(g.a);
    if (before && after) out.push_back(i);
  }
  return out;
}

/// Z basis, and on every qubit the first and last gates are H with no H in between.
inline bool is_normal_form(const IqpCircuit& c) {
  if (c.basis != IqpBasis::kZ) return false;
  for (int q = 1; q <= c.num_qubits; ++q) {
    std::vector<GateKind> on_q;
    for (const auto& g : c.gates)
      if (g.touches(q)) on_q.push_back(g.kind);
    if (on_q.size() < 2 || on_q.front() != GateKind::H || on_q.back() != GateKind::H) return false;
    for (std::size_t k = 1; k + 1 < on_q.size(); ++k)
      if (on_q[k] == GateKind::H) return false;
  }
  return true;
}

/// H-sandwich form H^N D H^N with D built from T, Z and CZ.
///
/// An X-basis circuit U becomes H^N (H^N U H^N) H^N, whose middle factor is
/// the same gate list read in the Z basis. A Z-basis circuit already in
/// normal form is returned unchanged; qubits the circuit never touches get an
/// H H pair. Anything else (interior or unmatched H gates) is rejected.
inline IqpCircuit to_z_diagonal_form(const IqpCircuit& c) {
  c.validate();
  IqpCircuit out = c;
  out.gates.clear();
  if (c.basis == IqpBasis::kX) {
    out.basis = IqpBasis::kZ;
    for (int q = 1; q <= c.num_qubits; ++q) out.gates.push_back(IqpGate::h(q));
    for (const auto& g : c.gates) {
      if (g.kind == GateKind::H) throw CircuitError("H is not X-diagonal and cannot appear in an X-basis circuit");
      out.gates.push_back(g);
    }
    for (int q = 1; q <= c.num_qubits; ++q) out.gates.push_back(IqpGate::h(q));
    return out;
  }
  std::vector<int> idle;
  for (int q = 1; q <= c.num_qubits; ++q)
    if (std::none_of(c.gates.begin(), c.gates.end(), [q](const IqpGate& g) { return g.touches(q); })) idle.push_back(q);
  for (int q : idle) out.gates.push_back(IqpGate::h(q));
  out.gates.insert(out.gates.end(), c.gates.begin(), c.gates.end());
  for (int q : idle) out.gates.push_back(IqpGate::h(q));
  if (!interior_hadamards(out).empty())
    throw CircuitError("circuit has interior H gates; eliminate them with hadamard_gadget first");
  if (!is_normal_form(out)) throw CircuitError("circuit is not of the form H^N D H^N");
  return out;
}

// Post-selection -----------------------------------------------------------

inline constexpr double kPostselectionTolerance = 1e-12;

/// Prob[O = x | P = 0...0] over the ordered output register.
inline DiscreteDistribution postselected_distribution(const QuantumState& state, const std::vector<int>& out_register,
                                                      const std::vector<int>& post_register,
                                                      double tol = kPostselectionTolerance) {
  const int n = state.num_qubits();
  if (out_register.empty()) throw ParameterError("output register must not be empty");
  for (int q : out_register)
    if (q < 1 || q > n) throw IndexError("output register qubit out of range");
  for (int q : post_register) {
    if (q < 1 || q > n) throw IndexError("post-selection register qubit out of range");
    if (std::find(out_register.begin(), out_register.end(), q) != out_register.end())
      throw IndexError("output and post-selection registers must be disjoint");
  }
  const int m = static_cast<int>(out_register.size());
  std::vector<double> joint(std::size_t{1} << m, 0.0);
  double accepted = 0;
  for (Bitstring x = 0; x < state.dimension(); ++x) {
    bool zero = true;
    for (int q : post_register) zero &= bit_at(x, n, q) == 0;
    if (!zero) continue;
    const double p = std::norm(state.amplitudes()[x]);
    Bitstring y = 0;
    for (int q : out_register) y = (y << 1) | static_cast<Bitstring>(bit_at(x, n, q));
    joint[y] += p;
    accepted += p;
  }
  if (!(accepted > tol))
    throw DegeneratePostselectionError("post-selection probability " + format_exact(accepted) + " is below tolerance");
  for (double& v : joint) v /= accepted;
  return {m, std::move(joint)};
}

inline DiscreteDistribution postselected_distribution(const IqpCircuit& c, double tol = kPostselectionTolerance) {
  return postselected_distribution(circuit_state(c), c.out_register, c.post_register, tol);
}

/// Prob[P = 0...0].
inline double postselection_probability(const IqpCircuit& c) {
  const auto s = circuit_state(c);
  double acc = 0;
  for (Bitstring x = 0; x < s.dimension(); ++x) {
    bool zero = true;
    for (int q : c.post_register) zero &= bit_at(x, c.num_qubits, q) == 0;
    if (zero) acc += std::norm(s.amplitudes()[x]);
  }
  return acc;
}

/// Replaces the interior H at `position` (on qubit a) by an ancilla b = N+1:
/// H on b up front, CZ(a, b) in place of the H, every later use of a moved
/// to b, and a final H on a, which joins the post-selection register.
/// Conditioned on a reading 0, b carries H applied to a's state, so the
/// post-selected distribution on the (relabelled) output register is kept.
inline IqpCircuit hadamard_gadget(const IqpCircuit& c, std::size_t position) {
  c.validate();
  if (c.basis != IqpBasis::kZ) throw CircuitError("the Hadamard gadget works on Z-basis circuits");
  const auto interior = interior_hadamards(c);
  if (std::find(interior.begin(), interior.end(), position) == interior.end())
    throw CircuitError("gate " + std::to_string(position) + " is not an interior H");
  if (c.num_qubits + 1 > kMaxStateQubits) throw CapacityError("no room for another ancilla qubit");
  const int a = c.gates[position].a;
  const int b = c.num_qubits + 1;
  auto relabel = [&](int q) { return q == a ? b : q; };

  IqpCircuit out;
  out.num_qubits = b;
  out.basis = IqpBasis::kZ;
  out.gates.push_back(IqpGate::h(b));
  for (std::size_t i = 0; i < c.gates.size(); ++i) {
    IqpGate g = c.gates[i];
    if (i == position) {
      out.gates.push_back(IqpGate::cz(a, b));
      continue;
    }
    if (i > position) {
      g.a = relabel(g.a);
      if (g.kind == GateKind::CZ) g.b = relabel(g.b);
    }
    out.gates.push_back(g);
  }
  out.gates.push_back(IqpGate::h(a));
  for (int q : c.out_register) out.out_register.push_back(relabel(q));
  for (int q : c.post_register) out.post_register.push_back(relabel(q));
  out.post_register.push_back(a);
  out.validate();
  return out;
}

/// Applies the gadget until no interior H is left.
inline IqpCircuit eliminate_interior_hadamards(IqpCircuit c) {
  for (auto pos = interior_hadamards(c); !pos.empty(); pos = interior_hadamards(c)) c = hadamard_gadget(c, pos.front());
  return c;
}

// Text format --------------------------------------------------------------

inline void write_circuit(std::ostream& os, const IqpCircuit& c) {
  auto list = [](const std::vector<int>& r) {
    std::string s;
    for (std::size_t i = 0; i < r.size(); ++i) s += (i ? "," : "") + std::to_string(r[i]);
    return s;
  };
  os << "qubits " << c.num_qubits << '\n';
  if (c.basis == IqpBasis::kX) os << "basis x\n";
  os << "out " << list(c.out_register) << '\n';
  if (!c.post_register.empty()) os << "post " << list(c.post_register) << '\n';
  for (const auto& g : c.gates) os << g.text() << '\n';
}

inline std::string circuit_text(const IqpCircuit& c) {
  std::ostringstream os;
  write_circuit(os, c);
  return os.str();
}

namespace detail {

inline int parse_qubit(const std::string& tok, int lineno) {
  std::size_t used = 0;
  int v = 0;
  try {
    v = std::stoi(tok, &used);
  } catch (const std::exception&) {
    throw ParseError(lineno, "expected a qubit index, got '" + tok + "'");
  }
  if (used != tok.size()) throw ParseError(lineno, "expected a qubit index, got '" + tok + "'");
  return v;
}

inline std::vector<int> parse_register(const std::string& text, int lineno) {
  std::vector<int> r;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    tok.erase(0, tok.find_first_not_of(" \t"));
    tok.erase(tok.find_last_not_of(" \t") + 1);
    if (tok.empty()) throw ParseError(lineno, "empty entry in register list");
    r.push_back(parse_qubit(tok, lineno));
  }
  return r;
}

}  // namespace detail

/// Parses the line format:
///   qubits N          (required, before any gate)
///   basis z|x         (optional, default z)
///   out 1,2           (optional, default all qubits)
///   post 3            (optional, default none)
///   H q | T q | Z q | CZ k j
/// Blank lines and text after '#' are ignored.
inline IqpCircuit read_circuit(std::istream& is) {
  IqpCircuit c;
  c.num_qubits = 0;
  bool have_out = false, have_post = false, have_basis = false;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::stringstream ss(line);
    std::string head;
    if (!(ss >> head)) continue;
    std::string rest;
    std::getline(ss, rest);
    std::stringstream args(rest);
    std::vector<std::string> toks;
    for (std::string t; args >> t;) toks.push_back(t);

    auto need = [&](std::size_t n) {
      if (toks.size() != n)
        throw ParseError(lineno, "'" + head + "' takes " + std::to_string(n) + " argument" + (n == 1 ? "" : "s"));
    };
    auto check_range = [&](int q) {
      if (q < 1 || q > c.num_qubits) throw ParseError(lineno, "qubit " + std::to_string(q) + " out of range");
      return q;
    };
    if (head == "qubits") {
      if (c.num_qubits != 0) throw ParseError(lineno, "duplicate 'qubits' header");
      need(1);
      c.num_qubits = detail::parse_qubit(toks[0], lineno);
      if (c.num_qubits < 1 || c.num_qubits > kMaxStateQubits) throw ParseError(lineno, "qubit count must be in [1, 20]");
      continue;
    }
    if (c.num_qubits == 0) throw ParseError(lineno, "'qubits N' must come first");
    if (head == "basis") {
      need(1);
      if (have_basis) throw ParseError(lineno, "duplicate 'basis' line");
      have_basis = true;
      if (toks[0] == "z" || toks[0] == "Z") {
        c.basis = IqpBasis::kZ;
      } else if (toks[0] == "x" || toks[0] == "X") {
        c.basis = IqpBasis::kX;
      } else {
        throw ParseError(lineno, "basis must be z or x");
      }
    } else if (head == "out" || head == "post") {
      bool& flag = head == "out" ? have_out : have_post;
      if (flag) throw ParseError(lineno, "duplicate '" + head + "' line");
      flag = true;
      auto reg = toks.empty() ? std::vector<int>{} : detail::parse_register(rest, lineno);
      for (int q : reg) check_range(q);
      (head == "out" ? c.out_register : c.post_register) = reg;
    } else if (head == "H" || head == "T" || head == "Z") {
      need(1);
      const int q = check_range(detail::parse_qubit(toks[0], lineno));
      c.gates.push_back({head == "H" ? GateKind::H : head == "T" ? GateKind::T : GateKind::Z, q, 0});
    } else if (head == "CZ") {
      need(2);
      const int k = check_range(detail::parse_qubit(toks[0], lineno));
      const int j = check_range(detail::parse_qubit(toks[1], lineno));
      if (k == j) throw ParseError(lineno, "CZ needs two distinct qubits");
      c.gates.push_back(IqpGate::cz(k, j));
    } else {
      throw ParseError(lineno, "unknown directive or gate '" + head + "'");
    }
  }
  if (c.num_qubits == 0) throw ParseError(lineno, "missing 'qubits N' header");
  if (!have_out) {
    for (int q = 1; q <= c.num_qubits; ++q)
      if (std::find(c.post_register.begin(), c.post_register.end(), q) == c.post_register.end())
        c.out_register.push_back(q);
  }
  try {
    c.validate();
  } catch (const Error& e) {
    throw ParseError(lineno, e.what());
  }
  return c;
}

inline IqpCircuit parse_circuit(const std::string& text) {
  std::istringstream is(text);
  return read_circuit(is);
}

// Compilation --------------------------------------------------------------

struct EulerZyz {
  double a = 0, b = 0, c = 0;  // U is proportional to RZ(a) RY(b) RZ(c)
};

/// ZYZ angles of a 2x2 unitary in this library's RY/RZ conventions.
inline EulerZyz euler_zyz(const ComplexMatrix& u) {
  if (u.rows() != 2 || u.cols() != 2) throw ShapeError("euler_zyz needs a 2x2 matrix");
  const Complex det = u.determinant();
  const ComplexMatrix v = u / std::sqrt(det);
  const Complex alpha = v(0, 0), beta = v(0, 1);
  EulerZyz e;
  e.b = 2 * std::atan2(std::abs(beta), std::abs(alpha));
  const double sum = std::abs(alpha) > 1e-15 ? std::arg(alpha) : 0.0;
  const double diff = std::abs(beta) > 1e-15 ? std::arg(beta) : 0.0;
  e.a = sum + diff;
  e.c = sum - diff;
  return e;
}

/// Which rule produced a block, and from which source gate.
struct BlockNote {
  std::size_t source_index = 0;
  std::string gate;
  std::string rule;
  friend bool operator==(const BlockNote&, const BlockNote&) = default;
};

struct CompiledMpqc {
  MpqcProgram program;
  std::vector<BlockNote> provenance;  // one per block
};

namespace detail {

using Layer = std::vector<double>;  // N x 7 block angles

inline Layer zero_layer(int n) { return Layer(static_cast<std::size_t>(n) * kSlotsPerQubit, 0.0); }

inline void set_slot(Layer& l, int q, int slot, double v) { l[static_cast<std::size_t>(q - 1) * kSlotsPerQubit + slot] = v; }

inline void set_euler(Layer& l, int q, const ComplexMatrix& u) {
  const auto e = euler_zyz(u);
  set_slot(l, q, kTheta1, e.a);
  set_slot(l, q, kTheta2, e.b);
  set_slot(l, q, kTheta3, e.c);
}

inline ComplexMatrix hadamard() { return make_gate(GateKind::H).entries(); }

// CNOT(1, x) = L . [RPHI(pi/2) on 1, M on x] . L . [F on x] followed by
// [S on x], with L the ladder. The other ladder CNOTs meet twice around a
// middle layer that commutes with them and cancel.
inline ComplexMatrix cnot_first() { return rz_matrix(-kPi / 2); }
inline ComplexMatrix cnot_middle() { return ry_matrix(kPi / 2) * rz_matrix(kPi / 2); }
inline ComplexMatrix cnot_last() { return ry_matrix(-kPi / 2); }
inline constexpr double kCnotControlPhase = kPi / 2;

struct Fragment {
  std::vector<Layer> layers;
  std::vector<std::string> rules;
};

// Sequence of CNOT(1, x_i) gates, each wrapped in optional H conjugation on
// a set of qubits: conj_i H . CNOT(1, x_i) . H conj_i. Rotations between
// consecutive ladders are fused per qubit and written as ZYZ angles.
struct ConjugatedCnot {
  int target;
  std::vector<int> conj;  // qubits wrapped in H on both sides
  std::string rule;
};

inline Fragment cnot_chain(int n, const std::vector<ConjugatedCnot>& chain) {
  const auto eye = ComplexMatrix::Identity(2, 2);
  std::vector<ComplexMatrix> pending(static_cast<std::size_t>(n) + 1, eye);  // accumulated 2x2 per qubit
  Fragment f;
  auto flush = [&](const std::string& rule, bool phase_on_control) {
    Layer l = zero_layer(n);
    for (int q = 1; q <= n; ++q) {
      if ((pending[q] - eye).cwiseAbs().maxCoeff() > 0) set_euler(l, q, pending[q]);
      pending[q] = eye;
    }
    if (phase_on_control) set_slot(l, 1, kPhi, kCnotControlPhase);
    f.layers.push_back(std::move(l));
    f.rules.push_back(rule);
  };
  for (const auto& g : chain) {
    for (int q : g.conj) pending[q] = hadamard() * pending[q];
    pending[g.target] = cnot_first() * pending[g.target];
    flush(g.rule + " (first ladder)", false);
    pending[g.target] = cnot_middle();
    flush(g.rule + " (second ladder)", true);
    pending[g.target] = cnot_last();
    for (int q : g.conj) pending[q] = hadamard() * pending[q];
  }
  flush("residual rotations", false);
  f.layers.push_back(zero_layer(n));
  f.rules.push_back("ladder cancellation");
  return f;
}

inline Fragment compile_fragment(const IqpGate& g, int n) {
  Fragment f;
  if (g.kind == GateKind::H || g.kind == GateKind::T || g.kind == GateKind::Z) {
    Layer l = zero_layer(n);
    if (g.kind == GateKind::H) {
      for (int s : {kTheta4, kTheta5, kTheta6}) set_slot(l, g.a, s, kPi / 2);
    } else {
      set_slot(l, g.a, kPhi, g.kind == GateKind::T ? kPi / 4 : kPi);
    }
    f.layers = {std::move(l), zero_layer(n)};
    f.rules = {g.kind == GateKind::H ? "hadamard rotations" : "phase rotation", "ladder cancellation"};
    return f;
  }
  if (g.kind != GateKind::CZ) throw CircuitError("cannot compile gate " + to_string(g.kind));
  int k = std::min(g.a, g.b), j = std::max(g.a, g.b);
  if (k == 1) return cnot_chain(n, {{j, {j}, "CZ(1," + std::to_string(j) + ") as H CNOT H"}});
  // CZ(k,j) = SWAP(1,k) CZ(1,j) SWAP(1,k); the CNOT(1,k) pair around CZ(1,j) commutes through and cancels.
  const std::string ks = std::to_string(k), js = std::to_string(j);
  return cnot_chain(n, {{k, {}, "swap(1," + ks + "): CNOT(1," + ks + ")"},
                        {k, {1, k}, "swap(1," + ks + "): CNOT(" + ks + ",1) as HH CNOT HH"},
                        {j, {j}, "CZ(1," + js + ") as H CNOT H"},
                        {k, {1, k}, "swap(1," + ks + "): CNOT(" + ks + ",1) as HH CNOT HH"},
                        {k, {}, "swap(1," + ks + "): CNOT(1," + ks + ")"}});
}

inline CompiledMpqc assemble(int n, std::vector<Layer> layers, std::vector<BlockNote> notes) {
  if (layers.empty()) {
    // Two bare ladders cancel.
    layers = {zero_layer(n), zero_layer(n)};
    notes = {{0, "", "identity"}, {0, "", "ladder cancellation"}};
  }
  std::vector<double> angles;
  for (const auto& l : layers) angles.insert(angles.end(), l.begin(), l.end());
  const int blocks = static_cast<int>(layers.size());
  return {MpqcProgram(n, AnsatzSpec::full_block(blocks), EntanglementPattern::ladder(n), std::move(angles)),
          std::move(notes)};
}

}  // namespace detail

/// MPQC blocks equal to one gate up to global phase, each block being
/// rotations followed by the CNOT(1,t) ladder.
inline CompiledMpqc compile_gate(const IqpGate& gate, int num_qubits) {
  IqpCircuit::on(num_qubits, {gate}).validate();
  const auto f = detail::compile_fragment(gate, num_qubits);
  std::vector<BlockNote> notes;
  for (const auto& r : f.rules) notes.push_back({0, gate.text(), r});
  return detail::assemble(num_qubits, f.layers, std::move(notes));
}

/// Gate-by-gate compilation of a Z-basis circuit. A run of H gates on
/// distinct qubits (such as either end of the normal form) shares one
/// rotation block and one cancellation block.
inline CompiledMpqc compile_iqp(const IqpCircuit& c) {
  c.validate();
  if (c.basis != IqpBasis::kZ) throw CircuitError("compile the Z-diagonal form; call to_z_diagonal_form first");
  const int n = c.num_qubits;
  std::vector<detail::Layer> layers;
  std::vector<BlockNote> notes;
  for (std::size_t i = 0; i < c.gates.size();) {
    const auto& g = c.gates[i];
    if (g.kind == GateKind::H) {
      detail::Layer l = detail::zero_layer(n);
      std::vector<bool> used(static_cast<std::size_t>(n) + 1, false);
      std::string text;
      const std::size_t first = i;
      for (; i < c.gates.size() && c.gates[i].kind == GateKind::H && !used[c.gates[i].a]; ++i) {
        used[c.gates[i].a] = true;
        for (int s : {kTheta4, kTheta5, kTheta6}) detail::set_slot(l, c.gates[i].a, s, kPi / 2);
        text += (text.empty() ? "" : "; ") + c.gates[i].text();
      }
      layers.push_back(std::move(l));
      layers.push_back(detail::zero_layer(n));
      notes.push_back({first, text, "hadamard rotations"});
      notes.push_back({first, text, "ladder cancellation"});
      continue;
    }
    const auto f = detail::compile_fragment(g, n);
    for (std::size_t b = 0; b < f.layers.size(); ++b) {
      layers.push_back(f.layers[b]);
      notes.push_back({i, g.text(), f.rules[b]});
    }
    ++i;
  }
  return detail::assemble(n, layers, std::move(notes));
}

/// 2(#H) + 2(#T, Z) + 14(#CZ) + 4.
inline std::size_t block_bound(const IqpCircuit& c) {
  std::size_t b = 4;
  for (const auto& g : c.gates) b += g.kind == GateKind::CZ ? 14 : 2;
  return b;
}

/// Multiplies the compiled unitary by exp(i t) through RZ(2t) RPHI(2t) = exp(i t) I
/// on qubit 1 of the last block, which must be rotation-free there.
inline CompiledMpqc with_global_phase(const CompiledMpqc& c, double t) {
  const auto& p = c.program;
  const int last = p.num_layers() - 1;
  for (int s = 0; s < kSlotsPerQubit; ++s)
    if (p.angle(last, 1, s) != 0.0) throw ParameterError("last block must be rotation-free on qubit 1");
  auto out = c;
  out.program = p.with_angle(p.index(last, 1, kTheta1), p.angle(last, 1, kTheta1) + 2 * t)
                    .with_angle(p.index(last, 1, kPhi), p.angle(last, 1, kPhi) + 2 * t);
  return out;
}

inline constexpr int kMaxVerifyUnitaryQubits = 8;
inline constexpr int kMaxVerifyDistributionQubits = 12;

struct VerificationReport {
  std::optional<Complex> phase;     // lambda with source ~ lambda * compiled
  std::optional<double> residual;   // max |U_source - lambda U_compiled|
  double distribution_tv = 0;       // TV between Born distributions from |0...0>
  bool passed(double unitary_tol = 1e-7, double tv_tol = 1e-9) const {
    return (!residual || *residual < unitary_tol) && distribution_tv < tv_tol;
  }
};

/// The compiled program against its source: unitary check for N <= 8 and
/// output-distribution check for N <= 12.
inline VerificationReport verify_compilation(const IqpCircuit& source, const CompiledMpqc& compiled) {
  const int n = source.num_qubits;
  if (compiled.program.num_qubits() != n) throw ShapeError("compiled program has a different qubit count");
  if (n > kMaxVerifyDistributionQubits) throw CapacityError("verification supports at most 12 qubits");
  VerificationReport r;
  const auto ops = circuit_ops(source);
  if (n <= kMaxVerifyUnitaryQubits) {
    const auto u = full_unitary(ops, n);
    const auto v = full_unitary(program_ops(compiled.program), n);
    Complex lambda;
    double res = 0;
    equal_up_to_global_phase(u, v, 1e-9, &lambda, &res);
    r.phase = lambda;
    r.residual = res;
  }
  r.distribution_tv =
      total_variation(probabilities(apply_gates(QuantumState(n), ops)), output_distribution(compiled.program));
  return r;
}

// Serialization ------------------------------------------------------------

inline nlohmann::json to_json(const CompiledMpqc& c) {
  nlohmann::json notes = nlohmann::json::array();
  for (const auto& n : c.provenance) notes.push_back({{"source_index", n.source_index}, {"gate", n.gate}, {"rule", n.rule}});
  return {{"program", to_json(c.program)}, {"provenance", notes}};
}

inline CompiledMpqc compiled_from_json(const nlohmann::json& j) {
  CompiledMpqc c{program_from_json(j.at("program")), {}};
  for (const auto& n : j.at("provenance"))
    c.provenance.push_back({n.at("source_index").get<std::size_t>(), n.at("gate").get<std::string>(),
                            n.at("rule").get<std::string>()});
  if (c.provenance.size() != static_cast<std::size_t>(c.program.num_layers()))
    throw ShapeError("provenance must have one entry per block");
  return c;
}

}  // namespace qborn

#endif  // QBORN_IQP_HPP
