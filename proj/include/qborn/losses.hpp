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


// Training objectives over Born-machine output distributions: multi-bandwidth
// Gaussian MMD, the non-saturating adversarial losses, and the coding-rate
// reduction Delta R, each with a parameter-shift gradient.

#ifndef QBORN_LOSSES_HPP
#define QBORN_LOSSES_HPP

#include <algorithm>
#include <bit>
#include <cmath>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "qborn/data_metrics.hpp"
#include "qborn/errors.hpp"
#include "qborn/mpqc.hpp"
#include "qborn/quantum_core.hpp"
#include "qborn/rng.hpp"

namespace qborn {

// Kernels ------------------------------------------------------------------

/// K(x, y) = (1/c) sum_i exp(-|x - y|^2 / (2 sigma_i)).
struct KernelSpec {
  std::vector<double> bandwidths{0.25, 1.0, 4.0};

  void validate() const {
    if (bandwidths.empty()) throw ParameterError("kernel needs at least one bandwidth");
    for (double s : bandwidths)
      if (!(s > 0.0) || !std::isfinite(s)) throw ParameterError("kernel bandwidths must be positive");
  }
  friend bool operator==(const KernelSpec&, const KernelSpec&) = default;
};

inline double gaussian_kernel_sq(double dist2, const KernelSpec& spec) {
  double k = 0;
  for (double s : spec.bandwidths) k += std::exp(-dist2 / (2 * s));
  return k / static_cast<double>(spec.bandwidths.size());
}

inline double gaussian_kernel(std::span<const double> x, std::span<const double> y, const KernelSpec& spec) {
  spec.validate();
  if (x.size() != y.size()) throw ShapeError("kernel arguments must have equal length");
  double d2 = 0;
  for (std::size_t i = 0; i < x.size(); ++i) d2 += (x[i] - y[i]) * (x[i] - y[i]);
  return gaussian_kernel_sq(d2, spec);
}

/// Bitstrings embedded as {0,1} vectors, so |x - y|^2 is the Hamming distance.
inline double gaussian_kernel(Bitstring x, Bitstring y, const KernelSpec& spec) {
  spec.validate();
  return gaussian_kernel_sq(static_cast<double>(std::popcount(x ^ y)), spec);
}

/// Gram table over all 2^n bitstrings.
inline Eigen::MatrixXd kernel_matrix(int num_bits, const KernelSpec& spec) {
  spec.validate();
  const Eigen::Index dim = Eigen::Index{1} << num_bits;
  Eigen::MatrixXd k(dim, dim);
  for (Eigen::Index x = 0; x < dim; ++x)
    for (Eigen::Index y = 0; y < dim; ++y)
      k(x, y) = gaussian_kernel_sq(static_cast<double>(std::popcount(static_cast<Bitstring>(x ^ y))), spec);
  return k;
}

inline Eigen::Map<const Eigen::VectorXd> as_eigen(const DiscreteDistribution& p) {
  return {p.masses().data(), static_cast<Eigen::Index>(p.size())};
}

// MMD ----------------------------------------------------------------------

/// Exact MMD^2 = (p - q)^T K (p - q) over the full support.
inline double mmd_loss(const DiscreteDistribution& p, const DiscreteDistribution& q, const Eigen::MatrixXd& k) {
  if (p.num_bits() != q.num_bits() || k.rows() != static_cast<Eigen::Index>(p.size()))
    throw ShapeError("MMD operands have mismatched dimensions");
  const Eigen::VectorXd d = as_eigen(p) - as_eigen(q);
  return d.dot(k * d);
}

inline double mmd_loss(const DiscreteDistribution& p, const DiscreteDistribution& q, const KernelSpec& spec) {
  return mmd_loss(p, q, kernel_matrix(p.num_bits(), spec));
}

/// Plug-in V-statistic: mean K(x,x') - 2 mean K(x,y) + mean K(y,y'),
/// including the i = j terms.
inline double mmd_loss(std::span<const Bitstring> xs, std::span<const Bitstring> ys, const KernelSpec& spec) {
  if (xs.empty() || ys.empty()) throw ParameterError("MMD needs non-empty sample sets");
  spec.validate();
  auto mean_k = [&](std::span<const Bitstring> a, std::span<const Bitstring> b) {
    double s = 0;
    for (Bitstring x : a)
      for (Bitstring y : b) s += gaussian_kernel_sq(static_cast<double>(std::popcount(x ^ y)), spec);
    return s / (static_cast<double>(a.size()) * static_cast<double>(b.size()));
  };
  return mean_k(xs, xs) - 2 * mean_k(xs, ys) + mean_k(ys, ys);
}

/// d MMD^2 / d theta = (p+ - p-)^T K (p - target).
inline double mmd_gradient(const ShiftedPair& s, const DiscreteDistribution& p, const DiscreteDistribution& target,
                           const Eigen::MatrixXd& k) {
  return (as_eigen(s.plus) - as_eigen(s.minus)).dot(k * (as_eigen(p) - as_eigen(target)));
}

inline double mmd_gradient(const MpqcProgram& program, std::size_t flat, const DiscreteDistribution& target,
                           const KernelSpec& spec) {
  const auto k = kernel_matrix(program.num_qubits(), spec);
  return mmd_gradient(shifted_distributions(program, flat), output_distribution(program), target, k);
}

/// Batches of `batch` draws from p+, p-, p and the data; the four kernel
/// expectations are replaced by their sample means. Unbiased.
inline double mmd_gradient_sampled(const ShiftedPair& s, const DiscreteDistribution& p,
                                   const DiscreteDistribution& data, const Eigen::MatrixXd& k, std::size_t batch,
                                   Rng& rng) {
  if (batch < 1) throw ParameterError("batch size must be at least 1");
  const auto ep = empirical_distribution(Sampler(s.plus).draw(batch, rng), s.plus.num_bits());
  const auto em = empirical_distribution(Sampler(s.minus).draw(batch, rng), s.minus.num_bits());
  const auto ey = empirical_distribution(Sampler(p).draw(batch, rng), p.num_bits());
  const auto ed = empirical_distribution(Sampler(data).draw(batch, rng), data.num_bits());
  return (as_eigen(ep) - as_eigen(em)).dot(k * (as_eigen(ey) - as_eigen(ed)));
}

inline double mmd_gradient_sampled(const MpqcProgram& program, std::size_t flat, const DiscreteDistribution& data,
                                   const KernelSpec& spec, std::size_t batch, Rng& rng) {
  const auto k = kernel_matrix(program.num_qubits(), spec);
  return mmd_gradient_sampled(shifted_distributions(program, flat), output_distribution(program), data, k, batch,
                              rng);
}

// Non-saturating GAN -------------------------------------------------------

inline constexpr double kScoreClamp = 1e-7;

inline double clamp_score(double d) { return std::clamp(d, kScoreClamp, 1.0 - kScoreClamp); }

struct GanLosses {
  double discriminator = 0;  // -E ln D(real) - E ln(1 - D(fake))
  double generator = 0;      // -E ln D(fake)
};

inline GanLosses gan_losses(std::span<const double> d_real, std::span<const double> d_fake) {
  if (d_real.empty() || d_fake.empty()) throw ParameterError("GAN losses need non-empty score lists");
  double lr = 0, lf = 0, lg = 0;
  for (double d : d_real) lr += std::log(clamp_score(d));
  for (double d : d_fake) {
    lf += std::log(1.0 - clamp_score(d));
    lg += std::log(clamp_score(d));
  }
  const double nr = static_cast<double>(d_real.size()), nf = static_cast<double>(d_fake.size());
  return {-lr / nr - lf / nf, -lg / nf};
}

/// Expected-value losses for distributions over the support; `scores` is D(x)
/// for every bitstring x.
inline GanLosses gan_losses(const DiscreteDistribution& real, const DiscreteDistribution& fake,
                            std::span<const double> scores) {
  if (scores.size() != real.size() || scores.size() != fake.size()) throw ShapeError("score table size mismatch");
  GanLosses l;
  for (std::size_t x = 0; x < scores.size(); ++x) {
    const double d = clamp_score(scores[x]);
    l.discriminator -= real[x] * std::log(d) + fake[x] * std::log(1 - d);
    l.generator -= fake[x] * std::log(d);
  }
  return l;
}

/// d L_G / d theta = 1/2 E_{p-}[ln D] - 1/2 E_{p+}[ln D].
inline double gan_generator_gradient(const ShiftedPair& s, std::span<const double> scores) {
  if (scores.size() != s.plus.size()) throw ShapeError("score table size mismatch");
  double g = 0;
  for (std::size_t x = 0; x < scores.size(); ++x) g += 0.5 * (s.minus[x] - s.plus[x]) * std::log(clamp_score(scores[x]));
  return g;
}

inline double gan_generator_gradient(const MpqcProgram& program, std::size_t flat, std::span<const double> scores) {
  return gan_generator_gradient(shifted_distributions(program, flat), scores);
}

inline double gan_generator_gradient_sampled(const ShiftedPair& s, std::span<const double> scores, std::size_t batch,
                                             Rng& rng) {
  if (batch < 1) throw ParameterError("batch size must be at least 1");
  if (scores.size() != s.plus.size()) throw ShapeError("score table size mismatch");
  double g = 0;
  for (Bitstring x : Sampler(s.minus).draw(batch, rng)) g += std::log(clamp_score(scores[x]));
  for (Bitstring x : Sampler(s.plus).draw(batch, rng)) g -= std::log(clamp_score(scores[x]));
  return 0.5 * g / static_cast<double>(batch);
}

inline double gan_generator_gradient_sampled(const MpqcProgram& program, std::size_t flat,
                                             std::span<const double> scores, std::size_t batch, Rng& rng) {
  return gan_generator_gradient_sampled(shifted_distributions(program, flat), scores, batch, rng);
}

// Coding-rate reduction ----------------------------------------------------

struct McrConfig {
  int feature_dim = 2;  // d
  double eps2 = 0.5;    // epsilon^2

  void validate() const {
    if (feature_dim < 1) throw ParameterError("MCR feature dimension must be at least 1");
    if (!(eps2 > 0.0)) throw ParameterError("MCR epsilon^2 must be positive");
  }
  friend bool operator==(const McrConfig&, const McrConfig&) = default;
};

/// log det of a symmetric positive-definite matrix via Cholesky.
inline double logdet_spd(const Eigen::MatrixXd& a) {
  Eigen::LLT<Eigen::MatrixXd> llt(a);
  if (llt.info() != Eigen::Success) throw ParameterError("matrix is not positive definite");
  return 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
}

/// Delta R for feature batches X, Y of shape d x m (one column per sample).
inline double mcr_delta_r(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, const McrConfig& cfg) {
  cfg.validate();
  if (x.rows() != y.rows() || x.cols() != y.cols() || x.cols() == 0)
    throw ShapeError("MCR batches must both be d x m with m >= 1");
  const double c = static_cast<double>(cfg.feature_dim) / (static_cast<double>(x.cols()) * cfg.eps2);
  const auto eye = Eigen::MatrixXd::Identity(x.rows(), x.rows());
  const Eigen::MatrixXd xx = x * x.transpose(), yy = y * y.transpose();
  return 0.5 * logdet_spd(eye + 0.5 * c * (xx + yy)) - 0.25 * logdet_spd(eye + c * xx) -
         0.25 * logdet_spd(eye + c * yy);
}

/// Rows are phi(x) for every bitstring x; 2^n x d.
using FeatureTable = Eigen::MatrixXd;

/// sum_x p(x) phi(x) phi(x)^T.
inline Eigen::MatrixXd feature_covariance(const DiscreteDistribution& p, const FeatureTable& phi) {
  if (phi.rows() != static_cast<Eigen::Index>(p.size())) throw ShapeError("feature table must have 2^n rows");
  return phi.transpose() * as_eigen(p).asDiagonal() * phi;
}

namespace detail {

struct McrResolvents {
  Eigen::MatrixXd a_inv, b_inv, c_inv;  // (I + cA(Sp + Sq))^-1, (I + cB Sp)^-1, (I + cB Sq)^-1
  double ca = 0, cb = 0;
};

inline McrResolvents mcr_resolvents(const Eigen::MatrixXd& sp, const Eigen::MatrixXd& sq, const McrConfig& cfg) {
  McrResolvents r;
  r.ca = cfg.feature_dim / (2 * cfg.eps2);
  r.cb = cfg.feature_dim / cfg.eps2;
  const auto eye = Eigen::MatrixXd::Identity(sp.rows(), sp.cols());
  r.a_inv = (eye + r.ca * (sp + sq)).llt().solve(eye);
  r.b_inv = (eye + r.cb * sp).llt().solve(eye);
  r.c_inv = (eye + r.cb * sq).llt().solve(eye);
  return r;
}

}  // namespace detail

/// Population Delta R, the m -> infinity limit of mcr_delta_r.
inline double mcr_delta_r_probability(const DiscreteDistribution& p, const DiscreteDistribution& q,
                                      const FeatureTable& phi, const McrConfig& cfg) {
  cfg.validate();
  if (p.num_bits() != q.num_bits()) throw ShapeError("distributions must have equal width");
  const Eigen::MatrixXd sp = feature_covariance(p, phi), sq = feature_covariance(q, phi);
  const double ca = cfg.feature_dim / (2 * cfg.eps2), cb = cfg.feature_dim / cfg.eps2;
  const auto eye = Eigen::MatrixXd::Identity(sp.rows(), sp.cols());
  return 0.5 * logdet_spd(eye + ca * (sp + sq)) - 0.25 * logdet_spd(eye + cb * sp) - 0.25 * logdet_spd(eye + cb * sq);
}

/// d Delta R / d theta through the feature-space resolvents:
/// (d / 4 eps^2) sum_x dp(x) [phi^T A^-1 phi - phi^T B^-1 phi],
/// with dp = (p+ - p-) / 2, A = I + d/(2 eps^2)(Sp + Sq), B = I + (d/eps^2) Sp.
/// `p` and `q` give the covariances; `plus` and `minus` weight the sum.
inline double mcr_gradient_nn(const DiscreteDistribution& plus, const DiscreteDistribution& minus,
                              const DiscreteDistribution& p, const DiscreteDistribution& q, const FeatureTable& phi,
                              const McrConfig& cfg) {
  cfg.validate();
  const auto r = detail::mcr_resolvents(feature_covariance(p, phi), feature_covariance(q, phi), cfg);
  const double scale = cfg.feature_dim / (4 * cfg.eps2);
  double g = 0;
  for (Eigen::Index x = 0; x < phi.rows(); ++x) {
    const double dp = 0.5 * (plus[static_cast<Bitstring>(x)] - minus[static_cast<Bitstring>(x)]);
    if (dp == 0.0) continue;
    const Eigen::VectorXd f = phi.row(x).transpose();
    g += dp * scale * (f.dot(r.a_inv * f) - f.dot(r.b_inv * f));
  }
  return g;
}

inline double mcr_gradient_nn(const MpqcProgram& program, std::size_t flat, const FeatureTable& phi,
                              const DiscreteDistribution& target, const McrConfig& cfg) {
  const auto s = shifted_distributions(program, flat);
  return mcr_gradient_nn(s.plus, s.minus, output_distribution(program), target, phi, cfg);
}

/// Sampled estimate: empirical distributions of `batch` draws each from p+,
/// p-, p and the data, in that order.
struct McrBatches {
  DiscreteDistribution plus, minus, model, data;
  std::vector<Bitstring> plus_draws, minus_draws, model_draws, data_draws;
};

inline McrBatches draw_mcr_batches(const ShiftedPair& s, const DiscreteDistribution& p,
                                   const DiscreteDistribution& data, std::size_t batch, Rng& rng) {
  if (batch < 1) throw ParameterError("batch size must be at least 1");
  McrBatches b;
  b.plus_draws = Sampler(s.plus).draw(batch, rng);
  b.minus_draws = Sampler(s.minus).draw(batch, rng);
  b.model_draws = Sampler(p).draw(batch, rng);
  b.data_draws = Sampler(data).draw(batch, rng);
  const int n = p.num_bits();
  b.plus = empirical_distribution(b.plus_draws, n);
  b.minus = empirical_distribution(b.minus_draws, n);
  b.model = empirical_distribution(b.model_draws, n);
  b.data = empirical_distribution(b.data_draws, n);
  return b;
}

inline double mcr_gradient_nn_sampled(const MpqcProgram& program, std::size_t flat, const FeatureTable& phi,
                                      const DiscreteDistribution& data, const McrConfig& cfg, std::size_t batch,
                                      Rng& rng) {
  const auto b = draw_mcr_batches(shifted_distributions(program, flat), output_distribution(program), data, batch, rng);
  return mcr_gradient_nn(b.plus, b.minus, b.model, b.data, phi, cfg);
}

/// d Delta R / d phi(x) for every support point (2^n x d), used to train
/// the feature map: (d / 2 eps^2) [(p + q)(x) A^-1 - p(x) B^-1 - q(x) C^-1] phi(x).
inline FeatureTable mcr_feature_gradient(const DiscreteDistribution& p, const DiscreteDistribution& q,
                                         const FeatureTable& phi, const McrConfig& cfg) {
  cfg.validate();
  const auto r = detail::mcr_resolvents(feature_covariance(p, phi), feature_covariance(q, phi), cfg);
  FeatureTable g(phi.rows(), phi.cols());
  for (Eigen::Index x = 0; x < phi.rows(); ++x) {
    const double px = p[static_cast<Bitstring>(x)], qx = q[static_cast<Bitstring>(x)];
    const Eigen::VectorXd f = phi.row(x).transpose();
    g.row(x) = (r.ca * ((px + qx) * (r.a_inv * f) - px * (r.b_inv * f) - qx * (r.c_inv * f))).transpose();
  }
  return g;
}

// Kernel form --------------------------------------------------------------

/// Points with weights; the implied covariance is sum_i w_i phi(x_i) phi(x_i)^T.
struct WeightedPoints {
  std::vector<Bitstring> points;
  std::vector<double> weights;

  /// Support points with their probabilities (zero-mass points dropped).
  static WeightedPoints from_distribution(const DiscreteDistribution& p) {
    WeightedPoints w;
    for (Bitstring x = 0; x < p.size(); ++x)
      if (p[x] > 0) {
        w.points.push_back(x);
        w.weights.push_back(p[x]);
      }
    return w;
  }
  /// One point per draw, weight 1/m each.
  static WeightedPoints from_draws(std::span<const Bitstring> draws) {
    WeightedPoints w;
    w.points.assign(draws.begin(), draws.end());
    w.weights.assign(draws.size(), 1.0 / static_cast<double>(draws.size()));
    return w;
  }
  static WeightedPoints concat(const WeightedPoints& a, const WeightedPoints& b) {
    WeightedPoints w = a;
    w.points.insert(w.points.end(), b.points.begin(), b.points.end());
    w.weights.insert(w.weights.end(), b.weights.begin(), b.weights.end());
    return w;
  }
};

namespace detail {

// phi^T (I + c M M^T)^-1 phi = k(x,x) - c k_M^T (I + c M^T M)^-1 k_M with
// M = [sqrt(w_i) phi(x_i)], M^T M = W^1/2 G W^1/2 and k_M[i] = sqrt(w_i) k(x_i, x).
class KernelResolvent {
 public:
  KernelResolvent(const WeightedPoints& pts, const Eigen::MatrixXd& gram, double c) : pts_(pts), gram_(gram), c_(c) {
    const Eigen::Index m = static_cast<Eigen::Index>(pts.points.size());
    sw_.resize(m);
    for (Eigen::Index i = 0; i < m; ++i) sw_(i) = std::sqrt(pts.weights[static_cast<std::size_t>(i)]);
    Eigen::MatrixXd s(m, m);
    for (Eigen::Index i = 0; i < m; ++i)
      for (Eigen::Index j = 0; j < m; ++j)
        s(i, j) = sw_(i) * sw_(j) * gram(static_cast<Eigen::Index>(pts.points[i]), static_cast<Eigen::Index>(pts.points[j]));
    small_ = Eigen::MatrixXd::Identity(m, m) + c * s;
    llt_.compute(small_);
    if (m > 0) {
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(small_, Eigen::EigenvaluesOnly);
      condition_ = eig.eigenvalues().maxCoeff() / eig.eigenvalues().minCoeff();
    }
  }

  double quad(Bitstring x) const {
    const Eigen::Index m = sw_.size();
    const Eigen::Index xi = static_cast<Eigen::Index>(x);
    double kxx = gram_(xi, xi);
    if (m == 0) return kxx;
    Eigen::VectorXd km(m);
    for (Eigen::Index i = 0; i < m; ++i) km(i) = sw_(i) * gram_(static_cast<Eigen::Index>(pts_.points[i]), xi);
    return kxx - c_ * km.dot(llt_.solve(km));
  }

  /// log det(I + c M M^T) = log det(I + c M^T M).
  double logdet() const { return sw_.size() ? logdet_spd(small_) : 0.0; }
  double condition_number() const { return condition_; }

 private:
  const WeightedPoints& pts_;
  const Eigen::MatrixXd& gram_;
  double c_;
  Eigen::VectorXd sw_;
  Eigen::MatrixXd small_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
  double condition_ = 1.0;
};

}  // namespace detail

struct KernelGradient {
  double value = 0;
  double condition_number = 1;  // worst of the two Gram resolvents
  bool ill_conditioned() const { return condition_number > 1e12; }
};

/// Delta R expressed through a Gram table `gram` over all bitstrings.
inline double mcr_delta_r_kernel(const WeightedPoints& p, const WeightedPoints& q, const Eigen::MatrixXd& gram,
                                 const McrConfig& cfg) {
  cfg.validate();
  const double ca = cfg.feature_dim / (2 * cfg.eps2), cb = cfg.feature_dim / cfg.eps2;
  const auto pq = WeightedPoints::concat(p, q);
  return 0.5 * detail::KernelResolvent(pq, gram, ca).logdet() - 0.25 * detail::KernelResolvent(p, gram, cb).logdet() -
         0.25 * detail::KernelResolvent(q, gram, cb).logdet();
}

/// Same gradient as mcr_gradient_nn, using only kernel evaluations: the
/// resolvents act on Gram matrices of the combined points (for A) and of the
/// model points (for B). `delta` holds the weights dp(x) of the outer sum.
inline KernelGradient mcr_gradient_kernel(const WeightedPoints& delta, const WeightedPoints& model,
                                          const WeightedPoints& data, const Eigen::MatrixXd& gram,
                                          const McrConfig& cfg) {
  cfg.validate();
  const double ca = cfg.feature_dim / (2 * cfg.eps2), cb = cfg.feature_dim / cfg.eps2;
  const auto combined = WeightedPoints::concat(model, data);
  const detail::KernelResolvent a(combined, gram, ca), b(model, gram, cb);
  KernelGradient g;
  g.condition_number = std::max(a.condition_number(), b.condition_number());
  const double scale = cfg.feature_dim / (4 * cfg.eps2);
  for (std::size_t i = 0; i < delta.points.size(); ++i)
    g.value += delta.weights[i] * scale * (a.quad(delta.points[i]) - b.quad(delta.points[i]));
  return g;
}

namespace detail {

inline WeightedPoints shift_weights(const DiscreteDistribution& plus, const DiscreteDistribution& minus) {
  WeightedPoints w;
  for (Bitstring x = 0; x < plus.size(); ++x) {
    const double d = 0.5 * (plus[x] - minus[x]);
    if (d != 0.0) {
      w.points.push_back(x);
      w.weights.push_back(d);
    }
  }
  return w;
}

}  // namespace detail

inline KernelGradient mcr_gradient_kernel(const MpqcProgram& program, std::size_t flat, const Eigen::MatrixXd& gram,
                                          const DiscreteDistribution& target, const McrConfig& cfg) {
  const auto s = shifted_distributions(program, flat);
  return mcr_gradient_kernel(detail::shift_weights(s.plus, s.minus),
                             WeightedPoints::from_distribution(output_distribution(program)),
                             WeightedPoints::from_distribution(target), gram, cfg);
}

inline KernelGradient mcr_gradient_kernel(const MpqcProgram& program, std::size_t flat, const KernelSpec& spec,
                                          const DiscreteDistribution& target, const McrConfig& cfg) {
  return mcr_gradient_kernel(program, flat, kernel_matrix(program.num_qubits(), spec), target, cfg);
}

/// Sampled kernel form: the Gram resolvents are built on the raw draws
/// (2m x 2m for A, m x m for B). Draw order matches mcr_gradient_nn_sampled.
inline KernelGradient mcr_gradient_kernel_sampled(const MpqcProgram& program, std::size_t flat,
                                                  const Eigen::MatrixXd& gram, const DiscreteDistribution& data,
                                                  const McrConfig& cfg, std::size_t batch, Rng& rng) {
  const auto b = draw_mcr_batches(shifted_distributions(program, flat), output_distribution(program), data, batch, rng);
  return mcr_gradient_kernel(detail::shift_weights(b.plus, b.minus), WeightedPoints::from_draws(b.model_draws),
                             WeightedPoints::from_draws(b.data_draws), gram, cfg);
}

/// Linear-kernel Gram table phi phi^T, the bridge between the two forms.
inline Eigen::MatrixXd linear_gram(const FeatureTable& phi) { return phi * phi.transpose(); }

}  // namespace qborn

#endif  // QBORN_LOSSES_HPP
