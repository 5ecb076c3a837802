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


#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "qborn/losses.hpp"
#include "test_support.hpp"

namespace qborn {
namespace {

using testing::central_difference;
using testing::random_full_program;

DiscreteDistribution random_distribution(int bits, Rng& rng) {
  std::vector<double> w(std::size_t{1} << bits);
  for (double& v : w) v = rng.uniform();
  return DiscreteDistribution::normalized(bits, w);
}

FeatureTable random_features(int bits, int d, Rng& rng) {
  FeatureTable phi(1 << bits, d);
  for (Eigen::Index i = 0; i < phi.size(); ++i) phi.data()[i] = rng.normal();
  return phi;
}

// theta6 = theta4 = 0 on qubit 1 of layer 0, so RZ(theta5) only sees |0>.
std::pair<MpqcProgram, std::size_t> inert_parameter(std::uint64_t seed) {
  auto p = random_full_program(3, 2, seed);
  p = p.with_angle(p.index(0, 1, kTheta6), 0.0).with_angle(p.index(0, 1, kTheta4), 0.0);
  return {p, p.index(0, 1, kTheta5)};
}

// Oracle: V-statistic by brute force over the sample lists.
double mmd_brute(const std::vector<Bitstring>& xs, const std::vector<Bitstring>& ys, int n, const KernelSpec& spec) {
  auto k = [&](Bitstring a, Bitstring b) {
    return gaussian_kernel(bits_as_reals(a, n), bits_as_reals(b, n), spec);
  };
  double sxx = 0, sxy = 0, syy = 0;
  for (auto a : xs)
    for (auto b : xs) sxx += k(a, b);
  for (auto a : xs)
    for (auto b : ys) sxy += k(a, b);
  for (auto a : ys)
    for (auto b : ys) syy += k(a, b);
  const double m = xs.size(), l = ys.size();
  return sxx / (m * m) - 2 * sxy / (m * l) + syy / (l * l);
}

TEST(GaussianKernel, SelfIsOne) {
  Rng rng(1);
  for (int i = 0; i < 20; ++i) {
    const Bitstring x = rng.below(16);
    EXPECT_DOUBLE_EQ(gaussian_kernel(x, x, KernelSpec{}), 1.0);
  }
}

TEST(GaussianKernel, HammingOne) {
  const KernelSpec one{{1.0}};
  EXPECT_NEAR(gaussian_kernel(bits_as_reals(0b0000, 4), bits_as_reals(0b1000, 4), one), std::exp(-0.5), 1e-15);
  EXPECT_NEAR(gaussian_kernel(Bitstring{0b0000}, Bitstring{0b1000}, one), 0.60653065971263342, 1e-15);
}

TEST(GaussianKernel, SymmetricAndBitAgnostic) {
  Rng rng(2);
  const KernelSpec spec;
  for (int i = 0; i < 50; ++i) {
    const Bitstring x = rng.below(16), y = rng.below(16);
    EXPECT_EQ(gaussian_kernel(x, y, spec), gaussian_kernel(y, x, spec));
    EXPECT_NEAR(gaussian_kernel(x, y, spec), gaussian_kernel(bits_as_reals(x, 4), bits_as_reals(y, 4), spec), 1e-15);
  }
}

TEST(GaussianKernel, Validation) {
  EXPECT_THROW(gaussian_kernel(Bitstring{0}, Bitstring{1}, KernelSpec{{}}), ParameterError);
  EXPECT_THROW(gaussian_kernel(Bitstring{0}, Bitstring{1}, KernelSpec{{1.0, -1.0}}), ParameterError);
  EXPECT_THROW(gaussian_kernel(std::vector<double>{0, 1}, std::vector<double>{0}, KernelSpec{}), ShapeError);
}

TEST(MmdLoss, ExactSelfIsZero) {
  Rng rng(3);
  const auto p = random_distribution(4, rng);
  EXPECT_NEAR(mmd_loss(p, p, KernelSpec{}), 0.0, 1e-12);
}

TEST(MmdLoss, SampleSelfIsZero) {
  const std::vector<Bitstring> s{1, 4, 4, 9, 15};
  EXPECT_NEAR(mmd_loss(s, s, KernelSpec{}), 0.0, 1e-15);
}

TEST(MmdLoss, OneBitClosedForm) {
  const auto p = DiscreteDistribution::point_mass(1, 0), q = DiscreteDistribution::point_mass(1, 1);
  EXPECT_NEAR(mmd_loss(p, q, KernelSpec{{1.0}}), 2 * (1 - std::exp(-0.5)), 1e-15);
  EXPECT_NEAR(mmd_loss(p, q, KernelSpec{{1.0}}), 0.78693868057473315, 1e-15);
}

TEST(MmdLoss, VStatisticMatchesBruteForce) {
  Rng rng(4);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<Bitstring> xs(7), ys(11);
    for (auto& x : xs) x = rng.below(16);
    for (auto& y : ys) y = rng.below(16);
    EXPECT_NEAR(mmd_loss(xs, ys, KernelSpec{}), mmd_brute(xs, ys, 4, KernelSpec{}), 1e-12);
    EXPECT_NEAR(mmd_loss(xs, ys, KernelSpec{}),
                mmd_loss(empirical_distribution(xs, 4), empirical_distribution(ys, 4), KernelSpec{}), 1e-12);
  }
  EXPECT_THROW(mmd_loss(std::vector<Bitstring>{}, std::vector<Bitstring>{1}, KernelSpec{}), ParameterError);
}

TEST(MmdLoss, ExactIsSquaredPseudometricOnFourBits) {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const auto p = random_distribution(4, rng), q = random_distribution(4, rng);
    EXPECT_GT(mmd_loss(p, q, KernelSpec{}), 0.0);
  }
  // Strict positive definiteness of the Gram table: smallest eigenvalue > 0.
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(kernel_matrix(4, KernelSpec{}));
  EXPECT_GT(eig.eigenvalues().minCoeff(), 1e-6);
}

TEST(MmdGradient, InertParameterIsZero) {
  const auto [p, i] = inert_parameter(3);
  EXPECT_NEAR(mmd_gradient(p, i, bas_distribution({1, 3}), KernelSpec{}), 0.0, 1e-14);
}

TEST(MmdGradient, MatchesFiniteDifference) {
  const auto target = bas_distribution({1, 3});
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const auto p = random_full_program(3, 2, seed);
    for (std::size_t i : p.active_indices()) {
      const double fd = central_difference(p, i, [&](const MpqcProgram& q) {
        return mmd_loss(output_distribution(q), target, KernelSpec{});
      });
      EXPECT_NEAR(mmd_gradient(p, i, target, KernelSpec{}), fd, 1e-6);
    }
  }
}

TEST(MmdGradient, SampledIsUnbiased) {
  const auto target = bas_distribution({1, 3});
  const auto p = random_full_program(3, 2, 8);
  const std::size_t i = p.active_indices()[10];
  const double exact = mmd_gradient(p, i, target, KernelSpec{});
  Rng rng(9);
  const int reps = 200;
  double sum = 0, sum2 = 0;
  for (int r = 0; r < reps; ++r) {
    const double g = mmd_gradient_sampled(p, i, target, KernelSpec{}, 16, rng);
    sum += g;
    sum2 += g * g;
  }
  const double mean = sum / reps, se = std::sqrt((sum2 / reps - mean * mean) / reps);
  EXPECT_LT(std::abs(mean - exact), 3 * se);
}

TEST(GanLosses, HalfScores) {
  const std::vector<double> half(5, 0.5);
  const auto l = gan_losses(half, half);
  EXPECT_NEAR(l.discriminator, 2 * std::log(2.0), 1e-15);
  EXPECT_NEAR(l.generator, std::log(2.0), 1e-15);
  EXPECT_NEAR(l.discriminator, 1.3862943611198906, 1e-15);
}

TEST(GanLosses, ConfidentFakeDrivesGeneratorLossToZero) {
  const std::vector<double> real{0.5};
  double prev = 1e9;
  for (double d : {0.9, 0.99, 0.999999, 1.0}) {
    const double lg = gan_losses(real, std::vector<double>{d}).generator;
    EXPECT_GE(lg, 0.0);
    EXPECT_LT(lg, prev);
    prev = lg;
  }
  EXPECT_LT(prev, 1e-6);
  EXPECT_TRUE(std::isfinite(gan_losses(std::vector<double>{0.0}, std::vector<double>{1.0}).discriminator));
}

TEST(GanLosses, PermutationInvariant) {
  const std::vector<double> r{0.1, 0.7, 0.4}, f{0.3, 0.9}, r2{0.4, 0.1, 0.7}, f2{0.9, 0.3};
  EXPECT_NEAR(gan_losses(r, f).discriminator, gan_losses(r2, f2).discriminator, 1e-15);
}

TEST(GanGradient, ConstantDiscriminatorGivesZero) {
  const auto p = random_full_program(3, 2, 4);
  const std::vector<double> half(8, 0.5);
  for (std::size_t i : p.active_indices()) EXPECT_NEAR(gan_generator_gradient(p, i, half), 0.0, 1e-15);
}

TEST(GanGradient, MatchesFiniteDifference) {
  Rng rng(10);
  std::vector<double> scores(8);
  for (double& s : scores) s = rng.uniform(0.05, 0.95);
  const auto p = random_full_program(3, 2, 5);
  for (std::size_t i : p.active_indices()) {
    const double fd = central_difference(p, i, [&](const MpqcProgram& q) {
      const auto d = output_distribution(q);
      double l = 0;
      for (std::size_t x = 0; x < 8; ++x) l -= d[x] * std::log(scores[x]);
      return l;
    });
    EXPECT_NEAR(gan_generator_gradient(p, i, scores), fd, 1e-6);
  }
}

TEST(GanGradient, SampledIsUnbiased) {
  Rng rng(11);
  std::vector<double> scores(8);
  for (double& s : scores) s = rng.uniform(0.05, 0.95);
  const auto p = random_full_program(3, 2, 6);
  const std::size_t i = p.active_indices()[4];
  const double exact = gan_generator_gradient(p, i, scores);
  double sum = 0, sum2 = 0;
  const int reps = 200;
  for (int r = 0; r < reps; ++r) {
    const double g = gan_generator_gradient_sampled(p, i, scores, 16, rng);
    sum += g;
    sum2 += g * g;
  }
  const double mean = sum / reps, se = std::sqrt((sum2 / reps - mean * mean) / reps);
  EXPECT_LT(std::abs(mean - exact), 3 * se);
}

TEST(McrDeltaR, EqualBatchesGiveZero) {
  Rng rng(12);
  Eigen::MatrixXd x(2, 5);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
  EXPECT_NEAR(mcr_delta_r(x, x, McrConfig{}), 0.0, 1e-12);
}

TEST(McrDeltaR, ScalarClosedForm) {
  const Eigen::MatrixXd x = Eigen::MatrixXd::Constant(1, 1, 1.0), y = Eigen::MatrixXd::Zero(1, 1);
  const McrConfig cfg{1, 1.0};
  EXPECT_NEAR(mcr_delta_r(x, y, cfg), 0.5 * std::log(1.5) - 0.25 * std::log(2.0), 1e-15);
  EXPECT_NEAR(mcr_delta_r(x, y, cfg), 0.02940, 1e-4);
}

TEST(McrDeltaR, NonNegativeSymmetricRotationInvariant) {
  Rng rng(13);
  for (int trial = 0; trial < 50; ++trial) {
    Eigen::MatrixXd x(3, 6), y(3, 6), r(3, 3);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
    for (Eigen::Index i = 0; i < y.size(); ++i) y.data()[i] = rng.normal();
    for (Eigen::Index i = 0; i < r.size(); ++i) r.data()[i] = rng.normal();
    const Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(r).householderQ();
    const McrConfig cfg{3, 0.5};
    const double v = mcr_delta_r(x, y, cfg);
    EXPECT_GE(v, -1e-10);
    EXPECT_NEAR(v, mcr_delta_r(y, x, cfg), 1e-12);
    EXPECT_NEAR(v, mcr_delta_r(q * x, q * y, cfg), 1e-10);
  }
  EXPECT_THROW(mcr_delta_r(Eigen::MatrixXd(2, 3), Eigen::MatrixXd(2, 4), McrConfig{}), ShapeError);
}

TEST(McrProbability, EqualDistributionsGiveZero) {
  Rng rng(14);
  const auto p = random_distribution(3, rng);
  EXPECT_NEAR(mcr_delta_r_probability(p, p, random_features(3, 2, rng), McrConfig{}), 0.0, 1e-12);
}

TEST(McrProbability, LargeBatchLimit) {
  Rng rng(15);
  const auto p = random_distribution(3, rng), q = random_distribution(3, rng);
  const auto phi = random_features(3, 2, rng);
  const std::size_t m = 100000;
  const auto xs = Sampler(p).draw(m, rng), ys = Sampler(q).draw(m, rng);
  Eigen::MatrixXd x(2, m), y(2, m);
  for (std::size_t i = 0; i < m; ++i) {
    x.col(static_cast<Eigen::Index>(i)) = phi.row(static_cast<Eigen::Index>(xs[i])).transpose();
    y.col(static_cast<Eigen::Index>(i)) = phi.row(static_cast<Eigen::Index>(ys[i])).transpose();
  }
  EXPECT_NEAR(mcr_delta_r(x, y, McrConfig{}), mcr_delta_r_probability(p, q, phi, McrConfig{}), 0.01);
}

TEST(McrProbability, RelabelingInvariant) {
  Rng rng(16);
  const auto p = random_distribution(3, rng), q = random_distribution(3, rng);
  const auto phi = random_features(3, 2, rng);
  std::vector<std::size_t> perm(8);
  std::iota(perm.begin(), perm.end(), 0);
  std::reverse(perm.begin(), perm.end());
  std::swap(perm[1], perm[5]);
  std::vector<double> pp(8), qq(8);
  FeatureTable phi2(8, 2);
  for (std::size_t x = 0; x < 8; ++x) {
    pp[perm[x]] = p[x];
    qq[perm[x]] = q[x];
    phi2.row(static_cast<Eigen::Index>(perm[x])) = phi.row(static_cast<Eigen::Index>(x));
  }
  EXPECT_NEAR(mcr_delta_r_probability(p, q, phi, McrConfig{}),
              mcr_delta_r_probability({3, pp}, {3, qq}, phi2, McrConfig{}), 1e-12);
}

TEST(McrGradientNn, InertParameterIsZero) {
  Rng rng(17);
  const auto [p, i] = inert_parameter(4);
  EXPECT_NEAR(mcr_gradient_nn(p, i, random_features(3, 2, rng), bas_distribution({1, 3}), McrConfig{}), 0.0, 1e-14);
}

TEST(McrGradientNn, MatchesFiniteDifference) {
  Rng rng(18);
  const auto target = bas_distribution({1, 3});
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const auto phi = random_features(3, 2, rng);
    const auto p = random_full_program(3, 2, seed);
    for (std::size_t i : p.active_indices()) {
      const double fd = central_difference(p, i, [&](const MpqcProgram& q) {
        return mcr_delta_r_probability(output_distribution(q), target, phi, McrConfig{});
      });
      EXPECT_NEAR(mcr_gradient_nn(p, i, phi, target, McrConfig{}), fd, 1e-6);
    }
  }
}

TEST(McrGradientKernel, AgreesWithNnFormUnderLinearKernel) {
  Rng rng(19);
  const auto target = bas_distribution({1, 3});
  for (int d : {1, 2, 3}) {
    const auto phi = random_features(3, d, rng);
    const McrConfig cfg{d, 0.5};
    const auto p = random_full_program(3, 2, 20 + static_cast<std::uint64_t>(d));
    for (std::size_t i : p.active_indices()) {
      const auto kg = mcr_gradient_kernel(p, i, linear_gram(phi), target, cfg);
      EXPECT_NEAR(kg.value, mcr_gradient_nn(p, i, phi, target, cfg), 1e-8);
      EXPECT_FALSE(kg.ill_conditioned());
    }
  }
}

TEST(McrGradientKernel, SampledFormsAgree) {
  Rng rng(20);
  const auto phi = random_features(3, 2, rng);
  const auto p = random_full_program(3, 2, 30);
  const auto target = bas_distribution({1, 3});
  for (std::size_t i : p.active_indices()) {
    Rng a(100 + i), b(100 + i);
    const double nn = mcr_gradient_nn_sampled(p, i, phi, target, McrConfig{}, 16, a);
    const auto k = mcr_gradient_kernel_sampled(p, i, linear_gram(phi), target, McrConfig{}, 16, b);
    EXPECT_NEAR(k.value, nn, 1e-8);
  }
}

TEST(McrGradientKernel, GaussianKernelMatchesFiniteDifference) {
  const auto target = bas_distribution({1, 3});
  const auto gram = kernel_matrix(3, KernelSpec{});
  const auto p = random_full_program(3, 2, 31);
  auto value = [&](const MpqcProgram& q) {
    return mcr_delta_r_kernel(WeightedPoints::from_distribution(output_distribution(q)),
                              WeightedPoints::from_distribution(target), gram, McrConfig{});
  };
  for (std::size_t i : p.active_indices())
    EXPECT_NEAR(mcr_gradient_kernel(p, i, KernelSpec{}, target, McrConfig{}).value, central_difference(p, i, value),
                1e-6);
  const auto [q, inert] = inert_parameter(5);
  EXPECT_NEAR(mcr_gradient_kernel(q, inert, gram, target, McrConfig{}).value, 0.0, 1e-14);
}

TEST(McrKernelValue, MatchesFeatureFormUnderLinearKernel) {
  Rng rng(21);
  const auto p = random_distribution(3, rng), q = random_distribution(3, rng);
  const auto phi = random_features(3, 2, rng);
  EXPECT_NEAR(mcr_delta_r_kernel(WeightedPoints::from_distribution(p), WeightedPoints::from_distribution(q),
                                 linear_gram(phi), McrConfig{}),
              mcr_delta_r_probability(p, q, phi, McrConfig{}), 1e-10);
}

TEST(McrFeatureGradient, MatchesFiniteDifference) {
  Rng rng(22);
  const auto p = random_distribution(3, rng), q = random_distribution(3, rng);
  const auto phi = random_features(3, 2, rng);
  const auto g = mcr_feature_gradient(p, q, phi, McrConfig{});
  const double h = 1e-6;
  for (Eigen::Index x = 0; x < phi.rows(); ++x)
    for (Eigen::Index j = 0; j < phi.cols(); ++j) {
      FeatureTable up = phi, dn = phi;
      up(x, j) += h;
      dn(x, j) -= h;
      const double fd =
          (mcr_delta_r_probability(p, q, up, McrConfig{}) - mcr_delta_r_probability(p, q, dn, McrConfig{})) / (2 * h);
      EXPECT_NEAR(g(x, j), fd, 1e-7);
    }
}

}  // namespace
}  // namespace qborn
