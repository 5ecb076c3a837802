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

#include "qborn/neural.hpp"

namespace qborn {
namespace {

Eigen::VectorXd random_vector(int n, Rng& rng) {
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v(i) = rng.normal();
  return v;
}

// loss = c . forward(x)
double linear_readout(const Mlp& m, const Eigen::VectorXd& x, const Eigen::VectorXd& c) { return c.dot(m.forward(x)); }

TEST(MlpForward, ZeroNetWithSigmoidGivesHalf) {
  Rng rng(1);
  Mlp m({3, 1}, Activation::kSigmoid, Activation::kSigmoid, rng);
  m.set_parameters(Eigen::VectorXd::Zero(m.parameter_count()));
  EXPECT_DOUBLE_EQ(m.forward(Eigen::Vector3d(1, -2, 3))(0), 0.5);
}

TEST(MlpForward, IdentityLayerPassesInputThrough) {
  Rng rng(2);
  Mlp m({3, 3}, Activation::kIdentity, Activation::kIdentity, rng);
  m.layers()[0].w.setIdentity();
  const Eigen::Vector3d x(0.3, -1.5, 2.0);
  EXPECT_EQ(m.forward(x), x);
}

TEST(MlpForward, RepeatedCallsAgree) {
  Rng rng(3);
  Mlp m({2, 5, 3}, Activation::kTanh, Activation::kSigmoid, rng);
  const Eigen::Vector2d x(0.1, 0.7);
  EXPECT_EQ(m.forward(x), m.forward(x));
}

TEST(MlpForward, WrongInputSizeThrows) {
  Rng rng(4);
  Mlp m({2, 2}, Activation::kTanh, Activation::kIdentity, rng);
  EXPECT_THROW(m.forward(Eigen::Vector3d::Zero()), ShapeError);
  EXPECT_THROW(Mlp({2}, Activation::kTanh, Activation::kIdentity, rng), ParameterError);
}

TEST(MlpForward, ParameterCountMatchesLayout) {
  Rng rng(5);
  EXPECT_EQ(Mlp({2, 4, 4, 4}, Activation::kTanh, Activation::kIdentity, rng).parameter_count(), 52);
}

TEST(MlpBackward, MatchesFiniteDifferencesForAllActivations) {
  Rng rng(6);
  const Activation hidden[] = {Activation::kTanh, Activation::kRelu, Activation::kLeakyRelu};
  const Activation output[] = {Activation::kSigmoid, Activation::kIdentity};
  for (Activation h : hidden) {
    for (Activation o : output) {
      for (int trial = 0; trial < 5; ++trial) {
        Mlp m({3, 5, 4, 2}, h, o, rng);
        // Nonzero biases keep the ReLU kinks away from the sampled points.
        Eigen::VectorXd p = m.parameters();
        p += 0.1 * random_vector(static_cast<int>(p.size()), rng);
        m.set_parameters(p);
        const Eigen::VectorXd x = random_vector(3, rng), c = random_vector(2, rng);
        MlpCache cache;
        m.forward(x, &cache);
        const Eigen::VectorXd g = Mlp::flatten(m.backward(cache, c));
        const double step = 1e-6;
        for (Eigen::Index i = 0; i < p.size(); ++i) {
          Mlp plus = m, minus = m;
          Eigen::VectorXd pp = p, pm = p;
          pp(i) += step;
          pm(i) -= step;
          plus.set_parameters(pp);
          minus.set_parameters(pm);
          const double fd = (linear_readout(plus, x, c) - linear_readout(minus, x, c)) / (2 * step);
          EXPECT_LE(std::abs(fd - g(i)), 1e-6 * std::max(1.0, std::abs(fd))) << to_string(h) << "/" << to_string(o);
        }
      }
    }
  }
}

TEST(MlpBackward, InputGradientMatchesFiniteDifferences) {
  Rng rng(7);
  Mlp m({4, 6, 1}, Activation::kTanh, Activation::kSigmoid, rng);
  const Eigen::VectorXd x = random_vector(4, rng);
  MlpCache cache;
  m.forward(x, &cache);
  const Eigen::VectorXd g = m.backward(cache, Eigen::VectorXd::Ones(1)).input;
  for (int i = 0; i < 4; ++i) {
    Eigen::VectorXd xp = x, xm = x;
    xp(i) += 1e-6;
    xm(i) -= 1e-6;
    EXPECT_NEAR((m.forward(xp)(0) - m.forward(xm)(0)) / 2e-6, g(i), 1e-8);
  }
}

TEST(MlpBackward, ZeroOutputGradientGivesZero) {
  Rng rng(8);
  Mlp m({2, 3, 2}, Activation::kTanh, Activation::kIdentity, rng);
  MlpCache cache;
  m.forward(Eigen::Vector2d(0.4, -0.2), &cache);
  EXPECT_EQ(Mlp::flatten(m.backward(cache, Eigen::VectorXd::Zero(2))).cwiseAbs().maxCoeff(), 0.0);
}

TEST(MlpBackward, BatchGradientIsSumOfExampleGradients) {
  Rng rng(9);
  Mlp m({2, 3, 1}, Activation::kTanh, Activation::kSigmoid, rng);
  MlpGradients total = m.zero_gradients();
  Eigen::VectorXd manual = Eigen::VectorXd::Zero(m.parameter_count());
  for (int k = 0; k < 4; ++k) {
    MlpCache cache;
    m.forward(random_vector(2, rng), &cache);
    const auto g = m.backward(cache, Eigen::VectorXd::Ones(1));
    total += g;
    manual += Mlp::flatten(g);
  }
  EXPECT_LT((Mlp::flatten(total) - manual).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(MlpBackward, MismatchedCacheThrows) {
  Rng rng(10);
  Mlp m({2, 3, 1}, Activation::kTanh, Activation::kSigmoid, rng);
  EXPECT_THROW(m.backward(MlpCache{}, Eigen::VectorXd::Ones(1)), ShapeError);
}

TEST(Adam, FirstStepMovesBySignTimesRate) {
  Eigen::VectorXd p(4);
  p << 1.0, -2.0, 0.5, 3.0;
  Eigen::VectorXd g(4);
  g << 0.3, -7.0, 1e-3, -0.2;
  AdamState s(4, 0.01);
  const Eigen::VectorXd before = p;
  adam_step(p, g, s);
  for (int i = 0; i < 4; ++i) {
    const double sign = g(i) > 0 ? 1.0 : -1.0;
    EXPECT_NEAR(p(i) - before(i), -0.01 * sign, 0.01 * 1e-8 / std::abs(g(i)) + 1e-15);
  }
  EXPECT_EQ(s.step, 1);
}

TEST(Adam, ZeroGradientsLeaveParametersUnchanged) {
  Eigen::VectorXd p = Eigen::VectorXd::LinSpaced(5, -1, 1);
  const Eigen::VectorXd before = p;
  AdamState s(5, 0.1);
  for (int k = 0; k < 20; ++k) adam_step(p, Eigen::VectorXd::Zero(5), s);
  EXPECT_EQ(p, before);
}

TEST(Adam, IdenticalRunsMatch) {
  auto run = [] {
    Rng rng(11);
    Eigen::VectorXd p = Eigen::VectorXd::Zero(3);
    AdamState s(3, 1e-3);
    for (int k = 0; k < 50; ++k) adam_step(p, random_vector(3, rng), s);
    return p;
  };
  EXPECT_EQ(run(), run());
}

TEST(Adam, ShapeMismatchThrows) {
  Eigen::VectorXd p = Eigen::VectorXd::Zero(3);
  AdamState s(3, 1e-3);
  EXPECT_THROW(adam_step(p, Eigen::VectorXd::Zero(2), s), ShapeError);
  EXPECT_THROW(AdamState(3, 0.0), ParameterError);
}

TEST(GumbelSoftmax, OutputOnSimplex) {
  Rng rng(12);
  const std::vector<double> logits{0.3, -1.0, 2.0, 0.0};
  for (int trial = 0; trial < 100; ++trial) {
    const auto y = gumbel_softmax(logits, 0.7, rng);
    double s = 0;
    for (double v : y) {
      EXPECT_GE(v, 0.0);
      s += v;
    }
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(GumbelSoftmax, LowTemperatureApproachesOneHotAtArgmax) {
  Rng rng(13);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> logits(5);
    for (double& l : logits) l = rng.normal();
    const auto g = gumbel_noise(5, rng);
    const auto y = gumbel_softmax_with_noise(logits, g, 1e-6);
    std::size_t best = 0;
    for (std::size_t i = 1; i < 5; ++i)
      if (logits[i] + g[i] > logits[best] + g[best]) best = i;
    EXPECT_GT(y[best], 1 - 1e-9);
  }
}

TEST(GumbelSoftmax, HighTemperatureFlattens) {
  Rng rng(14);
  const std::vector<double> logits(6, 0.0);
  for (int trial = 0; trial < 100; ++trial) {
    const auto y = gumbel_softmax(logits, 1e3, rng);
    EXPECT_LT(*std::max_element(y.begin(), y.end()) - *std::min_element(y.begin(), y.end()), 1e-2);
  }
}

TEST(GumbelSoftmax, ArgmaxFrequenciesUniformForSixteenCategories) {
  Rng rng(15);
  const int k = 16, draws = 100000;
  const std::vector<double> logits(k, 0.0);
  std::vector<int> counts(k, 0);
  for (int i = 0; i < draws; ++i) {
    const auto y = gumbel_softmax(logits, 1e-4, rng);
    ++counts[std::max_element(y.begin(), y.end()) - y.begin()];
  }
  const double p = 1.0 / k, sigma = std::sqrt(draws * p * (1 - p));
  for (int c : counts) EXPECT_LT(std::abs(c - draws * p), 3 * sigma + 1);
}

TEST(GumbelSoftmax, GradientMatchesFiniteDifferences) {
  const std::vector<double> logits{0.2, -0.4, 0.9};
  const std::vector<double> g{0.1, 0.5, -0.3};
  const double tau = 0.8;
  const auto y = gumbel_softmax_with_noise(logits, g, tau);
  // d y_0 / d l_j = y_0 (delta_0j - y_j) / tau
  for (int j = 0; j < 3; ++j) {
    auto lp = logits, lm = logits;
    lp[j] += 1e-6;
    lm[j] -= 1e-6;
    const double fd = (gumbel_softmax_with_noise(lp, g, tau)[0] - gumbel_softmax_with_noise(lm, g, tau)[0]) / 2e-6;
    EXPECT_NEAR(fd, y[0] * ((j == 0) - y[j]) / tau, 1e-8);
  }
}

TEST(GumbelSoftmax, RejectsBadInput) {
  Rng rng(16);
  EXPECT_THROW(gumbel_softmax(std::vector<double>{1.0, std::nan("")}, 1.0, rng), ParameterError);
  EXPECT_THROW(gumbel_softmax(std::vector<double>{1.0, 0.0}, 0.0, rng), ParameterError);
}

TEST(Temperature, LinearScheduleEndpointsAndMidpoint) {
  const GumbelConfig cfg;
  EXPECT_DOUBLE_EQ(temperature_at(cfg, 0, 2000), 1e-2);
  EXPECT_NEAR(temperature_at(cfg, 2000, 2000), 1e-4, 1e-18);
  EXPECT_NEAR(temperature_at(cfg, 1000, 2000), 5.05e-3, 1e-15);
}

TEST(Temperature, ConstantModeIsFixed) {
  GumbelConfig cfg;
  cfg.anneal = false;
  cfg.tau_start = 1e-4;
  for (long i : {0L, 17L, 500L, 1000L}) EXPECT_EQ(temperature_at(cfg, i, 1000), 1e-4);
}

TEST(Temperature, OutOfRangeIterationThrows) {
  EXPECT_THROW(temperature_at(GumbelConfig{}, 11, 10), ParameterError);
  GumbelConfig bad;
  bad.tau_end = 0;
  EXPECT_THROW(temperature_at(bad, 0, 10), ParameterError);
}

TEST(ClassicalGenerator, DefaultHasFiftySixParameters) {
  Rng rng(17);
  const auto g = ClassicalGenerator::make_default(rng);
  EXPECT_EQ(g.parameter_count(), 56);
  EXPECT_EQ(g.latent_size(), 2);
  EXPECT_EQ(g.pixels(), 4);
  EXPECT_THROW(ClassicalGenerator::make_default(rng, 60), ConfigError);
}

TEST(ClassicalGenerator, OnProbabilityIsSigmoidOfLogitGap) {
  Rng rng(18);
  auto g = ClassicalGenerator::make_default(rng);
  g.off_logits << 0.5, -0.5, 1.0, 0.0;
  const Eigen::Vector2d z(0.3, -0.8);
  const Eigen::VectorXd on = g.net.forward(z);
  const Eigen::VectorXd p = g.on_probabilities(z);
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(p(i), 1 / (1 + std::exp(g.off_logits(i) - on(i))), 1e-15);
}

TEST(Discriminator, DefaultShapes) {
  Rng rng(19);
  const Discriminator d(4, 4, 2, rng);
  EXPECT_EQ(d.parameter_count(), 20 + 20 + 10 + 5);
  EXPECT_EQ(d.features_of(Eigen::VectorXd::Zero(4)).size(), 2);
  const double s = d.score_of(Eigen::VectorXd::Ones(4));
  EXPECT_GT(s, 0.0);
  EXPECT_LT(s, 1.0);
}

TEST(Checkpoint, RoundTripsBitExactly) {
  Rng rng(20);
  Mlp m({3, 4, 2}, Activation::kLeakyRelu, Activation::kSigmoid, rng);
  AdamState s(m.parameter_count(), 1e-3);
  Eigen::VectorXd p = m.parameters();
  adam_step(p, random_vector(static_cast<int>(p.size()), rng), s);
  m.set_parameters(p);
  const Checkpoint c{m, s, rng.state()};
  const std::string text = to_json(c).dump();
  const Checkpoint back = checkpoint_from_json(nlohmann::json::parse(text));
  EXPECT_EQ(back.network.parameters(), m.parameters());
  EXPECT_EQ(back.network.layers()[0].act, Activation::kLeakyRelu);
  EXPECT_EQ(back.network.layers()[1].act, Activation::kSigmoid);
  EXPECT_EQ(back.optimizer.m, s.m);
  EXPECT_EQ(back.optimizer.v, s.v);
  EXPECT_EQ(back.optimizer.step, 1);
  EXPECT_EQ(Rng::from_state(back.rng_state), rng);
  EXPECT_EQ(to_json(back).dump(), text);
}

TEST(Checkpoint, GeneratorAndDiscriminatorRoundTrip) {
  Rng rng(21);
  auto g = ClassicalGenerator::make_default(rng);
  g.off_logits << 0.1, 0.2, 0.3, 0.4;
  const Discriminator d(4, 4, 2, rng);
  EXPECT_EQ(generator_from_json(nlohmann::json::parse(to_json(g).dump())).parameters(), g.parameters());
  EXPECT_EQ(discriminator_from_json(nlohmann::json::parse(to_json(d).dump())).parameters(), d.parameters());
}

}  // namespace
}  // namespace qborn
