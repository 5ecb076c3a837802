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


// Small dense networks with hand-written backpropagation, Adam, and the
// Gumbel-softmax relaxation used by the classical baseline generator.

#ifndef QBORN_NEURAL_HPP
#define QBORN_NEURAL_HPP

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "qborn/errors.hpp"
#include "qborn/rng.hpp"

namespace qborn {

enum class Activation { kTanh, kRelu, kLeakyRelu, kIdentity, kSigmoid };

inline std::string to_string(Activation a) {
  switch (a) {
    case Activation::kTanh: return "tanh";
    case Activation::kRelu: return "relu";
    case Activation::kLeakyRelu: return "leaky_relu";
    case Activation::kIdentity: return "identity";
    case Activation::kSigmoid: return "sigmoid";
  }
  return "?";
}

inline Activation parse_activation(const std::string& s) {
  for (Activation a : {Activation::kTanh, Activation::kRelu, Activation::kLeakyRelu, Activation::kIdentity,
                       Activation::kSigmoid})
    if (to_string(a) == s) return a;
  throw ParameterError("unknown activation '" + s + "'");
}

inline constexpr double kLeakySlope = 0.01;

inline double activate(Activation a, double z) {
  switch (a) {
    case Activation::kTanh: return std::tanh(z);
    case Activation::kRelu: return z > 0 ? z : 0.0;
    case Activation::kLeakyRelu: return z > 0 ? z : kLeakySlope * z;
    case Activation::kIdentity: return z;
    case Activation::kSigmoid: return 1.0 / (1.0 + std::exp(-z));
  }
  return z;
}

/// Derivative expressed through the pre-activation z and output y.
inline double activate_grad(Activation a, double z, double y) {
  switch (a) {
    case Activation::kTanh: return 1.0 - y * y;
    case Activation::kRelu: return z > 0 ? 1.0 : 0.0;
    case Activation::kLeakyRelu: return z > 0 ? 1.0 : kLeakySlope;
    case Activation::kIdentity: return 1.0;
    case Activation::kSigmoid: return y * (1.0 - y);
  }
  return 1.0;
}

struct DenseLayer {
  Eigen::MatrixXd w;  // out x in
  Eigen::VectorXd b;
  Activation act = Activation::kTanh;
};

struct MlpCache {
  std::vector<Eigen::VectorXd> inputs;  // input to each layer
  std::vector<Eigen::VectorXd> pre;     // pre-activations
  Eigen::VectorXd output;
};

/// Gradients with the same layout as the network parameters.
struct MlpGradients {
  std::vector<Eigen::MatrixXd> w;
  std::vector<Eigen::VectorXd> b;
  Eigen::VectorXd input;  // d loss / d input

  MlpGradients& operator+=(const MlpGradients& o) {
    for (std::size_t l = 0; l < w.size(); ++l) {
      w[l] += o.w[l];
      b[l] += o.b[l];
    }
    return *this;
  }
};

class Mlp {
 public:
  Mlp() = default;

  /// Layer sizes [in, h1, ..., out]; hidden layers use `hidden`, the last `output`.
  /// Weights are Glorot-uniform, biases zero.
  Mlp(std::vector<int> sizes, Activation hidden, Activation output, Rng& rng) : sizes_(std::move(sizes)) {
    if (sizes_.size() < 2) throw ParameterError("an MLP needs at least input and output sizes");
    for (int s : sizes_)
      if (s < 1) throw ParameterError("layer sizes must be positive");
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
      DenseLayer layer;
      const int in = sizes_[l], out = sizes_[l + 1];
      const double r = std::sqrt(6.0 / (in + out));
      layer.w.resize(out, in);
      for (int i = 0; i < out; ++i)
        for (int j = 0; j < in; ++j) layer.w(i, j) = rng.uniform(-r, r);
      layer.b = Eigen::VectorXd::Zero(out);
      layer.act = l + 2 == sizes_.size() ? output : hidden;
      layers_.push_back(std::move(layer));
    }
  }

  const std::vector<int>& sizes() const noexcept { return sizes_; }
  std::vector<DenseLayer>& layers() noexcept { return layers_; }
  const std::vector<DenseLayer>& layers() const noexcept { return layers_; }
  int input_size() const { return sizes_.front(); }
  int output_size() const { return sizes_.back(); }

  int parameter_count() const {
    int n = 0;
    for (const auto& l : layers_) n += static_cast<int>(l.w.size() + l.b.size());
    return n;
  }

  Eigen::VectorXd forward(const Eigen::VectorXd& x, MlpCache* cache = nullptr) const {
    if (x.size() != input_size()) throw ShapeError("MLP input has the wrong dimension");
    Eigen::VectorXd a = x;
    if (cache) {
      cache->inputs.clear();
      cache->pre.clear();
    }
    for (const auto& l : layers_) {
      Eigen::VectorXd z = l.w * a + l.b;
      if (cache) {
        cache->inputs.push_back(a);
        cache->pre.push_back(z);
      }
      a = z.unaryExpr([&](double v) { return activate(l.act, v); });
    }
    if (cache) cache->output = a;
    return a;
  }

  MlpGradients zero_gradients() const {
    MlpGradients g;
    for (const auto& l : layers_) {
      g.w.push_back(Eigen::MatrixXd::Zero(l.w.rows(), l.w.cols()));
      g.b.push_back(Eigen::VectorXd::Zero(l.b.size()));
    }
    g.input = Eigen::VectorXd::Zero(input_size());
    return g;
  }

  /// Reverse pass for d loss / d output = `grad_out`.
  MlpGradients backward(const MlpCache& cache, const Eigen::VectorXd& grad_out) const {
    if (cache.pre.size() != layers_.size()) throw ShapeError("cache does not match this network");
    if (grad_out.size() != output_size()) throw ShapeError("output gradient has the wrong dimension");
    MlpGradients g = zero_gradients();
    Eigen::VectorXd delta = grad_out;
    Eigen::VectorXd y = cache.output;
    for (std::size_t k = layers_.size(); k-- > 0;) {
      const auto& l = layers_[k];
      const Eigen::VectorXd& z = cache.pre[k];
      for (Eigen::Index i = 0; i < z.size(); ++i) delta(i) *= activate_grad(l.act, z(i), y(i));
      g.w[k] = delta * cache.inputs[k].transpose();
      g.b[k] = delta;
      delta = l.w.transpose() * delta;
      y = cache.inputs[k];
    }
    g.input = delta;
    return g;
  }

  /// Flat view: per layer, W row-major then b.
  Eigen::VectorXd parameters() const {
    Eigen::VectorXd v(parameter_count());
    Eigen::Index k = 0;
    for (const auto& l : layers_) {
      for (Eigen::Index i = 0; i < l.w.rows(); ++i)
        for (Eigen::Index j = 0; j < l.w.cols(); ++j) v(k++) = l.w(i, j);
      for (Eigen::Index i = 0; i < l.b.size(); ++i) v(k++) = l.b(i);
    }
    return v;
  }

  void set_parameters(const Eigen::VectorXd& v) {
    if (v.size() != parameter_count()) throw ShapeError("parameter vector has the wrong length");
    Eigen::Index k = 0;
    for (auto& l : layers_) {
      for (Eigen::Index i = 0; i < l.w.rows(); ++i)
        for (Eigen::Index j = 0; j < l.w.cols(); ++j) l.w(i, j) = v(k++);
      for (Eigen::Index i = 0; i < l.b.size(); ++i) l.b(i) = v(k++);
    }
  }

  static Eigen::VectorXd flatten(const MlpGradients& g) {
    Eigen::Index n = 0;
    for (std::size_t l = 0; l < g.w.size(); ++l) n += g.w[l].size() + g.b[l].size();
    Eigen::VectorXd v(n);
    Eigen::Index k = 0;
    for (std::size_t l = 0; l < g.w.size(); ++l) {
      for (Eigen::Index i = 0; i < g.w[l].rows(); ++i)
        for (Eigen::Index j = 0; j < g.w[l].cols(); ++j) v(k++) = g.w[l](i, j);
      for (Eigen::Index i = 0; i < g.b[l].size(); ++i) v(k++) = g.b[l](i);
    }
    return v;
  }

 private:
  std::vector<int> sizes_;
  std::vector<DenseLayer> layers_;
};

// Adam ---------------------------------------------------------------------

struct AdamState {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long step = 0;
  Eigen::VectorXd m, v;

  AdamState() = default;
  AdamState(Eigen::Index n, double learning_rate) : lr(learning_rate), m(Eigen::VectorXd::Zero(n)), v(Eigen::VectorXd::Zero(n)) {
    if (!(learning_rate > 0)) throw ParameterError("learning rate must be positive");
  }
};

/// One bias-corrected Adam update of `params` against `grads`, in place.
inline void adam_step(Eigen::VectorXd& params, const Eigen::VectorXd& grads, AdamState& s) {
  if (params.size() != grads.size() || s.m.size() != params.size()) throw ShapeError("Adam shapes do not match");
  ++s.step;
  s.m = s.beta1 * s.m + (1 - s.beta1) * grads;
  s.v = s.beta2 * s.v + (1 - s.beta2) * grads.cwiseProduct(grads);
  const double c1 = 1 - std::pow(s.beta1, static_cast<double>(s.step));
  const double c2 = 1 - std::pow(s.beta2, static_cast<double>(s.step));
  for (Eigen::Index i = 0; i < params.size(); ++i)
    params(i) -= s.lr * (s.m(i) / c1) / (std::sqrt(s.v(i) / c2) + s.eps);
}

inline void adam_step(std::vector<double>& params, std::span<const double> grads, AdamState& s) {
  Eigen::VectorXd p = Eigen::Map<Eigen::VectorXd>(params.data(), static_cast<Eigen::Index>(params.size()));
  adam_step(p, Eigen::Map<const Eigen::VectorXd>(grads.data(), static_cast<Eigen::Index>(grads.size())), s);
  std::copy(p.data(), p.data() + p.size(), params.begin());
}

// Gumbel softmax -----------------------------------------------------------

struct GumbelConfig {
  double tau_start = 1e-2;
  double tau_end = 1e-4;
  bool anneal = true;  // false: tau_start throughout
  int categories = 2;

  void validate() const {
    if (!(tau_start > 0) || (anneal && !(tau_end > 0))) throw ParameterError("Gumbel temperatures must be positive");
    if (categories < 2) throw ParameterError("Gumbel softmax needs at least two categories");
  }
  friend bool operator==(const GumbelConfig&, const GumbelConfig&) = default;
};

/// Linear interpolation from tau_start at 0 to tau_end at `total`.
inline double temperature_at(const GumbelConfig& cfg, long iteration, long total) {
  cfg.validate();
  if (iteration < 0 || iteration > total) throw ParameterError("iteration outside the schedule");
  if (!cfg.anneal || total == 0) return cfg.tau_start;
  const double t = static_cast<double>(iteration) / static_cast<double>(total);
  return cfg.tau_start + (cfg.tau_end - cfg.tau_start) * t;
}

/// softmax((logits + g) / tau), max-shifted. Logits may be unnormalized:
/// log softmax differs from them by a constant that cancels.
inline std::vector<double> gumbel_softmax_with_noise(std::span<const double> logits, std::span<const double> g,
                                                     double tau) {
  if (logits.size() != g.size() || logits.empty()) throw ShapeError("logits and noise must have equal, nonzero length");
  if (!(tau > 0)) throw ParameterError("temperature must be positive");
  std::vector<double> u(logits.size());
  for (std::size_t i = 0; i < u.size(); ++i) u[i] = (logits[i] + g[i]) / tau;
  const double mx = *std::max_element(u.begin(), u.end());
  double s = 0;
  for (double& v : u) s += (v = std::exp(v - mx));
  for (double& v : u) v /= s;
  return u;
}

inline std::vector<double> gumbel_noise(std::size_t k, Rng& rng) {
  std::vector<double> g(k);
  for (double& v : g) v = rng.gumbel();
  return g;
}

inline std::vector<double> gumbel_softmax(std::span<const double> logits, double tau, Rng& rng) {
  for (double l : logits)
    if (!std::isfinite(l)) throw ParameterError("logits must be finite");
  const auto g = gumbel_noise(logits.size(), rng);
  return gumbel_softmax_with_noise(logits, g, tau);
}

// Default architectures ----------------------------------------------------

/// Latent z in R^{latent} -> MLP -> one "on" logit per pixel; a free bias
/// vector gives each pixel's "off" logit. Each pixel is a 2-way category.
struct ClassicalGenerator {
  Mlp net;
  Eigen::VectorXd off_logits;

  static constexpr int kPaperParameterCount = 56;

  ClassicalGenerator() = default;
  ClassicalGenerator(int latent, int pixels, int hidden, Rng& rng)
      : net({latent, hidden, hidden, pixels}, Activation::kTanh, Activation::kIdentity, rng),
        off_logits(Eigen::VectorXd::Zero(pixels)) {}

  /// The 2 -> 4 -> 4 -> 4 layout with 4 off logits: 56 parameters.
  static ClassicalGenerator make_default(Rng& rng, int expected_count = kPaperParameterCount) {
    ClassicalGenerator g(2, 4, 4, rng);
    if (expected_count > 0 && g.parameter_count() != expected_count)
      throw ConfigError("generator has " + std::to_string(g.parameter_count()) + " parameters, expected " +
                        std::to_string(expected_count));
    return g;
  }

  int latent_size() const { return net.input_size(); }
  int pixels() const { return net.output_size(); }
  int parameter_count() const { return net.parameter_count() + static_cast<int>(off_logits.size()); }

  Eigen::VectorXd parameters() const {
    Eigen::VectorXd v(parameter_count());
    v << net.parameters(), off_logits;
    return v;
  }
  void set_parameters(const Eigen::VectorXd& v) {
    if (v.size() != parameter_count()) throw ShapeError("generator parameter vector has the wrong length");
    net.set_parameters(v.head(net.parameter_count()));
    off_logits = v.tail(off_logits.size());
  }

  /// P(pixel i on | z) = sigmoid(on_i - off_i): what argmax of the Gumbel-perturbed logits yields.
  Eigen::VectorXd on_probabilities(const Eigen::VectorXd& z) const {
    const Eigen::VectorXd on = net.forward(z);
    return (on - off_logits).unaryExpr([](double d) { return 1.0 / (1.0 + std::exp(-d)); });
  }
};

/// Shared trunk with a linear feature head (for coding-rate objectives) and
/// a sigmoid score head (for the GAN).
struct Discriminator {
  Mlp trunk;
  Mlp features;
  Mlp score;

  Discriminator() = default;
  Discriminator(int input, int hidden, int feature_dim, Rng& rng)
      : trunk({input, hidden, hidden}, Activation::kTanh, Activation::kTanh, rng),
        features({hidden, feature_dim}, Activation::kIdentity, Activation::kIdentity, rng),
        score({hidden, 1}, Activation::kSigmoid, Activation::kSigmoid, rng) {}

  int parameter_count() const { return trunk.parameter_count() + features.parameter_count() + score.parameter_count(); }
  int feature_dim() const { return features.output_size(); }

  Eigen::VectorXd parameters() const {
    Eigen::VectorXd v(parameter_count());
    v << trunk.parameters(), features.parameters(), score.parameters();
    return v;
  }
  void set_parameters(const Eigen::VectorXd& v) {
    if (v.size() != parameter_count()) throw ShapeError("discriminator parameter vector has the wrong length");
    Eigen::Index k = 0;
    for (Mlp* m : {&trunk, &features, &score}) {
      m->set_parameters(v.segment(k, m->parameter_count()));
      k += m->parameter_count();
    }
  }

  double score_of(const Eigen::VectorXd& x) const { return score.forward(trunk.forward(x))(0); }
  Eigen::VectorXd features_of(const Eigen::VectorXd& x) const { return features.forward(trunk.forward(x)); }
};

// Checkpoints --------------------------------------------------------------

inline nlohmann::json to_json(const Mlp& m) {
  nlohmann::json acts = nlohmann::json::array();
  for (const auto& l : m.layers()) acts.push_back(to_string(l.act));
  const Eigen::VectorXd p = m.parameters();
  return {{"sizes", m.sizes()}, {"activations", acts}, {"parameters", std::vector<double>(p.data(), p.data() + p.size())}};
}

inline Mlp mlp_from_json(const nlohmann::json& j) {
  Rng dummy(0);
  const auto sizes = j.at("sizes").get<std::vector<int>>();
  const auto acts = j.at("activations").get<std::vector<std::string>>();
  if (acts.size() + 1 != sizes.size()) throw ShapeError("one activation per layer is required");
  Mlp m(sizes, Activation::kIdentity, Activation::kIdentity, dummy);
  for (std::size_t l = 0; l < acts.size(); ++l) m.layers()[l].act = parse_activation(acts[l]);
  const auto p = j.at("parameters").get<std::vector<double>>();
  m.set_parameters(Eigen::Map<const Eigen::VectorXd>(p.data(), static_cast<Eigen::Index>(p.size())));
  return m;
}

inline nlohmann::json to_json(const AdamState& s) {
  return {{"lr", s.lr},     {"beta1", s.beta1},
          {"beta2", s.beta2}, {"eps", s.eps},
          {"step", s.step}, {"m", std::vector<double>(s.m.data(), s.m.data() + s.m.size())},
          {"v", std::vector<double>(s.v.data(), s.v.data() + s.v.size())}};
}

inline AdamState adam_from_json(const nlohmann::json& j) {
  AdamState s;
  s.lr = j.at("lr").get<double>();
  s.beta1 = j.at("beta1").get<double>();
  s.beta2 = j.at("beta2").get<double>();
  s.eps = j.at("eps").get<double>();
  s.step = j.at("step").get<long>();
  const auto m = j.at("m").get<std::vector<double>>(), v = j.at("v").get<std::vector<double>>();
  if (m.size() != v.size()) throw ShapeError("Adam moment vectors differ in length");
  s.m = Eigen::Map<const Eigen::VectorXd>(m.data(), static_cast<Eigen::Index>(m.size()));
  s.v = Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
  return s;
}

/// Network, optimizer and RNG state in one record.
struct Checkpoint {
  Mlp network;
  AdamState optimizer;
  std::string rng_state;
};

inline nlohmann::json to_json(const Checkpoint& c) {
  return {{"network", to_json(c.network)}, {"optimizer", to_json(c.optimizer)}, {"rng_state", c.rng_state}};
}

inline Checkpoint checkpoint_from_json(const nlohmann::json& j) {
  return {mlp_from_json(j.at("network")), adam_from_json(j.at("optimizer")), j.at("rng_state").get<std::string>()};
}

inline nlohmann::json to_json(const ClassicalGenerator& g) {
  return {{"net", to_json(g.net)},
          {"off_logits", std::vector<double>(g.off_logits.data(), g.off_logits.data() + g.off_logits.size())}};
}

inline ClassicalGenerator generator_from_json(const nlohmann::json& j) {
  ClassicalGenerator g;
  g.net = mlp_from_json(j.at("net"));
  const auto b = j.at("off_logits").get<std::vector<double>>();
  g.off_logits = Eigen::Map<const Eigen::VectorXd>(b.data(), static_cast<Eigen::Index>(b.size()));
  return g;
}

inline nlohmann::json to_json(const Discriminator& d) {
  return {{"trunk", to_json(d.trunk)}, {"features", to_json(d.features)}, {"score", to_json(d.score)}};
}

inline Discriminator discriminator_from_json(const nlohmann::json& j) {
  Discriminator d;
  d.trunk = mlp_from_json(j.at("trunk"));
  d.features = mlp_from_json(j.at("features"));
  d.score = mlp_from_json(j.at("score"));
  return d;
}

}  // namespace qborn

#endif  // QBORN_NEURAL_HPP
