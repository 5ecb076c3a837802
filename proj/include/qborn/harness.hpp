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


// Experiment orchestration: configuration, the five training loops, run
// records, two-step fine-tuning, evaluation and batch-size sweeps.

#ifndef QBORN_HARNESS_HPP
#define QBORN_HARNESS_HPP

#include <algorithm>
#include <atomic>
#include <exception>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "qborn/data_metrics.hpp"
#include "qborn/errors.hpp"
#include "qborn/losses.hpp"
#include "qborn/mpqc.hpp"
#include "qborn/neural.hpp"
#include "qborn/rng.hpp"

namespace qborn {

enum class ExperimentId { kGumbelGan, kBornMmd, kBornAdv, kFinetune, kBornMcr };

inline std::string to_string(ExperimentId e) {
  switch (e) {
    case ExperimentId::kGumbelGan: return "GUMBEL_GAN";
    case ExperimentId::kBornMmd: return "BORN_MMD";
    case ExperimentId::kBornAdv: return "BORN_ADV";
    case ExperimentId::kFinetune: return "FINETUNE";
    case ExperimentId::kBornMcr: return "BORN_MCR";
  }
  return "?";
}

inline ExperimentId parse_experiment(const std::string& s) {
  for (ExperimentId e : {ExperimentId::kGumbelGan, ExperimentId::kBornMmd, ExperimentId::kBornAdv,
                         ExperimentId::kFinetune, ExperimentId::kBornMcr})
    if (to_string(e) == s) return e;
  throw ConfigError("unknown experiment '" + s + "'");
}

/// How bits are presented to a discriminator.
enum class InputEncoding { kBinary, kSigned };

inline constexpr int kExactBatch = 0;

// Independent RNG streams derived from the run seed.
inline constexpr std::uint64_t kDiscriminatorStream = 1'000'001;
inline constexpr std::uint64_t kGeneratorStream = 1'000'002;
inline constexpr std::uint64_t kLatentStream = 1'000'003;

struct TrainConfig {
  ExperimentId experiment = ExperimentId::kBornMmd;
  BasSpec dataset;
  AnsatzVariant ansatz = AnsatzVariant::EXPERIMENT;
  int depth = 4;
  int batch = kExactBatch;  // 0: exact distributions, no sampling
  long iterations = 2000;
  double lr_g = 1e-3;
  double lr_d = 1e-3;
  std::map<int, double> lr_by_batch;  // batch -> rate for both networks
  int d_steps = 2;
  KernelSpec kernel;
  McrConfig mcr;
  GumbelConfig gumbel;
  int latent_dim = 2;
  int generator_hidden = 4;
  int generator_parameters = ClassicalGenerator::kPaperParameterCount;  // 0: unchecked
  int discriminator_hidden = 4;
  InputEncoding disc_input = InputEncoding::kBinary;
  int eval_latents = 1024;
  std::uint64_t seed = 700;
  std::uint64_t stream = 0;  // sampling stream index; sweeps use the run index
  bool tv_normalized = true;
  double coverage_threshold = 0.5;
  bool early_stop = false;
  long early_stop_window = 200;
  double early_stop_threshold = 1e-4;
  long eval_samples = 16000;

  bool exact() const { return batch == kExactBatch; }
  int num_bits() const { return dataset.num_bits(); }

  AnsatzSpec ansatz_spec() const {
    return ansatz == AnsatzVariant::EXPERIMENT ? AnsatzSpec::experiment(depth) : AnsatzSpec::full_block(depth);
  }

  double generator_rate() const {
    const auto it = lr_by_batch.find(batch);
    return it == lr_by_batch.end() ? lr_g : it->second;
  }
  double discriminator_rate() const {
    const auto it = lr_by_batch.find(batch);
    return it == lr_by_batch.end() ? lr_d : it->second;
  }

  void validate() const {
    dataset.validate();
    if (depth < 1) throw ConfigError("depth must be positive");
    if (batch < 0) throw ConfigError("batch must be positive, or 0 for exact mode");
    if (iterations < 0) throw ConfigError("iterations must be non-negative");
    if (!(lr_g > 0) || !(lr_d > 0)) throw ConfigError("learning rates must be positive");
    for (const auto& [b, r] : lr_by_batch)
      if (b < 0 || !(r > 0)) throw ConfigError("lr_by_batch entries need a batch >= 0 and a positive rate");
    if (d_steps < 1) throw ConfigError("d_steps must be at least 1");
    if (experiment == ExperimentId::kGumbelGan && exact())
      throw ConfigError("GUMBEL_GAN trains on samples and needs batch >= 1");
    if (latent_dim < 1 || generator_hidden < 1 || discriminator_hidden < 1 || eval_latents < 1)
      throw ConfigError("network sizes must be positive");
    if (!(coverage_threshold > 0 && coverage_threshold < 1)) throw ConfigError("coverage_threshold must lie in (0, 1)");
    if (early_stop_window < 1 || early_stop_threshold < 0) throw ConfigError("invalid early-stop settings");
    if (eval_samples < 0) throw ConfigError("eval_samples must be non-negative");
    try {
      kernel.validate();
      mcr.validate();
      gumbel.validate();
    } catch (const ParameterError& e) {
      throw ConfigError(e.what());
    }
  }

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

inline bool operator==(const BasSpec& a, const BasSpec& b) { return a.rows == b.rows && a.cols == b.cols; }

// Config text ----------------------------------------------------------------

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) out.push_back(trim(item));
  return out;
}

template <class T>
T parse_number(const std::string& text, int line, const std::string& key) {
  std::istringstream is(text);
  T v{};
  is >> v;
  if (!is || !(is >> std::ws).eof()) throw ConfigError("line " + std::to_string(line) + ": bad value for " + key);
  return v;
}

inline bool parse_bool(const std::string& text, int line, const std::string& key) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw ConfigError("line " + std::to_string(line) + ": " + key + " must be true or false");
}

inline std::string join_doubles(const std::vector<double>& v) {
  std::string s;
  for (double x : v) s += (s.empty() ? "" : ",") + format_exact(x);
  return s;
}

}  // namespace detail

/// Applies one `key = value` assignment.
inline void set_config_value(TrainConfig& c, const std::string& key, const std::string& value, int line = 0) {
  using detail::parse_bool;
  using detail::parse_number;
  auto dbl = [&] { return parse_number<double>(value, line, key); };
  auto integer = [&] { return parse_number<long>(value, line, key); };
  try {
    if (key == "experiment") c.experiment = parse_experiment(value);
    else if (key == "bas_rows") c.dataset.rows = static_cast<int>(integer());
    else if (key == "bas_cols") c.dataset.cols = static_cast<int>(integer());
    else if (key == "ansatz") c.ansatz = value == "experiment" ? AnsatzVariant::EXPERIMENT
                                       : value == "full_block" ? AnsatzVariant::FULL_BLOCK
                                                               : throw ConfigError("ansatz must be experiment or full_block");
    else if (key == "depth") c.depth = static_cast<int>(integer());
    else if (key == "batch") c.batch = value == "exact" ? kExactBatch : static_cast<int>(integer());
    else if (key == "iterations") c.iterations = integer();
    else if (key == "lr_g") c.lr_g = dbl();
    else if (key == "lr_d") c.lr_d = dbl();
    else if (key == "lr_by_batch") {
      c.lr_by_batch.clear();
      if (!value.empty()) {
        for (const auto& item : detail::split(value, ',')) {
          const auto colon = item.find(':');
          if (colon == std::string::npos) throw ConfigError("lr_by_batch entries look like batch:rate");
          c.lr_by_batch[static_cast<int>(parse_number<long>(item.substr(0, colon), line, key))] =
              parse_number<double>(item.substr(colon + 1), line, key);
        }
      }
    } else if (key == "d_steps") c.d_steps = static_cast<int>(integer());
    else if (key == "kernel_bandwidths") {
      c.kernel.bandwidths.clear();
      for (const auto& item : detail::split(value, ',')) c.kernel.bandwidths.push_back(parse_number<double>(item, line, key));
    } else if (key == "mcr_eps2") c.mcr.eps2 = dbl();
    else if (key == "mcr_feature_dim") c.mcr.feature_dim = static_cast<int>(integer());
    else if (key == "tau_start") c.gumbel.tau_start = dbl();
    else if (key == "tau_end") c.gumbel.tau_end = dbl();
    else if (key == "tau_anneal") c.gumbel.anneal = parse_bool(value, line, key);
    else if (key == "latent_dim") c.latent_dim = static_cast<int>(integer());
    else if (key == "generator_hidden") c.generator_hidden = static_cast<int>(integer());
    else if (key == "generator_parameters") c.generator_parameters = static_cast<int>(integer());
    else if (key == "discriminator_hidden") c.discriminator_hidden = static_cast<int>(integer());
    else if (key == "disc_input") c.disc_input = value == "binary" ? InputEncoding::kBinary
                                               : value == "signed" ? InputEncoding::kSigned
                                                                   : throw ConfigError("disc_input must be binary or signed");
    else if (key == "eval_latents") c.eval_latents = static_cast<int>(integer());
    else if (key == "seed") c.seed = parse_number<std::uint64_t>(value, line, key);
    else if (key == "stream") c.stream = parse_number<std::uint64_t>(value, line, key);
    else if (key == "tv_normalized") c.tv_normalized = parse_bool(value, line, key);
    else if (key == "coverage_threshold") c.coverage_threshold = dbl();
    else if (key == "early_stop") c.early_stop = parse_bool(value, line, key);
    else if (key == "early_stop_window") c.early_stop_window = integer();
    else if (key == "early_stop_threshold") c.early_stop_threshold = dbl();
    else if (key == "eval_samples") c.eval_samples = integer();
    else throw ConfigError((line > 0 ? "line " + std::to_string(line) + ": " : "") + "unknown key '" + key + "'");
  } catch (const ParameterError& e) {
    throw ConfigError(e.what());
  }
}

/// Flat `key = value` lines; `#` starts a comment.
inline TrainConfig parse_config(std::istream& is, TrainConfig base = {}) {
  std::string raw;
  int line = 0;
  while (std::getline(is, raw)) {
    ++line;
    const auto hash = raw.find('#');
    const std::string text = detail::trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (text.empty()) continue;
    const auto eq = text.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(line) + ": expected key = value");
    set_config_value(base, detail::trim(text.substr(0, eq)), detail::trim(text.substr(eq + 1)), line);
  }
  return base;
}

inline TrainConfig parse_config_text(const std::string& text) {
  std::istringstream is(text);
  return parse_config(is);
}

/// QBORN_SEED, when set, replaces the configured seed.
inline void apply_env_overrides(TrainConfig& c) {
  if (const char* s = std::getenv("QBORN_SEED"); s && *s) c.seed = detail::parse_number<std::uint64_t>(s, 0, "QBORN_SEED");
}

inline TrainConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  TrainConfig c = parse_config(in);
  apply_env_overrides(c);
  c.validate();
  return c;
}

/// The config as `key = value` text that parse_config reads back unchanged.
inline std::string config_text(const TrainConfig& c) {
  std::ostringstream os;
  std::string lrs;
  for (const auto& [b, r] : c.lr_by_batch) lrs += (lrs.empty() ? "" : ",") + std::to_string(b) + ":" + format_exact(r);
  os << "experiment = " << to_string(c.experiment) << "\n"
     << "bas_rows = " << c.dataset.rows << "\nbas_cols = " << c.dataset.cols << "\n"
     << "ansatz = " << (c.ansatz == AnsatzVariant::EXPERIMENT ? "experiment" : "full_block") << "\n"
     << "depth = " << c.depth << "\nbatch = " << c.batch << "\niterations = " << c.iterations << "\n"
     << "lr_g = " << format_exact(c.lr_g) << "\nlr_d = " << format_exact(c.lr_d) << "\n"
     << "lr_by_batch = " << lrs << "\nd_steps = " << c.d_steps << "\n"
     << "kernel_bandwidths = " << detail::join_doubles(c.kernel.bandwidths) << "\n"
     << "mcr_eps2 = " << format_exact(c.mcr.eps2) << "\nmcr_feature_dim = " << c.mcr.feature_dim << "\n"
     << "tau_start = " << format_exact(c.gumbel.tau_start) << "\ntau_end = " << format_exact(c.gumbel.tau_end) << "\n"
     << "tau_anneal = " << (c.gumbel.anneal ? "true" : "false") << "\n"
     << "latent_dim = " << c.latent_dim << "\ngenerator_hidden = " << c.generator_hidden << "\n"
     << "generator_parameters = " << c.generator_parameters << "\n"
     << "discriminator_hidden = " << c.discriminator_hidden << "\n"
     << "disc_input = " << (c.disc_input == InputEncoding::kBinary ? "binary" : "signed") << "\n"
     << "eval_latents = " << c.eval_latents << "\nseed = " << c.seed << "\nstream = " << c.stream << "\n"
     << "tv_normalized = " << (c.tv_normalized ? "true" : "false") << "\n"
     << "coverage_threshold = " << format_exact(c.coverage_threshold) << "\n"
     << "early_stop = " << (c.early_stop ? "true" : "false") << "\n"
     << "early_stop_window = " << c.early_stop_window << "\n"
     << "early_stop_threshold = " << format_exact(c.early_stop_threshold) << "\n"
     << "eval_samples = " << c.eval_samples << "\n";
  return os.str();
}

inline nlohmann::json to_json(const TrainConfig& c) { return config_text(c); }
inline TrainConfig config_from_json(const nlohmann::json& j) { return parse_config_text(j.get<std::string>()); }

// Run records ----------------------------------------------------------------

struct SeriesPoint {
  long iteration = 0;
  double generator_loss = 0;  // NaN before the first update of the classical baseline
  double discriminator_loss = std::numeric_limits<double>::quiet_NaN();  // NaN when there is no discriminator
  double tv_norm = 0;
  double tv_raw = 0;
  int modes_covered = 0;
  double invalid_mass = 0;
  long d_updates = 0;  // cumulative discriminator updates
  int stage = 0;       // 0 for the run itself; fine-tuning appends stage 1

  friend bool operator==(const SeriesPoint& a, const SeriesPoint& b) {
    auto same = [](double x, double y) { return x == y || (std::isnan(x) && std::isnan(y)); };
    return a.iteration == b.iteration && same(a.generator_loss, b.generator_loss) &&
           same(a.discriminator_loss, b.discriminator_loss) && a.tv_norm == b.tv_norm && a.tv_raw == b.tv_raw &&
           a.modes_covered == b.modes_covered && a.invalid_mass == b.invalid_mass && a.d_updates == b.d_updates &&
           a.stage == b.stage;
  }
};

/// A model at one iteration: its exact distribution and its parameters.
struct Snapshot {
  long iteration = 0;
  DiscreteDistribution distribution;
  nlohmann::json model;  // MPQC program or classical generator
  friend bool operator==(const Snapshot&, const Snapshot&) = default;
};

struct RunRecord {
  TrainConfig config;
  std::vector<SeriesPoint> series;
  Snapshot final_state;
  Snapshot best;
  long generator_updates = 0;
  long discriminator_updates = 0;
  // Discriminator updates performed immediately before each generator update;
  // every entry equals d_steps for adversarial runs.
  std::vector<int> d_steps_before_g;
  bool early_stopped = false;
  double wall_clock_seconds = 0;  // excluded from equality and from record bytes

  double final_tv() const { return series.back().tv_norm; }
  double best_tv() const { return total_variation(best.distribution, target(), true); }
  DiscreteDistribution target() const { return bas_distribution(config.dataset); }

  friend bool operator==(const RunRecord& a, const RunRecord& b) {
    return a.config == b.config && a.series == b.series && a.final_state == b.final_state && a.best == b.best &&
           a.generator_updates == b.generator_updates && a.discriminator_updates == b.discriminator_updates &&
           a.d_steps_before_g == b.d_steps_before_g && a.early_stopped == b.early_stopped;
  }
};

namespace detail {

inline nlohmann::json nullable(double v) { return std::isnan(v) ? nlohmann::json(nullptr) : nlohmann::json(v); }
inline double from_nullable(const nlohmann::json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

inline nlohmann::json to_json(const Snapshot& s) {
  return {{"iteration", s.iteration},
          {"num_bits", s.distribution.num_bits()},
          {"distribution", std::vector<double>(s.distribution.masses().begin(), s.distribution.masses().end())},
          {"model", s.model}};
}

inline Snapshot snapshot_from_json(const nlohmann::json& j) {
  return {j.at("iteration").get<long>(),
          DiscreteDistribution(j.at("num_bits").get<int>(), j.at("distribution").get<std::vector<double>>()),
          j.at("model")};
}

}  // namespace detail

/// Columnar series, so equal column lengths hold by construction.
/// Wall-clock time is left out to keep identical runs byte-identical.
inline nlohmann::json to_json(const RunRecord& r) {
  nlohmann::json s;
  for (const char* k : {"iteration", "generator_loss", "discriminator_loss", "tv_norm", "tv_raw", "modes_covered",
                        "invalid_mass", "d_updates", "stage"})
    s[k] = nlohmann::json::array();
  for (const auto& p : r.series) {
    s["iteration"].push_back(p.iteration);
    s["generator_loss"].push_back(detail::nullable(p.generator_loss));
    s["discriminator_loss"].push_back(detail::nullable(p.discriminator_loss));
    s["tv_norm"].push_back(p.tv_norm);
    s["tv_raw"].push_back(p.tv_raw);
    s["modes_covered"].push_back(p.modes_covered);
    s["invalid_mass"].push_back(p.invalid_mass);
    s["d_updates"].push_back(p.d_updates);
    s["stage"].push_back(p.stage);
  }
  return {{"config", to_json(r.config)},
          {"series", s},
          {"final", detail::to_json(r.final_state)},
          {"best", detail::to_json(r.best)},
          {"generator_updates", r.generator_updates},
          {"discriminator_updates", r.discriminator_updates},
          {"d_steps_before_g", r.d_steps_before_g},
          {"early_stopped", r.early_stopped}};
}

inline RunRecord record_from_json(const nlohmann::json& j) {
  RunRecord r;
  r.config = config_from_json(j.at("config"));
  const auto& s = j.at("series");
  const std::size_t n = s.at("iteration").size();
  for (const auto& [k, v] : s.items())
    if (v.size() != n) throw ShapeError("series column '" + k + "' has a different length");
  for (std::size_t i = 0; i < n; ++i) {
    SeriesPoint p;
    p.iteration = s["iteration"][i].get<long>();
    p.generator_loss = detail::from_nullable(s["generator_loss"][i]);
    p.discriminator_loss = detail::from_nullable(s["discriminator_loss"][i]);
    p.tv_norm = s["tv_norm"][i].get<double>();
    p.tv_raw = s["tv_raw"][i].get<double>();
    p.modes_covered = s["modes_covered"][i].get<int>();
    p.invalid_mass = s["invalid_mass"][i].get<double>();
    p.d_updates = s["d_updates"][i].get<long>();
    p.stage = s["stage"][i].get<int>();
    r.series.push_back(p);
  }
  if (r.series.empty()) throw ShapeError("a run record needs at least one series point");
  r.final_state = detail::snapshot_from_json(j.at("final"));
  r.best = detail::snapshot_from_json(j.at("best"));
  r.generator_updates = j.at("generator_updates").get<long>();
  r.discriminator_updates = j.at("discriminator_updates").get<long>();
  r.d_steps_before_g = j.at("d_steps_before_g").get<std::vector<int>>();
  r.early_stopped = j.at("early_stopped").get<bool>();
  return r;
}

inline std::string record_bytes(const RunRecord& r) { return to_json(r).dump(1); }

inline void write_series_csv(std::ostream& os, const RunRecord& r) {
  os << "iteration,stage,generator_loss,discriminator_loss,tv_norm,tv_raw,modes_covered,invalid_mass,d_updates\n";
  auto num = [](double v) { return std::isnan(v) ? std::string() : format_exact(v); };
  for (const auto& p : r.series)
    os << p.iteration << ',' << p.stage << ',' << num(p.generator_loss) << ',' << num(p.discriminator_loss) << ','
       << format_exact(p.tv_norm) << ',' << format_exact(p.tv_raw) << ',' << p.modes_covered << ','
       << format_exact(p.invalid_mass) << ',' << p.d_updates << '\n';
}

// Training loops -------------------------------------------------------------

namespace detail {

/// Appends series points, tracks the best model and decides early stopping.
class Tracker {
 public:
  Tracker(const TrainConfig& cfg, RunRecord& record, int stage)
      : cfg_(cfg), record_(record), target_(bas_distribution(cfg.dataset)), stage_(stage),
        first_(record.series.size()) {}

  const DiscreteDistribution& target() const { return target_; }

  void add(long iteration, const DiscreteDistribution& model, const nlohmann::json& params, double g_loss,
           double d_loss) {
    SeriesPoint p;
    p.iteration = iteration;
    p.generator_loss = g_loss;
    p.discriminator_loss = d_loss;
    p.tv_norm = total_variation(model, target_, true);
    p.tv_raw = total_variation(model, target_, false);
    const auto cov = mode_coverage(model, target_, cfg_.coverage_threshold);
    p.modes_covered = cov.num_covered();
    p.invalid_mass = cov.invalid_mass;
    p.d_updates = record_.discriminator_updates;
    p.stage = stage_;
    record_.series.push_back(p);
    record_.final_state = {iteration, model, params};
    if (record_.series.size() == first_ + 1 || p.tv_norm < best_tv_) {
      best_tv_ = p.tv_norm;
      record_.best = record_.final_state;
    }
  }

  /// True when the last `window` points improved the earlier best by less than the threshold.
  bool plateaued() const {
    if (!cfg_.early_stop) return false;
    const std::size_t n = record_.series.size() - first_;
    const auto w = static_cast<std::size_t>(cfg_.early_stop_window);
    if (n <= w) return false;
    double before = std::numeric_limits<double>::infinity(), recent = before;
    for (std::size_t i = first_; i < record_.series.size(); ++i)
      (i < record_.series.size() - w ? before : recent) = std::min(i < record_.series.size() - w ? before : recent,
                                                                   record_.series[i].tv_norm);
    return before - recent < cfg_.early_stop_threshold;
  }

 private:
  const TrainConfig& cfg_;
  RunRecord& record_;
  DiscreteDistribution target_;
  int stage_;
  std::size_t first_;
  double best_tv_ = std::numeric_limits<double>::infinity();
};

inline Eigen::VectorXd encode_bits(Bitstring x, int n, InputEncoding enc) {
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) {
    const double b = bit_at(x, n, i + 1);
    v(i) = enc == InputEncoding::kBinary ? b : 2 * b - 1;
  }
  return v;
}

/// Encoded input for every bitstring, one per row of the result.
inline std::vector<Eigen::VectorXd> encoded_support(int n, InputEncoding enc) {
  std::vector<Eigen::VectorXd> out;
  for (Bitstring x = 0; x < (Bitstring{1} << n); ++x) out.push_back(encode_bits(x, n, enc));
  return out;
}

inline std::vector<double> score_table(const Discriminator& d, const std::vector<Eigen::VectorXd>& support) {
  std::vector<double> s;
  for (const auto& x : support) s.push_back(d.score_of(x));
  return s;
}

inline FeatureTable feature_table(const Discriminator& d, const std::vector<Eigen::VectorXd>& support) {
  FeatureTable phi(static_cast<Eigen::Index>(support.size()), d.feature_dim());
  for (std::size_t x = 0; x < support.size(); ++x) phi.row(static_cast<Eigen::Index>(x)) = d.features_of(support[x]);
  return phi;
}

/// Accumulated parameter gradient of the discriminator, laid out as parameters().
class DiscriminatorGrad {
 public:
  explicit DiscriminatorGrad(const Discriminator& d)
      : d_(d), trunk_(d.trunk.zero_gradients()), feat_(d.features.zero_gradients()), score_(d.score.zero_gradients()) {}

  /// Adds weight * d score(x) / d params; returns d score / d input scaled the same way.
  Eigen::VectorXd add_score(const Eigen::VectorXd& x, double weight) {
    MlpCache ct, cs;
    const Eigen::VectorXd h = d_.trunk.forward(x, &ct);
    d_.score.forward(h, &cs);
    const auto gs = d_.score.backward(cs, Eigen::VectorXd::Constant(1, weight));
    score_ += gs;
    const auto gt = d_.trunk.backward(ct, gs.input);
    trunk_ += gt;
    return gt.input;
  }

  /// Adds d (g . features(x)) / d params.
  void add_features(const Eigen::VectorXd& x, const Eigen::VectorXd& g) {
    MlpCache ct, cf;
    const Eigen::VectorXd h = d_.trunk.forward(x, &ct);
    d_.features.forward(h, &cf);
    const auto gf = d_.features.backward(cf, g);
    feat_ += gf;
    trunk_ += d_.trunk.backward(ct, gf.input);
  }

  Eigen::VectorXd flat() const {
    Eigen::VectorXd v(d_.parameter_count());
    v << Mlp::flatten(trunk_), Mlp::flatten(feat_), Mlp::flatten(score_);
    return v;
  }

 private:
  const Discriminator& d_;
  MlpGradients trunk_, feat_, score_;
};

/// d L / d D for one score under the clamped logs; zero where the clamp is active.
inline double clamped_log_grad(double d, bool real) {
  if (d <= kScoreClamp || d >= 1 - kScoreClamp) return 0.0;
  return real ? -1.0 / d : 1.0 / (1.0 - d);
}

inline void adam_update(Discriminator& d, const Eigen::VectorXd& grad, AdamState& opt) {
  Eigen::VectorXd p = d.parameters();
  adam_step(p, grad, opt);
  d.set_parameters(p);
}

inline std::vector<double> gan_d_losses_and_update(Discriminator& d, AdamState& opt, const DiscreteDistribution& real,
                                                   const DiscreteDistribution& fake,
                                                   const std::vector<Eigen::VectorXd>& support) {
  // Expected (or batch-averaged, via empirical distributions) non-saturating discriminator loss.
  DiscriminatorGrad g(d);
  const auto scores = score_table(d, support);
  for (std::size_t x = 0; x < support.size(); ++x) {
    const double w = real[x] * clamped_log_grad(scores[x], true) + fake[x] * clamped_log_grad(scores[x], false);
    if (w != 0.0) g.add_score(support[x], w);
  }
  adam_update(d, g.flat(), opt);
  return scores;
}

inline void mcr_d_update(Discriminator& d, AdamState& opt, const DiscreteDistribution& real,
                         const DiscreteDistribution& fake, const std::vector<Eigen::VectorXd>& support,
                         const McrConfig& cfg) {
  // The discriminator ascends Delta R: descend on -Delta R.
  const FeatureTable phi = feature_table(d, support);
  const FeatureTable grad = mcr_feature_gradient(fake, real, phi, cfg);
  DiscriminatorGrad g(d);
  for (std::size_t x = 0; x < support.size(); ++x) {
    const Eigen::VectorXd row = grad.row(static_cast<Eigen::Index>(x)).transpose();
    if (row.cwiseAbs().maxCoeff() > 0) g.add_features(support[x], -row);
  }
  adam_update(d, g.flat(), opt);
}

inline MpqcProgram initial_program(const TrainConfig& cfg) {
  const int n = cfg.num_bits();
  return MpqcProgram::random(n, cfg.ansatz_spec(), EntanglementPattern::ladder(n), cfg.seed);
}

inline DiscreteDistribution empirical(const DiscreteDistribution& p, int batch, Rng& rng) {
  return empirical_distribution(Sampler(p).draw(static_cast<std::size_t>(batch), rng), p.num_bits());
}

/// Shared loop for the generator-is-a-circuit experiments.
inline void train_born(const TrainConfig& cfg, MpqcProgram program, ExperimentId loss, RunRecord& rec, int stage,
                       long iteration_offset) {
  Tracker track(cfg, rec, stage);
  const auto& target = track.target();
  const int n = cfg.num_bits();
  Rng rng = Rng::derive(cfg.seed, cfg.stream);
  const auto kmat = kernel_matrix(n, cfg.kernel);
  const auto support = encoded_support(n, cfg.disc_input);
  const bool adversarial = loss == ExperimentId::kBornAdv || loss == ExperimentId::kBornMcr;
  std::optional<Discriminator> disc;
  AdamState d_opt;
  if (adversarial) {
    Rng init = Rng::derive(cfg.seed, kDiscriminatorStream);
    disc.emplace(n, cfg.discriminator_hidden, cfg.mcr.feature_dim, init);
    d_opt = AdamState(disc->parameter_count(), cfg.discriminator_rate());
  }
  std::vector<double> theta = program.parameters();
  AdamState g_opt(static_cast<Eigen::Index>(theta.size()), cfg.generator_rate());

  auto losses = [&](const DiscreteDistribution& p) -> std::pair<double, double> {
    switch (loss) {
      case ExperimentId::kBornAdv: {
        const auto l = gan_losses(target, p, score_table(*disc, support));
        return {l.generator, l.discriminator};
      }
      case ExperimentId::kBornMcr: {
        const double r = mcr_delta_r_probability(p, target, feature_table(*disc, support), cfg.mcr);
        return {r, -r};
      }
      default: return {mmd_loss(p, target, kmat), std::numeric_limits<double>::quiet_NaN()};
    }
  };

  DiscreteDistribution p = output_distribution(program);
  {
    const auto [lg, ld] = losses(p);
    track.add(iteration_offset, p, to_json(program), lg, ld);
  }
  for (long it = 1; it <= cfg.iterations; ++it) {
    if (adversarial) {
      for (int k = 0; k < cfg.d_steps; ++k) {
        const auto real = cfg.exact() ? target : empirical(target, cfg.batch, rng);
        const auto fake = cfg.exact() ? p : empirical(p, cfg.batch, rng);
        if (loss == ExperimentId::kBornAdv) gan_d_losses_and_update(*disc, d_opt, real, fake, support);
        else mcr_d_update(*disc, d_opt, real, fake, support, cfg.mcr);
        ++rec.discriminator_updates;
      }
      rec.d_steps_before_g.push_back(cfg.d_steps);
    }
    const auto pairs = all_shifted_distributions(program);
    std::vector<double> grad(theta.size());
    const std::vector<double> scores = loss == ExperimentId::kBornAdv ? score_table(*disc, support) : std::vector<double>{};
    const FeatureTable phi = loss == ExperimentId::kBornMcr ? feature_table(*disc, support) : FeatureTable{};
    for (std::size_t k = 0; k < pairs.size(); ++k) {
      const auto& s = pairs[k];
      const auto m = static_cast<std::size_t>(cfg.batch);
      switch (loss) {
        case ExperimentId::kBornAdv:
          grad[k] = cfg.exact() ? gan_generator_gradient(s, scores) : gan_generator_gradient_sampled(s, scores, m, rng);
          break;
        case ExperimentId::kBornMcr:
          if (cfg.exact()) {
            grad[k] = mcr_gradient_nn(s.plus, s.minus, p, target, phi, cfg.mcr);
          } else {
            const auto b = draw_mcr_batches(s, p, target, m, rng);
            grad[k] = mcr_gradient_nn(b.plus, b.minus, b.model, b.data, phi, cfg.mcr);
          }
          break;
        default:
          grad[k] = cfg.exact() ? mmd_gradient(s, p, target, kmat) : mmd_gradient_sampled(s, p, target, kmat, m, rng);
      }
    }
    adam_step(theta, grad, g_opt);
    program = program.with_parameters(theta);
    ++rec.generator_updates;
    p = output_distribution(program);
    const auto [lg, ld] = losses(p);
    track.add(iteration_offset + it, p, to_json(program), lg, ld);
    if (track.plateaued()) {
      rec.early_stopped = true;
      break;
    }
  }
}

/// Exact argmax distribution of the generator over a fixed latent set:
/// pixels are independent Bernoulli(sigmoid(on - off)) given z.
inline DiscreteDistribution generator_distribution(const ClassicalGenerator& g, const std::vector<Eigen::VectorXd>& zs) {
  const int n = g.pixels();
  std::vector<double> mass(std::size_t{1} << n, 0.0);
  for (const auto& z : zs) {
    const Eigen::VectorXd q = g.on_probabilities(z);
    for (Bitstring x = 0; x < mass.size(); ++x) {
      double w = 1;
      for (int i = 0; i < n; ++i) w *= bit_at(x, n, i + 1) ? q(i) : 1 - q(i);
      mass[x] += w;
    }
  }
  return DiscreteDistribution::normalized(n, std::move(mass));
}

struct FakeSample {
  Eigen::VectorXd z, x;   // latent and relaxed pixels (soft "on" probabilities)
  Eigen::VectorXd slope;  // d x_i / d (on_i - off_i)
};

inline FakeSample draw_fake(const ClassicalGenerator& g, double tau, Rng& rng) {
  FakeSample f;
  f.z.resize(g.latent_size());
  for (int i = 0; i < g.latent_size(); ++i) f.z(i) = rng.normal();
  const Eigen::VectorXd on = g.net.forward(f.z);
  f.x.resize(g.pixels());
  f.slope.resize(g.pixels());
  for (int i = 0; i < g.pixels(); ++i) {
    const double logits[2] = {g.off_logits(i), on(i)};
    const auto noise = gumbel_noise(2, rng);
    const auto y = gumbel_softmax_with_noise(logits, noise, tau);
    f.x(i) = y[1];
    f.slope(i) = y[1] * y[0] / tau;
  }
  return f;
}

inline Eigen::VectorXd encode_soft(const Eigen::VectorXd& x, InputEncoding enc) {
  return enc == InputEncoding::kBinary ? x : Eigen::VectorXd(2 * x.array() - 1);
}

inline void train_gumbel(const TrainConfig& cfg, RunRecord& rec) {
  Tracker track(cfg, rec, 0);
  const int n = cfg.num_bits();
  const auto& target = track.target();
  Rng init_g = Rng::derive(cfg.seed, kGeneratorStream);
  ClassicalGenerator gen(cfg.latent_dim, n, cfg.generator_hidden, init_g);
  if (cfg.generator_parameters > 0 && gen.parameter_count() != cfg.generator_parameters)
    throw ConfigError("generator has " + std::to_string(gen.parameter_count()) + " parameters, config demands " +
                      std::to_string(cfg.generator_parameters));
  Rng init_d = Rng::derive(cfg.seed, kDiscriminatorStream);
  Discriminator disc(n, cfg.discriminator_hidden, cfg.mcr.feature_dim, init_d);
  Rng latent_rng = Rng::derive(cfg.seed, kLatentStream);
  std::vector<Eigen::VectorXd> zs(static_cast<std::size_t>(cfg.eval_latents), Eigen::VectorXd(cfg.latent_dim));
  for (auto& z : zs)
    for (int i = 0; i < cfg.latent_dim; ++i) z(i) = latent_rng.normal();
  Rng rng = Rng::derive(cfg.seed, cfg.stream);
  AdamState g_opt(gen.parameter_count(), cfg.generator_rate());
  AdamState d_opt(disc.parameter_count(), cfg.discriminator_rate());
  const double enc_scale = cfg.disc_input == InputEncoding::kBinary ? 1.0 : 2.0;
  const Sampler data(target);
  const auto m = static_cast<std::size_t>(cfg.batch);

  double g_loss = std::numeric_limits<double>::quiet_NaN(), d_loss = g_loss;
  track.add(0, generator_distribution(gen, zs), to_json(gen), g_loss, d_loss);
  for (long it = 1; it <= cfg.iterations; ++it) {
    const double tau = temperature_at(cfg.gumbel, it - 1, cfg.iterations);
    for (int k = 0; k < cfg.d_steps; ++k) {
      DiscriminatorGrad g(disc);
      std::vector<double> real_scores, fake_scores;
      for (std::size_t b = 0; b < m; ++b) {
        const Eigen::VectorXd xr = encode_bits(data.draw(rng), n, cfg.disc_input);
        const double sr = disc.score_of(xr);
        real_scores.push_back(sr);
        g.add_score(xr, clamped_log_grad(sr, true) / static_cast<double>(m));
        const Eigen::VectorXd xf = encode_soft(draw_fake(gen, tau, rng).x, cfg.disc_input);
        const double sf = disc.score_of(xf);
        fake_scores.push_back(sf);
        g.add_score(xf, clamped_log_grad(sf, false) / static_cast<double>(m));
      }
      d_loss = gan_losses(real_scores, fake_scores).discriminator;
      adam_update(disc, g.flat(), d_opt);
      ++rec.discriminator_updates;
    }
    rec.d_steps_before_g.push_back(cfg.d_steps);

    MlpGradients net_grad = gen.net.zero_gradients();
    Eigen::VectorXd off_grad = Eigen::VectorXd::Zero(n);
    double lg = 0;
    for (std::size_t b = 0; b < m; ++b) {
      const FakeSample f = draw_fake(gen, tau, rng);
      DiscriminatorGrad scratch(disc);
      const double s = disc.score_of(encode_soft(f.x, cfg.disc_input));
      lg -= std::log(clamp_score(s));
      // d(-ln D)/dD = -1/D, pushed back to the relaxed pixels.
      const Eigen::VectorXd dx =
          enc_scale * scratch.add_score(encode_soft(f.x, cfg.disc_input), clamped_log_grad(s, true) / static_cast<double>(m));
      const Eigen::VectorXd dgap = dx.cwiseProduct(f.slope);
      MlpCache cache;
      gen.net.forward(f.z, &cache);
      net_grad += gen.net.backward(cache, dgap);
      off_grad -= dgap;
    }
    g_loss = lg / static_cast<double>(m);
    Eigen::VectorXd params = gen.parameters(), grad(gen.parameter_count());
    grad << Mlp::flatten(net_grad), off_grad;
    adam_step(params, grad, g_opt);
    gen.set_parameters(params);
    ++rec.generator_updates;
    track.add(it, generator_distribution(gen, zs), to_json(gen), g_loss, d_loss);
    if (track.plateaued()) {
      rec.early_stopped = true;
      break;
    }
  }
}

}  // namespace detail

inline RunRecord run_experiment(const TrainConfig& cfg) {
  cfg.validate();
  const auto start = std::chrono::steady_clock::now();
  RunRecord rec;
  rec.config = cfg;
  switch (cfg.experiment) {
    case ExperimentId::kGumbelGan: detail::train_gumbel(cfg, rec); break;
    case ExperimentId::kBornMmd:
    case ExperimentId::kBornAdv:
    case ExperimentId::kBornMcr:
      detail::train_born(cfg, detail::initial_program(cfg), cfg.experiment, rec, 0, 0);
      break;
    case ExperimentId::kFinetune:
      throw ConfigError("FINETUNE continues an adversarial record; use finetune()");
  }
  rec.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rec;
}

/// Continues a BORN_ADV run with MMD-against-data updates only. The result
/// holds the adversarial series (stage 0) followed by its own (stage 1);
/// best-model tracking covers stage 1, whose first point is the starting state.
inline RunRecord finetune(const RunRecord& adv, const TrainConfig& cfg) {
  cfg.validate();
  if (adv.config.experiment != ExperimentId::kBornAdv) throw ConfigError("fine-tuning starts from a BORN_ADV record");
  if (adv.config.ansatz != cfg.ansatz || adv.config.depth != cfg.depth || !(adv.config.dataset == cfg.dataset))
    throw ConfigError("fine-tune config does not match the record's ansatz or dataset");
  const auto start = std::chrono::steady_clock::now();
  RunRecord rec;
  rec.config = cfg;
  rec.config.experiment = ExperimentId::kFinetune;
  rec.series = adv.series;
  rec.generator_updates = adv.generator_updates;
  rec.discriminator_updates = adv.discriminator_updates;
  rec.d_steps_before_g = adv.d_steps_before_g;
  detail::train_born(rec.config, program_from_json(adv.final_state.model), ExperimentId::kBornMmd, rec, 1,
                     adv.series.back().iteration);
  rec.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rec;
}

struct EvaluationReport {
  long samples = 0;  // 0: exact, the stored distribution itself
  DiscreteDistribution distribution;
  double tv_norm = 0;
  double tv_raw = 0;
  int modes_covered = 0;
  int num_modes = 0;
  double invalid_mass = 0;
  friend bool operator==(const EvaluationReport&, const EvaluationReport&) = default;
};

inline EvaluationReport evaluate_distribution(const DiscreteDistribution& model, const DiscreteDistribution& target,
                                              long samples, std::uint64_t seed, double threshold = 0.5) {
  if (samples < 0) throw ParameterError("sample count must be non-negative");
  EvaluationReport r;
  r.samples = samples;
  if (samples == 0) {
    r.distribution = model;
  } else {
    Rng rng = Rng::derive(seed, 0xE7A1);
    r.distribution = empirical_distribution(Sampler(model).draw(static_cast<std::size_t>(samples), rng), model.num_bits());
  }
  r.tv_norm = total_variation(r.distribution, target, true);
  r.tv_raw = total_variation(r.distribution, target, false);
  const auto cov = mode_coverage(r.distribution, target, threshold);
  r.modes_covered = cov.num_covered();
  r.num_modes = cov.num_modes();
  r.invalid_mass = cov.invalid_mass;
  return r;
}

/// Evaluates the record's final model with `samples` generated draws.
inline EvaluationReport evaluate(const RunRecord& rec, long samples) {
  return evaluate_distribution(rec.final_state.distribution, rec.target(), samples, rec.config.seed,
                               rec.config.coverage_threshold);
}

inline nlohmann::json to_json(const EvaluationReport& r) {
  return {{"samples", r.samples},
          {"tv_norm", r.tv_norm},
          {"tv_raw", r.tv_raw},
          {"modes_covered", r.modes_covered},
          {"num_modes", r.num_modes},
          {"invalid_mass", r.invalid_mass},
          {"num_bits", r.distribution.num_bits()},
          {"distribution", std::vector<double>(r.distribution.masses().begin(), r.distribution.masses().end())}};
}

inline EvaluationReport report_from_json(const nlohmann::json& j) {
  EvaluationReport r;
  r.samples = j.at("samples").get<long>();
  r.tv_norm = j.at("tv_norm").get<double>();
  r.tv_raw = j.at("tv_raw").get<double>();
  r.modes_covered = j.at("modes_covered").get<int>();
  r.num_modes = j.at("num_modes").get<int>();
  r.invalid_mass = j.at("invalid_mass").get<double>();
  r.distribution = DiscreteDistribution(j.at("num_bits").get<int>(), j.at("distribution").get<std::vector<double>>());
  return r;
}

/// One run per batch size from the same seed; run i samples from stream i,
/// so any number of worker threads produces the same records.
inline std::vector<RunRecord> sweep(const TrainConfig& base, const std::vector<int>& batches, unsigned threads = 1) {
  if (batches.empty()) throw ConfigError("sweep needs at least one batch size");
  std::vector<TrainConfig> configs;
  for (std::size_t i = 0; i < batches.size(); ++i) {
    TrainConfig c = base;
    c.batch = batches[i];
    c.stream = i;
    c.validate();
    configs.push_back(std::move(c));
  }
  std::vector<RunRecord> out(configs.size());
  std::vector<std::exception_ptr> errors(configs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next++) < configs.size();) {
      try {
        out[i] = run_experiment(configs[i]);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < std::min<std::size_t>(std::max(threads, 1U), configs.size()); ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

inline void write_summary_csv(std::ostream& os, const std::vector<RunRecord>& runs) {
  os << "batch,final_tv_norm,final_tv_raw,best_tv_norm,invalid_mass,modes_covered\n";
  for (const auto& r : runs) {
    const auto& f = r.series.back();
    os << r.config.batch << ',' << format_exact(f.tv_norm) << ',' << format_exact(f.tv_raw) << ','
       << format_exact(r.best_tv()) << ',' << format_exact(f.invalid_mass) << ',' << f.modes_covered << '\n';
  }
}

/// Plot-ready CSV: `tv`, `distribution` or `losses`.
inline void write_plotdata(std::ostream& os, const RunRecord& r, const std::string& what) {
  auto num = [](double v) { return std::isnan(v) ? std::string() : format_exact(v); };
  if (what == "tv") {
    os << "iteration,tv_norm,tv_raw\n";
    for (const auto& p : r.series) os << p.iteration << ',' << format_exact(p.tv_norm) << ',' << format_exact(p.tv_raw) << '\n';
  } else if (what == "losses") {
    os << "iteration,generator_loss,discriminator_loss\n";
    for (const auto& p : r.series) os << p.iteration << ',' << num(p.generator_loss) << ',' << num(p.discriminator_loss) << '\n';
  } else if (what == "distribution") {
    const auto target = r.target();
    os << "bitstring,target,final,best\n";
    for (Bitstring x = 0; x < target.size(); ++x)
      os << to_bitstring(x, target.num_bits()) << ',' << format_exact(target[x]) << ','
         << format_exact(r.final_state.distribution[x]) << ',' << format_exact(r.best.distribution[x]) << '\n';
  } else {
    throw ConfigError("plotdata --what must be tv, distribution or losses");
  }
}

}  // namespace qborn

#endif  // QBORN_HARNESS_HPP
