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
#include <cstdlib>
#include <sstream>

#include "qborn/harness.hpp"

namespace qborn {
namespace {

TrainConfig short_run(ExperimentId e, int batch, long iterations) {
  TrainConfig c;
  c.experiment = e;
  c.batch = batch;
  c.iterations = iterations;
  return c;
}

TEST(TrainConfig, ParsesKeysCommentsAndBlankLines) {
  const auto c = parse_config_text(
      "# comment\n\nexperiment = BORN_ADV   # trailing\nbatch = 16\niterations=50\nlr_by_batch = 4:1e-4, 8:5e-4\n"
      "kernel_bandwidths = 1,2\ntau_anneal = false\ndisc_input = signed\n");
  EXPECT_EQ(c.experiment, ExperimentId::kBornAdv);
  EXPECT_EQ(c.batch, 16);
  EXPECT_EQ(c.iterations, 50);
  EXPECT_EQ(c.lr_by_batch.at(4), 1e-4);
  EXPECT_EQ(c.lr_by_batch.at(8), 5e-4);
  EXPECT_EQ(c.kernel.bandwidths, (std::vector<double>{1, 2}));
  EXPECT_FALSE(c.gumbel.anneal);
  EXPECT_EQ(c.disc_input, InputEncoding::kSigned);
  EXPECT_EQ(c.seed, 700u);
}

TEST(TrainConfig, UnknownKeyIsAnError) {
  EXPECT_THROW(parse_config_text("batch = 4\nlearning_rate = 0.1\n"), ConfigError);
  EXPECT_THROW(parse_config_text("batch 4\n"), ConfigError);
  EXPECT_THROW(parse_config_text("batch = four\n"), ConfigError);
  EXPECT_THROW(parse_config_text("experiment = BORN\n"), ConfigError);
  EXPECT_THROW(parse_config_text("tau_anneal = maybe\n"), ConfigError);
}

TEST(TrainConfig, TextRoundTrips) {
  auto c = parse_config_text("experiment = BORN_MCR\nbatch = 4\nlr_by_batch = 4:1e-4\nmcr_eps2 = 0.3\nseed = 9\n");
  EXPECT_EQ(parse_config_text(config_text(c)), c);
  EXPECT_EQ(config_from_json(to_json(c)), c);
}

TEST(TrainConfig, BatchSpecificRate) {
  auto c = parse_config_text("lr_g = 1e-3\nlr_d = 2e-3\nlr_by_batch = 4:1e-4\n");
  c.batch = 64;
  EXPECT_EQ(c.generator_rate(), 1e-3);
  EXPECT_EQ(c.discriminator_rate(), 2e-3);
  c.batch = 4;
  EXPECT_EQ(c.generator_rate(), 1e-4);
  EXPECT_EQ(c.discriminator_rate(), 1e-4);
}

TEST(TrainConfig, ValidationRejectsBadCombinations) {
  EXPECT_THROW(short_run(ExperimentId::kGumbelGan, 0, 10).validate(), ConfigError);
  EXPECT_THROW(short_run(ExperimentId::kBornMmd, -1, 10).validate(), ConfigError);
  EXPECT_THROW(short_run(ExperimentId::kBornMmd, 0, -1).validate(), ConfigError);
  auto c = short_run(ExperimentId::kBornMmd, 0, 10);
  c.kernel.bandwidths.clear();
  EXPECT_THROW(c.validate(), ConfigError);
  c = short_run(ExperimentId::kBornAdv, 0, 10);
  c.d_steps = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_THROW(run_experiment(short_run(ExperimentId::kFinetune, 0, 1)), ConfigError);
}

TEST(TrainConfig, SeedEnvironmentOverride) {
  TrainConfig c;
  ::setenv("QBORN_SEED", "1234", 1);
  apply_env_overrides(c);
  ::unsetenv("QBORN_SEED");
  EXPECT_EQ(c.seed, 1234u);
  apply_env_overrides(c);
  EXPECT_EQ(c.seed, 1234u);
}

TEST(RunExperiment, ExactMmdLearnsBarsAndStripes) {
  const auto r = run_experiment(short_run(ExperimentId::kBornMmd, kExactBatch, 2000));
  EXPECT_LT(r.final_tv(), 0.1);
  EXPECT_EQ(r.series.size(), 2001u);
  EXPECT_EQ(r.generator_updates, 2000);
}

TEST(RunExperiment, SameSeedGivesIdenticalRecords) {
  for (auto e : {ExperimentId::kBornMmd, ExperimentId::kBornAdv, ExperimentId::kBornMcr, ExperimentId::kGumbelGan}) {
    const auto c = short_run(e, 8, 15);
    const auto a = run_experiment(c), b = run_experiment(c);
    EXPECT_EQ(a, b) << to_string(e);
    EXPECT_EQ(record_bytes(a), record_bytes(b)) << to_string(e);
  }
}

TEST(RunExperiment, DifferentSeedsDiffer) {
  auto c = short_run(ExperimentId::kBornMmd, 8, 5);
  const auto a = run_experiment(c);
  c.seed = 701;
  EXPECT_NE(record_bytes(a), record_bytes(run_experiment(c)));
}

TEST(RunExperiment, ZeroIterationGumbelKeepsInitialTv) {
  const auto r = run_experiment(short_run(ExperimentId::kGumbelGan, 64, 0));
  ASSERT_EQ(r.series.size(), 1u);
  EXPECT_EQ(r.final_tv(), r.best_tv());
  EXPECT_EQ(r.final_state.distribution, r.best.distribution);
  const auto longer = run_experiment(short_run(ExperimentId::kGumbelGan, 64, 3));
  EXPECT_EQ(longer.series.front().tv_norm, r.final_tv());
}

TEST(RunExperiment, DefaultGeneratorCountIsEnforced) {
  auto c = short_run(ExperimentId::kGumbelGan, 8, 1);
  c.generator_hidden = 5;
  EXPECT_THROW(run_experiment(c), ConfigError);
  c.generator_parameters = 0;
  EXPECT_NO_THROW(run_experiment(c));
}

TEST(RunExperiment, DiscriminatorStepsPrecedeEachGeneratorUpdate) {
  for (auto e : {ExperimentId::kBornAdv, ExperimentId::kBornMcr, ExperimentId::kGumbelGan}) {
    auto c = short_run(e, 8, 12);
    c.d_steps = 3;
    const auto r = run_experiment(c);
    EXPECT_EQ(r.generator_updates, 12);
    EXPECT_EQ(r.discriminator_updates, 36);
    EXPECT_EQ(r.d_steps_before_g, std::vector<int>(12, 3));
    for (std::size_t i = 0; i < r.series.size(); ++i) EXPECT_EQ(r.series[i].d_updates, static_cast<long>(3 * i));
  }
  const auto mmd = run_experiment(short_run(ExperimentId::kBornMmd, 8, 5));
  EXPECT_EQ(mmd.discriminator_updates, 0);
  EXPECT_TRUE(std::isnan(mmd.series.back().discriminator_loss));
}

TEST(RunExperiment, SeriesInvariants) {
  for (auto e : {ExperimentId::kBornMmd, ExperimentId::kBornAdv, ExperimentId::kBornMcr, ExperimentId::kGumbelGan}) {
    const auto r = run_experiment(short_run(e, 16, 40));
    double min_tv = 1e9;
    for (const auto& p : r.series) {
      min_tv = std::min(min_tv, p.tv_norm);
      EXPECT_NEAR(p.tv_raw, 2 * p.tv_norm, 1e-12);
      if (p.iteration > 0) {
        EXPECT_TRUE(std::isfinite(p.generator_loss));
      }
    }
    EXPECT_EQ(r.best_tv(), min_tv);
    const auto target = r.target();
    EXPECT_NEAR(total_variation(r.final_state.distribution, target), r.final_tv(), 1e-9);
    EXPECT_NEAR(r.final_state.distribution.total(), 1.0, 1e-9);
    EXPECT_NEAR(r.best.distribution.total(), 1.0, 1e-9);
  }
}

TEST(RunExperiment, EarlyStopOnPlateau) {
  auto c = short_run(ExperimentId::kBornMmd, 4, 500);
  c.early_stop = true;
  c.early_stop_window = 5;
  c.early_stop_threshold = 1.0;
  const auto r = run_experiment(c);
  EXPECT_TRUE(r.early_stopped);
  EXPECT_EQ(r.series.size(), 6u);  // the window follows the first point
}

TEST(RunRecord, JsonRoundTripIsExact) {
  const auto r = run_experiment(short_run(ExperimentId::kBornAdv, 8, 10));
  const auto back = record_from_json(nlohmann::json::parse(record_bytes(r)));
  EXPECT_EQ(back, r);
  EXPECT_EQ(record_bytes(back), record_bytes(r));
  const auto g = run_experiment(short_run(ExperimentId::kGumbelGan, 8, 3));
  EXPECT_EQ(record_from_json(to_json(g)), g);
}

TEST(RunRecord, RaggedSeriesRejected) {
  auto j = to_json(run_experiment(short_run(ExperimentId::kBornMmd, 0, 3)));
  j["series"]["tv_norm"].push_back(0.5);
  EXPECT_THROW(record_from_json(j), ShapeError);
}

TEST(Finetune, ZeroIterationsKeepsTheAdversarialState) {
  const auto adv = run_experiment(short_run(ExperimentId::kBornAdv, 8, 20));
  const auto ft = finetune(adv, short_run(ExperimentId::kFinetune, 0, 0));
  EXPECT_EQ(ft.final_state.distribution, adv.final_state.distribution);
  EXPECT_EQ(ft.final_state.model, adv.final_state.model);
  EXPECT_EQ(ft.series.size(), adv.series.size() + 1);
  EXPECT_EQ(ft.series.back().stage, 1);
  EXPECT_EQ(ft.series.back().iteration, adv.series.back().iteration);
}

TEST(Finetune, AppendsSeriesAndContinuesIterationCount) {
  const auto adv = run_experiment(short_run(ExperimentId::kBornAdv, 8, 10));
  auto c = short_run(ExperimentId::kFinetune, 0, 5);
  c.lr_g = 1e-4;
  const auto ft = finetune(adv, c);
  ASSERT_EQ(ft.series.size(), adv.series.size() + 6);
  EXPECT_EQ(ft.series.back().iteration, 15);
  EXPECT_EQ(ft.generator_updates, adv.generator_updates + 5);
  EXPECT_EQ(ft.discriminator_updates, adv.discriminator_updates);
  EXPECT_EQ(ft.config.experiment, ExperimentId::kFinetune);
}

TEST(Finetune, NearOptimalCircuitStaysNearOptimal) {
  const auto adv = run_experiment(short_run(ExperimentId::kBornAdv, kExactBatch, 2000));
  ASSERT_LT(adv.final_tv(), 0.05);
  auto c = short_run(ExperimentId::kFinetune, 0, 300);
  c.lr_g = 1e-4;
  EXPECT_LE(finetune(adv, c).final_tv(), adv.final_tv() + 0.02);
}

TEST(Finetune, RejectsWrongSourceOrAnsatz) {
  const auto mmd = run_experiment(short_run(ExperimentId::kBornMmd, 0, 2));
  EXPECT_THROW(finetune(mmd, short_run(ExperimentId::kFinetune, 0, 1)), ConfigError);
  const auto adv = run_experiment(short_run(ExperimentId::kBornAdv, 0, 2));
  auto c = short_run(ExperimentId::kFinetune, 0, 1);
  c.depth = 3;
  EXPECT_THROW(finetune(adv, c), ConfigError);
}

TEST(Evaluate, ExactTargetAgainstItself) {
  const auto t = bas_distribution({2, 2});
  const auto r = evaluate_distribution(t, t, 0, 700);
  EXPECT_EQ(r.tv_norm, 0.0);
  EXPECT_EQ(r.modes_covered, 6);
  EXPECT_EQ(r.invalid_mass, 0.0);
}

TEST(Evaluate, SampledEstimateConcentrates) {
  Rng rng(3);
  std::vector<double> w(16);
  for (double& v : w) v = rng.uniform();
  const auto p = DiscreteDistribution::normalized(4, w);
  const auto r = evaluate_distribution(p, bas_distribution({2, 2}), 16000, 700);
  EXPECT_LT(total_variation(r.distribution, p), 0.03);
  EXPECT_EQ(r.samples, 16000);
}

TEST(Evaluate, ReportRoundTripsThroughJsonAndCsv) {
  const auto rec = run_experiment(short_run(ExperimentId::kBornMmd, 0, 5));
  const auto r = evaluate(rec, 16000);
  EXPECT_EQ(report_from_json(nlohmann::json::parse(to_json(r).dump())), r);
  std::stringstream csv;
  write_distribution_csv(csv, r.distribution);
  EXPECT_EQ(read_distribution_csv(csv), r.distribution);
  EXPECT_EQ(evaluate(rec, 0).distribution, rec.final_state.distribution);
  EXPECT_THROW(evaluate(rec, -1), ParameterError);
}

TEST(Sweep, SingleEntryEqualsRunExperiment) {
  const auto c = short_run(ExperimentId::kBornAdv, 16, 10);
  const auto runs = sweep(c, {16});
  ASSERT_EQ(runs.size(), 1u);
  EXPECT_EQ(runs[0], run_experiment(c));
}

TEST(Sweep, ThreadCountDoesNotChangeRecords) {
  const auto c = short_run(ExperimentId::kBornMmd, 0, 10);
  const auto a = sweep(c, {0, 64, 16, 4}, 1), b = sweep(c, {0, 64, 16, 4}, 3);
  ASSERT_EQ(a.size(), 4u);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(record_bytes(a[i]), record_bytes(b[i]));
  EXPECT_THROW(sweep(c, {}), ConfigError);
}

TEST(Sweep, SummaryColumns) {
  const auto runs = sweep(short_run(ExperimentId::kBornMmd, 0, 3), {0, 4});
  std::ostringstream os;
  write_summary_csv(os, runs);
  std::istringstream is(os.str());
  std::string header, row;
  std::getline(is, header);
  EXPECT_EQ(header, "batch,final_tv_norm,final_tv_raw,best_tv_norm,invalid_mass,modes_covered");
  std::getline(is, row);
  EXPECT_EQ(row.substr(0, 2), "0,");
}

TEST(PlotData, EmitsRequestedTables) {
  const auto r = run_experiment(short_run(ExperimentId::kBornAdv, 8, 4));
  for (const char* what : {"tv", "losses", "distribution"}) {
    std::ostringstream os;
    write_plotdata(os, r, what);
    const std::string s = os.str();
    const auto lines = std::count(s.begin(), s.end(), '\n');
    EXPECT_EQ(lines, std::string(what) == "distribution" ? 17 : 6) << what;
  }
  std::ostringstream os;
  EXPECT_THROW(write_plotdata(os, r, "histogram"), ConfigError);
}

}  // namespace
}  // namespace qborn
