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


// Command-line front end: training, sweeps, fine-tuning, evaluation, the
// IQP compiler and plot data export.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "qborn/harness.hpp"
#include "qborn/iqp.hpp"

namespace fs = std::filesystem;
using namespace qborn;

namespace {

nlohmann::json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  return nlohmann::json::parse(in);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << text;
}

void write_run(const fs::path& dir, const RunRecord& r) {
  fs::create_directories(dir);
  write_text(dir / "record.json", record_bytes(r) + "\n");
  std::ostringstream dist, series;
  write_distribution_csv(dist, r.final_state.distribution);
  write_series_csv(series, r);
  write_text(dir / "distribution.csv", dist.str());
  write_text(dir / "series.csv", series.str());
  write_text(dir / "timing.json", nlohmann::json{{"wall_clock_seconds", r.wall_clock_seconds}}.dump() + "\n");
}

void print_summary(const RunRecord& r) {
  const auto& f = r.series.back();
  std::cout << to_string(r.config.experiment) << " batch=" << (r.config.exact() ? "exact" : std::to_string(r.config.batch))
            << " iterations=" << f.iteration << " final_tv=" << format_exact(r.config.tv_normalized ? f.tv_norm : f.tv_raw)
            << " best_tv=" << format_exact(r.config.tv_normalized ? r.best_tv() : 2 * r.best_tv())
            << " modes=" << f.modes_covered << " invalid_mass=" << format_exact(f.invalid_mass)
            << " seconds=" << r.wall_clock_seconds << "\n";
}

std::vector<int> parse_batches(const std::string& text) {
  std::vector<int> out;
  for (const auto& item : detail::split(text, ',')) out.push_back(item == "exact" ? kExactBatch : std::stoi(item));
  return out;
}

IqpCircuit load_circuit(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open circuit file " + path);
  IqpCircuit c = read_circuit(in);
  return c.basis == IqpBasis::kX ? to_z_diagonal_form(c) : c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"qborn: Born-machine training on bars-and-stripes, with an IQP-to-MPQC compiler"};
  app.require_subcommand(1);

  std::string config, out_dir = ".", from, batches = "0,64,16,4", what, circuit, compiled, out_file;
  long samples = 16000;
  unsigned threads = 1;

  auto* train = app.add_subcommand("train", "run one experiment");
  train->add_option("--config", config, "config file")->required();
  train->add_option("--out", out_dir, "output directory");

  auto* sw = app.add_subcommand("sweep", "one run per batch size (0 = exact)");
  sw->add_option("--config", config, "config file")->required();
  sw->add_option("--batches", batches, "comma-separated batch sizes");
  sw->add_option("--out", out_dir, "output directory");
  sw->add_option("--threads", threads, "parallel runs");

  auto* ft = app.add_subcommand("finetune", "MMD fine-tuning of an adversarial run");
  ft->add_option("--from", from, "BORN_ADV record.json")->required();
  ft->add_option("--config", config, "fine-tune config file")->required();
  ft->add_option("--out", out_dir, "output directory");

  auto* ev = app.add_subcommand("eval", "sample the final model of a record");
  ev->add_option("--from", from, "record.json")->required();
  ev->add_option("--samples", samples, "generated samples (0 = exact)");
  ev->add_option("--out", out_file, "write the report as JSON");

  auto* iqp = app.add_subcommand("iqp", "IQP to MPQC compiler");
  iqp->require_subcommand(1);
  auto* comp = iqp->add_subcommand("compile", "compile a circuit file");
  comp->add_option("--circuit", circuit, "circuit file")->required();
  comp->add_option("--out", out_file, "compiled MPQC JSON")->required();
  auto* ver = iqp->add_subcommand("verify", "check a compiled program against its source");
  ver->add_option("--circuit", circuit, "circuit file")->required();
  ver->add_option("--compiled", compiled, "compiled MPQC JSON")->required();

  auto* plot = app.add_subcommand("plotdata", "plot-ready CSV on stdout");
  plot->add_option("--from", from, "record.json")->required();
  plot->add_option("--what", what, "tv, distribution or losses")->required()->check(CLI::IsMember({"tv", "distribution", "losses"}));

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) {
      const RunRecord r = run_experiment(load_config(config));
      write_run(out_dir, r);
      print_summary(r);
    } else if (*sw) {
      const auto runs = sweep(load_config(config), parse_batches(batches), threads);
      fs::create_directories(out_dir);
      for (const auto& r : runs) {
        write_run(fs::path(out_dir) / ("batch_" + std::to_string(r.config.batch)), r);
        print_summary(r);
      }
      std::ostringstream sum;
      write_summary_csv(sum, runs);
      write_text(fs::path(out_dir) / "summary.csv", sum.str());
    } else if (*ft) {
      const RunRecord r = finetune(record_from_json(read_json(from)), load_config(config));
      write_run(out_dir, r);
      print_summary(r);
    } else if (*ev) {
      const auto report = evaluate(record_from_json(read_json(from)), samples);
      std::cout << "samples=" << report.samples << " tv_norm=" << format_exact(report.tv_norm)
                << " tv_raw=" << format_exact(report.tv_raw) << " modes=" << report.modes_covered << "/"
                << report.num_modes << " invalid_mass=" << format_exact(report.invalid_mass) << "\n";
      if (!out_file.empty()) write_text(out_file, to_json(report).dump(1) + "\n");
    } else if (*comp) {
      const auto c = compile_iqp(load_circuit(circuit));
      write_text(out_file, to_json(c).dump(1) + "\n");
      std::cout << "blocks=" << c.program.num_layers() << " qubits=" << c.program.num_qubits() << "\n";
    } else if (*ver) {
      const auto report = verify_compilation(load_circuit(circuit), compiled_from_json(read_json(compiled)));
      if (report.phase) std::cout << "phase=" << format_exact(std::arg(*report.phase)) << "\n";
      if (report.residual) std::cout << "unitary_residual=" << format_exact(*report.residual) << "\n";
      std::cout << "distribution_tv=" << format_exact(report.distribution_tv) << "\n"
                << (report.passed() ? "PASS" : "FAIL") << "\n";
      return report.passed() ? 0 : 1;
    } else if (*plot) {
      write_plotdata(std::cout, record_from_json(read_json(from)), what);
    }
  } catch (const std::exception& e) {
    std::cerr << "qborn: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
