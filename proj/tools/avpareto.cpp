// Copyright 2026 The avpareto Authors
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

// Command-line driver: staged pipeline from trajectory tables to the
// Pareto frontier report.

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "avpareto/common.hpp"
#include "avpareto/pipeline.hpp"

namespace pl = avpareto::pipeline;

namespace {

enum Exit { kOk = 0, kInternal = 1, kSchema = 2, kUpstream = 3, kReport = 4 };

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  std::string out_dir;
};

pl::RunConfig make_config(const Globals& g) {
  pl::RunConfig cfg = g.config.empty() ? pl::RunConfig{} : pl::load_config(g.config);
  if (g.seed) cfg.seed = *g.seed;
  if (g.workers) cfg.workers = *g.workers;
  if (!g.out_dir.empty()) cfg.out_dir = g.out_dir;
  cfg.finalize();
  return cfg;
}

void print(const pl::StageResult& r) {
  for (const auto& w : r.warnings) std::cerr << r.manifest.stage << ": warning: " << w << "\n";
  for (const auto& n : r.notices) std::cout << r.manifest.stage << ": " << n << "\n";
  std::cout << r.manifest.stage << ": wrote " << r.manifest.outputs.size() << " files\n";
}

void print_summary(const pl::RunConfig& cfg) {
  std::ifstream in(cfg.out_dir / "summary.json");
  std::cout << in.rdbuf();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Empirical safety / efficiency / interaction Pareto frontier for AV trajectories"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config, "Run config (JSON)")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "Seed for every random stream");
  app.add_option("--out-dir", g.out_dir, "Artifact directory");
  app.add_option("--workers", g.workers, "Worker threads")->check(CLI::PositiveNumber);
  app.fallthrough();

  auto* ingest = app.add_subcommand("ingest", "Load, convert and smooth trajectories");
  auto* metrics = app.add_subcommand("metrics", "Interaction, risk, headway, gain, jerk and decel metrics");
  auto* objectives = app.add_subcommand("objectives", "Normalized (S, E, I) objectives");
  auto* pareto = app.add_subcommand("pareto", "Pareto set, frontier surface, headroom and hull");
  auto* report = app.add_subcommand("report", "Plot-ready histograms and frontier bundle");
  auto* run_all = app.add_subcommand("run-all", "Every stage in order");
  auto* synth = app.add_subcommand("synth", "Write the synthetic datasets and a config for them");
  auto* verify = app.add_subcommand("verify", "Check the manifest chain in the artifact directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kSchema;
  }

  try {
    if (synth->parsed()) {
      avpareto::synth::SynthOptions opts;
      if (g.seed) opts.seed = *g.seed;
      const auto dir = g.out_dir.empty() ? std::filesystem::path("synthetic") : std::filesystem::path(g.out_dir);
      std::cout << "synth: wrote " << pl::write_synthetic(dir, opts).string() << "\n";
      return kOk;
    }
    const auto cfg = make_config(g);
    if (verify->parsed()) {
      const auto problems = pl::validate_chain(cfg.out_dir);
      for (const auto& p : problems) std::cerr << "verify: " << p << "\n";
      if (problems.empty()) std::cout << "verify: manifest chain is valid\n";
      return problems.empty() ? kOk : kInternal;
    }
    if (ingest->parsed()) print(pl::run_ingest(cfg));
    if (metrics->parsed()) print(pl::run_metrics(cfg));
    if (objectives->parsed()) print(pl::run_objectives(cfg));
    if (pareto->parsed()) {
      print(pl::run_pareto(cfg));
      print_summary(cfg);
    }
    if (report->parsed()) print(pl::run_report(cfg));
    if (run_all->parsed()) {
      for (const auto& r : pl::run_all(cfg)) print(r);
      print_summary(cfg);
    }
    return kOk;
  } catch (const avpareto::SchemaError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kSchema;
  } catch (const pl::MissingUpstreamError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUpstream;
  } catch (const pl::ReportDependencyError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kReport;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kInternal;
  }
}
