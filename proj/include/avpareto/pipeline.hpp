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

// Run configuration, staged pipeline and artifact manifests.

#ifndef AVPARETO_PIPELINE_HPP
#define AVPARETO_PIPELINE_HPP

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "avpareto/frontier.hpp"
#include "avpareto/ingest.hpp"
#include "avpareto/metrics.hpp"
#include "avpareto/objectives.hpp"
#include "avpareto/synth.hpp"

namespace avpareto::pipeline {

namespace fs = std::filesystem;

/// A stage's required upstream artifact is absent (exit 3).
class MissingUpstreamError : public std::runtime_error {
 public:
  MissingUpstreamError(std::string stage, const std::string& what)
      : std::runtime_error(what), stage_(std::move(stage)) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

/// The report is missing an artifact from an earlier stage (exit 4).
class ReportDependencyError : public std::runtime_error {
 public:
  ReportDependencyError(std::string stage, const std::string& what)
      : std::runtime_error(what), stage_(std::move(stage)) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

struct InputSpec {
  std::string name;  // dataset / normalization group
  fs::path path;
};

enum class Units { meters, pixels };
enum class HeadroomReference { surface, pareto_set };

/// Values drawn as reference lines in the report histograms.
struct ReportThresholds {
  double risk = 1.85;
  double headway_time = 4.0;  // s
  double gain = 1.0;
  double jerk = 2.5;          // m/s^3
  double decel = 2.0;         // m/s^2
};

struct RunConfig {
  std::vector<InputSpec> inputs;
  ingest::ColumnSchema schema;
  Units units = Units::meters;
  ingest::FrameTransform transform;
  ingest::KinematicsConfig kinematics;
  metrics::MetricsConfig metrics;
  std::optional<fs::path> frozen_models;
  objectives::ObjectivesConfig objectives;
  std::optional<fs::path> frozen_context;
  frontier::FrontierOptions frontier;
  HeadroomReference headroom_reference = HeadroomReference::surface;
  ReportThresholds thresholds;
  int report_bins = 40;
  synth::SynthOptions synth;
  std::uint64_t seed = 7;
  int workers = 1;
  fs::path out_dir = "out";

  /// Propagates seed, workers and dt into the stage configs, then checks
  /// every threshold. Throws ConfigError.
  void finalize();
};

/// Parses a JSON config; relative paths resolve against `base_dir`.
/// Unknown keys throw ConfigError.
RunConfig parse_config(std::string_view json_text, const fs::path& base_dir = {});
RunConfig load_config(const fs::path& path);
/// Effective config as canonical JSON (paths as given, sorted keys).
std::string config_to_json(const RunConfig& config);

std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const fs::path& path);

struct Manifest {
  std::string stage;
  std::map<std::string, std::string> inputs;   // path relative to out_dir (or absolute) -> digest
  std::map<std::string, std::string> outputs;  // path relative to out_dir -> digest
  std::string config_digest;
  std::string timestamp;  // UTC, ISO 8601
};

std::string manifest_to_json(const Manifest& m);
Manifest manifest_from_json(std::string_view text);
fs::path manifest_path(const fs::path& out_dir, std::string_view stage);
Manifest read_manifest(const fs::path& out_dir, std::string_view stage);

struct StageResult {
  Manifest manifest;
  std::vector<std::string> warnings;
  std::vector<std::string> notices;
};

StageResult run_ingest(const RunConfig& config);
StageResult run_metrics(const RunConfig& config);
StageResult run_objectives(const RunConfig& config);
StageResult run_pareto(const RunConfig& config);
StageResult run_report(const RunConfig& config);
std::vector<StageResult> run_all(const RunConfig& config);

inline constexpr std::array<std::string_view, 5> kStages{"ingest", "metrics", "objectives", "pareto", "report"};

/// Checks that each present manifest's outputs still match the files on
/// disk and that every input taken from an earlier stage matches that
/// stage's recorded output. Returns the problems found; empty means valid.
std::vector<std::string> validate_chain(const fs::path& out_dir);

/// Writes the synthetic datasets plus a config that ingests them.
/// Returns the config path.
fs::path write_synthetic(const fs::path& dir, const synth::SynthOptions& options);

struct Histogram {
  std::string metric;
  std::vector<double> edges;  // bins + 1
  std::vector<std::size_t> counts;
  double threshold = 0.0;
  std::size_t n = 0;
};

/// Equal-width bins over [min, max]; the last bin is closed. A constant
/// sample gets one bin of width 1 centred on the value.
Histogram histogram(std::string metric, const std::vector<double>& values, int bins, double threshold);
std::string histogram_to_json(const Histogram& h);

}  // namespace avpareto::pipeline

#endif  // AVPARETO_PIPELINE_HPP
