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

// Normalized safety / efficiency / interaction objectives per timestep.

#ifndef AVPARETO_OBJECTIVES_HPP
#define AVPARETO_OBJECTIVES_HPP

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "avpareto/metrics.hpp"
#include "avpareto/table.hpp"

namespace avpareto::objectives {

enum class Metric { risk, headway, gain, jerk, decel };
inline constexpr std::size_t kMetricCount = 5;
std::string_view to_string(Metric m);

enum class Objective { S, E, I };
inline constexpr std::size_t kObjectiveCount = 3;
std::string_view to_string(Objective o);

/// Min and max of one metric within a group; `invert` marks lower-is-better.
struct MetricRange {
  double min = 0.0;
  double max = 0.0;
  bool invert = true;

  bool degenerate() const { return !(max > min); }
};

using GroupRanges = std::array<MetricRange, kMetricCount>;

struct NormalizationContext {
  std::map<std::string, GroupRanges> groups;
};

/// (v - min) / (max - min), or 0.5 when the range is degenerate. NaN stays
/// NaN. Values outside the range (frozen contexts) are clamped to [0, 1].
double normalize_value(double v, const MetricRange& range);

/// normalize_value, then 1 - x when the range is inverted. Appends a warning
/// for a degenerate range.
std::vector<double> minmax_normalize(std::span<const double> values, const MetricRange& range,
                                     std::vector<std::string>* warnings = nullptr);

/// Range of the finite values; min = max = 0 when there are none.
MetricRange range_of(std::span<const double> values, bool invert = true);

using Normalized = std::array<std::optional<double>, kMetricCount>;
using Scores = std::array<std::optional<double>, kObjectiveCount>;

/// S = mean(1 - risk), E = mean(1 - headway, 1 - gain),
/// I = mean(1 - jerk, 1 - decel) on normalized, not yet inverted values; a
/// metric whose invert flag is false enters as-is. An objective with any
/// constituent missing is missing.
Scores composite_scores(const Normalized& m, const std::array<bool, kMetricCount>& invert = {true, true, true, true, true});

struct ObjectiveVector {
  std::string ego_id;
  double t = 0.0;
  std::string group;
  std::array<double, kObjectiveCount> value{kNaN, kNaN, kNaN};
  std::array<bool, kObjectiveCount> imputed{false, false, false};

  bool complete() const;
};

/// Fill missing objectives from the k nearest complete vectors in the span,
/// by inverse-distance weighting in the subspace of objectives the vector
/// has. Zero-distance neighbours are averaged and copied. A vector with no
/// objective at all takes the mean of every complete vector. Fewer than k
/// complete vectors reduces k with a warning; none throws FitError.
void knn_impute(std::span<ObjectiveVector> group, int k, std::vector<std::string>* warnings = nullptr);

enum class Grouping { dataset, global };

struct ObjectivesConfig {
  bool filter = true;
  double filter_lo = 0.1;   // percentile
  double filter_hi = 99.9;  // percentile
  int k = 5;
  Grouping grouping = Grouping::dataset;
  std::array<bool, kMetricCount> invert{true, true, true, true, true};

  void validate() const;
};

struct ObjectivesResult {
  std::vector<ObjectiveVector> vectors;  // sorted by (group, ego_id, t)
  NormalizationContext context;
  std::vector<std::string> warnings;
  std::size_t filtered_rows = 0;  // outside the percentile band
  std::size_t empty_rows = 0;     // no objective computable
};

/// Raw metric value used for each objective constituent.
std::array<std::optional<double>, kMetricCount> metric_values(const metrics::MetricRecord& r);

/// Filter, normalize within group, build composites, impute. A frozen
/// context skips filtering and range estimation.
ObjectivesResult build_objectives(std::span<const metrics::MetricRecord> records,
                                  const ObjectivesConfig& config,
                                  const NormalizationContext* frozen = nullptr);

Table objectives_to_table(std::span<const ObjectiveVector> vectors);
std::vector<ObjectiveVector> objectives_from_table(const Table& table);

std::string serialize_context(const NormalizationContext& ctx);
NormalizationContext deserialize_context(std::string_view text);

}  // namespace avpareto::objectives

#endif  // AVPARETO_OBJECTIVES_HPP
