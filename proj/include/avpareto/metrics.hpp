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

// Per-(ego, timestep) behavioral metrics assembled from trajectory tracks.

#ifndef AVPARETO_METRICS_HPP
#define AVPARETO_METRICS_HPP

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "avpareto/car_following.hpp"
#include "avpareto/delay.hpp"
#include "avpareto/ingest.hpp"
#include "avpareto/interaction.hpp"
#include "avpareto/spacing_model.hpp"
#include "avpareto/table.hpp"
#include "avpareto/tail.hpp"

namespace avpareto::metrics {

using ingest::AgentTrack;
using interaction::InteractionPair;

struct Dataset {
  std::string name;
  std::vector<AgentTrack> tracks;
};

struct MetricsConfig {
  interaction::ZoneConfig zones = interaction::ZoneConfig::defaults();
  interaction::AffineSpacingPolicy policy;
  interaction::LinkCriteria criteria;
  interaction::LaneTopology lanes;
  SpacingFitOptions spacing;
  TailFitOptions tail;
  XcorrOptions xcorr;
  DelayRefineOptions delay;
  double delay_window = 5.0;     // s of ego history for the delay estimate
  double a_min = 0.1;            // m/s^2, gain guard
  double jerk_threshold = 2.5;   // m/s^3
  double decel_threshold = 2.0;  // m/s^2
  std::size_t decel_min_frames = 3;
  double min_speed = 0.1;        // m/s, heading hold and time headway
  double dt = kDefaultDt;
  int workers = 1;

  void validate() const;
};

struct MetricRecord {
  std::string ego_id;
  std::string dataset;
  double t = 0.0;
  std::optional<double> m_max;
  std::optional<double> tail_prob;
  std::optional<std::string> leader_id;
  std::optional<double> headway_dist;
  std::optional<double> headway_time;
  std::optional<std::string> follower_id;
  std::optional<double> gain;
  std::optional<double> tau;
  std::optional<double> jerk_mag;
  bool jerk_flag = false;
  std::optional<int> decel_event_id;  // per ego, counted from 0
  std::optional<double> decel_mag;    // max(0, -a_longitudinal)

  bool valid_risk() const { return m_max.has_value(); }
  bool valid_headway() const { return headway_dist.has_value(); }
  bool valid_gain() const { return gain.has_value(); }
  bool valid_jerk() const { return jerk_mag.has_value(); }
  bool valid_decel() const { return decel_mag.has_value(); }
};

/// Fitted models; any of them may be absent when data was insufficient.
struct ModelBundle {
  std::optional<SpacingModel> spacing;
  std::optional<TailModel> tail;
  std::optional<DelayModel> delay;
};

struct MetricsResult {
  std::vector<MetricRecord> records;  // sorted by (dataset, ego_id, t)
  std::vector<InteractionPair> pairs;  // zone pairs, same order
  ModelBundle models;
  std::vector<std::string> warnings;
};

/// Lane relation of an agent to the ego: crossing when the agent moves at
/// 45..135 degrees to the ego heading, otherwise lane ids (or the lateral
/// offset when ids are absent) decide same / adjacent / other.
LaneContext classify_lane_context(const InteractionPair& pair, double ego_heading,
                                  const TrajectoryFrame& ego, const TrajectoryFrame& agent,
                                  const interaction::LaneTopology& lanes, double lane_width);

/// Every metric for every frame of every AV track. Models in `frozen` are used
/// as given; missing ones are fitted on this data.
MetricsResult compute_metrics(std::span<const Dataset> datasets, const MetricsConfig& config,
                              const ModelBundle& frozen = {});

Table metrics_to_table(std::span<const MetricRecord> records);
std::vector<MetricRecord> metrics_from_table(const Table& table);

}  // namespace avpareto::metrics

#endif  // AVPARETO_METRICS_HPP
