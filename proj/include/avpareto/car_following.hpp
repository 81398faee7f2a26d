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

// Headway, string-stability gain, jerk flags and deceleration events.

#ifndef AVPARETO_CAR_FOLLOWING_HPP
#define AVPARETO_CAR_FOLLOWING_HPP

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "avpareto/common.hpp"
#include "avpareto/ingest.hpp"

namespace avpareto::metrics {

using ingest::TrajectoryFrame;

struct Headway {
  double distance = 0.0;            // m
  std::optional<double> time;       // s, empty when the ego is (nearly) stopped
};

Headway compute_headway(const TrajectoryFrame& ego, const TrajectoryFrame& leader,
                        double min_speed = 0.1);

/// G = a_follower / a_ego; empty when |a_ego| < a_min or either value is not
/// finite.
std::optional<double> stability_gain(double a_follower_delayed, double a_ego, double a_min = 0.1);

/// Linear interpolation of a uniformly sampled series at time t (seconds from
/// the first sample). Empty outside the sampled range or next to a NaN.
std::optional<double> sample_at(std::span<const double> series, double t, double dt = kDefaultDt);

/// Gain at sample i of the ego series: the follower's acceleration tau
/// seconds after ego time t_i, over the ego acceleration at t_i. Both series
/// share the same time origin.
std::optional<double> delayed_gain(std::span<const double> a_follower, std::span<const double> a_ego,
                                   std::size_t i, double tau, double a_min = 0.1,
                                   double dt = kDefaultDt);

/// Strictly-above-threshold flags; NaN is never flagged.
std::vector<bool> jerk_flags(std::span<const double> jerk_magnitude, double threshold = 2.5);

struct DecelEvent {
  std::size_t start = 0;  // first frame
  std::size_t end = 0;    // last frame, inclusive
  double peak = 0.0;      // largest deceleration magnitude, m/s^2

  std::size_t length() const { return end - start + 1; }
};

/// Maximal runs of at least `min_frames` frames whose deceleration
/// (-a_longitudinal) is strictly above `threshold`.
std::vector<DecelEvent> detect_decel_events(std::span<const double> a_longitudinal,
                                            double threshold = 2.0, std::size_t min_frames = 3);

}  // namespace avpareto::metrics

#endif  // AVPARETO_CAR_FOLLOWING_HPP
