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


#include "avpareto/car_following.hpp"

#include <algorithm>
#include <cmath>

namespace avpareto::metrics {

Headway compute_headway(const TrajectoryFrame& ego, const TrajectoryFrame& leader, double min_speed) {
  Headway h;
  h.distance = std::hypot(leader.x - ego.x, leader.y - ego.y);
  const double v = ego.speed();
  if (std::isfinite(v) && v >= min_speed) h.time = h.distance / v;
  return h;
}

std::optional<double> stability_gain(double a_follower_delayed, double a_ego, double a_min) {
  if (!std::isfinite(a_follower_delayed) || !std::isfinite(a_ego)) return std::nullopt;
  if (std::abs(a_ego) < a_min) return std::nullopt;
  return a_follower_delayed / a_ego;
}

std::optional<double> sample_at(std::span<const double> series, double t, double dt) {
  if (series.empty() || !(t >= 0.0)) return std::nullopt;
  const double pos = t / dt;
  const double last = static_cast<double>(series.size() - 1);
  // Snap positions within rounding of a sample onto it.
  const double nearest = std::round(pos);
  if (std::abs(pos - nearest) < 1e-9) {
    if (nearest > last) return std::nullopt;
    const double v = series[static_cast<std::size_t>(nearest)];
    return std::isfinite(v) ? std::optional<double>(v) : std::nullopt;
  }
  if (pos > last) return std::nullopt;
  const auto i = static_cast<std::size_t>(std::floor(pos));
  const double w = pos - static_cast<double>(i);
  const double a = series[i], b = series[i + 1];
  if (!std::isfinite(a) || !std::isfinite(b)) return std::nullopt;
  return a + w * (b - a);
}

std::optional<double> delayed_gain(std::span<const double> a_follower, std::span<const double> a_ego,
                                   std::size_t i, double tau, double a_min, double dt) {
  if (i >= a_ego.size() || !(tau >= 0.0)) return std::nullopt;
  const auto follower = sample_at(a_follower, static_cast<double>(i) * dt + tau, dt);
  if (!follower) return std::nullopt;
  return stability_gain(*follower, a_ego[i], a_min);
}

std::vector<bool> jerk_flags(std::span<const double> jerk_magnitude, double threshold) {
  std::vector<bool> out(jerk_magnitude.size());
  for (std::size_t i = 0; i < jerk_magnitude.size(); ++i) out[i] = jerk_magnitude[i] > threshold;
  return out;
}

std::vector<DecelEvent> detect_decel_events(std::span<const double> a_longitudinal, double threshold,
                                            std::size_t min_frames) {
  std::vector<DecelEvent> events;
  std::size_t i = 0;
  while (i < a_longitudinal.size()) {
    if (!(-a_longitudinal[i] > threshold)) {
      ++i;
      continue;
    }
    DecelEvent e{i, i, -a_longitudinal[i]};
    while (e.end + 1 < a_longitudinal.size() && -a_longitudinal[e.end + 1] > threshold) {
      ++e.end;
      e.peak = std::max(e.peak, -a_longitudinal[e.end]);
    }
    if (e.length() >= min_frames) events.push_back(e);
    i = e.end + 1;
  }
  return events;
}

}  // namespace avpareto::metrics
