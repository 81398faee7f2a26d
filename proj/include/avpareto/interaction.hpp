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

#ifndef AVPARETO_INTERACTION_HPP
#define AVPARETO_INTERACTION_HPP

#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "avpareto/ingest.hpp"
#include "avpareto/table.hpp"

namespace avpareto::interaction {

using ingest::TrajectoryFrame;

/// Angular sector [min_angle, max_angle) on the circle, measured
/// counter-clockwise from the ego heading, plus a range limit. A sector may
/// wrap through 180 degrees (min_angle > max_angle).
struct Zone {
  std::string name;
  double min_angle = 0.0;  // degrees
  double max_angle = 0.0;  // degrees
  double max_range = 0.0;  // meters

  bool contains_bearing(double rho_deg) const;
};

/// Ordered zone list; the first matching zone wins.
struct ZoneConfig {
  std::vector<Zone> zones;

  /// Camera-style coverage: forward +-30 deg/80 m, forward sides 30..60 deg/60 m,
  /// sides 60..120 deg/20 m, rear beyond +-120 deg/40 m.
  static ZoneConfig defaults();
  void validate() const;
};

enum class Role { leader, follower, neighbor, none };
std::string_view to_string(Role role);

struct InteractionPair {
  std::string ego_id;
  std::string agent_id;
  double t = 0.0;
  double s = 0.0;             // center distance, m
  double rho = 0.0;           // bearing in ego frame, degrees in (-180, 180]
  double rel_speed = 0.0;     // |v_agent - v_ego|, m/s
  double longitudinal = 0.0;  // agent offset along ego heading, m
  double lateral = 0.0;       // agent offset to the ego's left, m
  std::optional<std::string> zone;
  Role role = Role::none;
  bool heading_held = false;  // ego heading reused from an earlier timestep
};

/// Constant-time-gap spacing rule |d - (d0 + h v)| <= eps.
struct AffineSpacingPolicy {
  double d0 = 4.0;    // standstill distance, m
  double h = 2.0;     // time gap, s
  double eps = 5.0;   // tolerance, m
  bool bumper_to_bumper = false;  // subtract half lengths from the center distance

  void validate() const;
};

bool affine_spacing_check(double d_actual, double v_i, const AffineSpacingPolicy& policy);

struct Heading {
  double radians = 0.0;
  bool held = false;
};

/// Ego heading from the velocity direction; below `min_speed` the last
/// heading seen above it is kept (zero before any such sample).
class HeadingTracker {
 public:
  explicit HeadingTracker(double min_speed = 0.1) : min_speed_(min_speed) {}
  Heading update(const TrajectoryFrame& frame);

 private:
  double min_speed_;
  std::optional<double> last_;
};

InteractionPair compute_pair_geometry(const TrajectoryFrame& ego, const TrajectoryFrame& agent,
                                      Heading heading);
/// Heading taken from the ego velocity alone (no history).
InteractionPair compute_pair_geometry(const TrajectoryFrame& ego, const TrajectoryFrame& agent);

InteractionPair assign_zone(InteractionPair pair, const ZoneConfig& zones);

/// Thresholds for accepting a leader/follower link.
struct LinkCriteria {
  double min_follower_speed = 0.1;  // m/s, strict
  double max_distance = 120.0;      // m, strict
  double max_abs_accel = 5.0;       // m/s^2, strict, both vehicles
  double motion_window = 0.5;       // s, gap-rate baseline
  double motion_deadband = 0.3;     // m/s
  double lane_width = 3.5;          // m, lateral gate when lane ids are absent
};

/// Lane ids considered adjacent; same-lane is always accepted.
struct LaneTopology {
  std::map<std::string, std::set<std::string>> adjacency;

  bool same_or_adjacent(const std::string& a, const std::string& b) const;
};

/// Current frame plus the frame one motion window earlier, when available.
struct MotionState {
  TrajectoryFrame now;
  std::optional<TrajectoryFrame> lagged;
};

struct EgoState {
  MotionState motion;
  Heading heading;
};

struct CheckFailures {
  std::size_t outside_zone = 0;
  std::size_t route = 0;
  std::size_t speed = 0;
  std::size_t distance = 0;
  std::size_t accel = 0;
  std::size_t motion = 0;
  std::size_t spacing = 0;
};

struct LinkResult {
  std::optional<std::string> agent_id;
  std::optional<std::size_t> index;  // into the candidate span
  std::optional<InteractionPair> pair;
  CheckFailures failures;
};

/// Gap-rate versus speed-difference agreement. Inconclusive (no lagged
/// frames) counts as consistent.
bool consistent_relative_motion(const MotionState& follower, const MotionState& leader,
                                const LinkCriteria& criteria);

LinkResult find_leader(const EgoState& ego, std::span<const MotionState> candidates,
                       const ZoneConfig& zones, const LinkCriteria& criteria,
                       const LaneTopology& lanes = {});

LinkResult find_follower(const EgoState& ego, std::span<const MotionState> candidates,
                         const ZoneConfig& zones, const AffineSpacingPolicy& policy,
                         const LinkCriteria& criteria, const LaneTopology& lanes = {});

/// ego_id, agent_id, t, s, rho, rel_speed, zone, role
Table pairs_to_table(std::span<const InteractionPair> pairs);

}  // namespace avpareto::interaction

#endif  // AVPARETO_INTERACTION_HPP
