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

#include "avpareto/interaction.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace avpareto::interaction {

namespace {

constexpr double kDegPerRad = 180.0 / std::numbers::pi;

double wrap360(double deg) {
  double r = std::fmod(deg, 360.0);
  if (r < 0.0) r += 360.0;
  return r;
}

// (-180, 180]
double wrap180(double deg) {
  double r = wrap360(deg);
  if (r > 180.0) r -= 360.0;
  return r;
}

int sign_with_deadband(double v, double deadband) {
  if (std::abs(v) < deadband) return 0;
  return v > 0 ? 1 : -1;
}

bool route_compatible(const InteractionPair& pair, const TrajectoryFrame& ego,
                      const TrajectoryFrame& agent, const LinkCriteria& criteria,
                      const LaneTopology& lanes) {
  if (ego.lane_id && agent.lane_id) return lanes.same_or_adjacent(*ego.lane_id, *agent.lane_id);
  return std::abs(pair.lateral) < 0.5 * criteria.lane_width;
}

bool realistic_accel(const TrajectoryFrame& f, double limit) {
  const double a = f.accel_magnitude();
  return std::isfinite(a) && a < limit;
}

struct Ranked {
  double distance;
  std::string agent_id;
  std::size_t index;
  InteractionPair pair;
};

LinkResult pick_nearest(std::vector<Ranked> ranked, CheckFailures failures, Role role) {
  LinkResult result;
  result.failures = failures;
  if (ranked.empty()) return result;
  // Distance first, then agent id, so candidate order never matters.
  auto best = std::min_element(ranked.begin(), ranked.end(), [](const Ranked& a, const Ranked& b) {
    if (a.distance != b.distance) return a.distance < b.distance;
    return a.agent_id < b.agent_id;
  });
  best->pair.role = role;
  result.agent_id = best->agent_id;
  result.index = best->index;
  result.pair = best->pair;
  return result;
}

}  // namespace

bool Zone::contains_bearing(double rho_deg) const {
  double width = wrap360(max_angle - min_angle);
  if (width == 0.0) width = 360.0;
  return wrap360(rho_deg - min_angle) < width;
}

ZoneConfig ZoneConfig::defaults() {
  return ZoneConfig{{
      {"forward", -30.0, 30.0, 80.0},
      {"forward_left", 30.0, 60.0, 60.0},
      {"forward_right", -60.0, -30.0, 60.0},
      {"left", 60.0, 120.0, 20.0},
      {"right", -120.0, -60.0, 20.0},
      {"rear", 120.0, -120.0, 40.0},
  }};
}

void ZoneConfig::validate() const {
  std::set<std::string> names;
  for (const auto& z : zones) {
    if (z.name.empty()) throw ConfigError("zone with empty name");
    if (!names.insert(z.name).second) throw ConfigError("duplicate zone name '" + z.name + "'");
    if (!(z.max_range > 0.0)) throw ConfigError("zone '" + z.name + "' needs max_range > 0");
    if (!std::isfinite(z.min_angle) || !std::isfinite(z.max_angle)) {
      throw ConfigError("zone '" + z.name + "' has a non-finite angle");
    }
    // min == max is empty; a span of exactly 360 degrees is the full circle.
    if (wrap360(z.max_angle - z.min_angle) == 0.0 && std::abs(z.max_angle - z.min_angle) != 360.0) {
      throw ConfigError("zone '" + z.name + "' has an empty angular interval");
    }
  }
  if (!names.count("forward")) throw ConfigError("zone config must define a 'forward' zone");
  if (!names.count("rear")) throw ConfigError("zone config must define a 'rear' zone");
}

std::string_view to_string(Role role) {
  switch (role) {
    case Role::leader: return "leader";
    case Role::follower: return "follower";
    case Role::neighbor: return "neighbor";
    case Role::none: break;
  }
  return "none";
}

void AffineSpacingPolicy::validate() const {
  if (!(d0 >= 0.0)) throw ConfigError("affine spacing d0 must be >= 0");
  if (!(h > 0.0)) throw ConfigError("affine spacing h must be > 0");
  if (!(eps >= 0.0)) throw ConfigError("affine spacing eps must be >= 0");
}

bool affine_spacing_check(double d_actual, double v_i, const AffineSpacingPolicy& policy) {
  return std::abs(d_actual - (policy.d0 + policy.h * v_i)) <= policy.eps;
}

Heading HeadingTracker::update(const TrajectoryFrame& frame) {
  if (std::isfinite(frame.vx) && std::isfinite(frame.vy) && frame.speed() >= min_speed_) {
    last_ = std::atan2(frame.vy, frame.vx);
    return {*last_, false};
  }
  return {last_.value_or(0.0), true};
}

InteractionPair compute_pair_geometry(const TrajectoryFrame& ego, const TrajectoryFrame& agent,
                                      Heading heading) {
  InteractionPair p;
  p.ego_id = ego.agent_id;
  p.agent_id = agent.agent_id;
  p.t = ego.t;
  const double dx = agent.x - ego.x;
  const double dy = agent.y - ego.y;
  p.s = std::hypot(dx, dy);
  const double c = std::cos(heading.radians), s = std::sin(heading.radians);
  p.longitudinal = c * dx + s * dy;
  p.lateral = -s * dx + c * dy;
  p.rho = p.s > 0.0 ? wrap180(std::atan2(p.lateral, p.longitudinal) * kDegPerRad) : 0.0;
  if (p.rho == -180.0) p.rho = 180.0;
  const double dvx = (std::isfinite(agent.vx) ? agent.vx : 0.0) - (std::isfinite(ego.vx) ? ego.vx : 0.0);
  const double dvy = (std::isfinite(agent.vy) ? agent.vy : 0.0) - (std::isfinite(ego.vy) ? ego.vy : 0.0);
  p.rel_speed = std::hypot(dvx, dvy);
  p.heading_held = heading.held;
  return p;
}

InteractionPair compute_pair_geometry(const TrajectoryFrame& ego, const TrajectoryFrame& agent) {
  HeadingTracker tracker;
  return compute_pair_geometry(ego, agent, tracker.update(ego));
}

InteractionPair assign_zone(InteractionPair pair, const ZoneConfig& zones) {
  pair.zone.reset();
  for (const auto& z : zones.zones) {
    if (z.contains_bearing(pair.rho) && z.max_range >= pair.s) {
      pair.zone = z.name;
      break;
    }
  }
  if (pair.zone && pair.role == Role::none) pair.role = Role::neighbor;
  if (!pair.zone) pair.role = Role::none;
  return pair;
}

bool LaneTopology::same_or_adjacent(const std::string& a, const std::string& b) const {
  if (a == b) return true;
  if (auto it = adjacency.find(a); it != adjacency.end() && it->second.count(b)) return true;
  if (auto it = adjacency.find(b); it != adjacency.end() && it->second.count(a)) return true;
  return false;
}

bool consistent_relative_motion(const MotionState& follower, const MotionState& leader,
                                const LinkCriteria& criteria) {
  if (!follower.lagged || !leader.lagged) return true;
  const double gap_now = std::hypot(leader.now.x - follower.now.x, leader.now.y - follower.now.y);
  const double gap_then = std::hypot(leader.lagged->x - follower.lagged->x,
                                     leader.lagged->y - follower.lagged->y);
  const double elapsed = follower.now.t - follower.lagged->t;
  if (!(elapsed > 0.0)) return true;
  const double gap_rate = (gap_now - gap_then) / elapsed;
  const double speed_diff = leader.now.speed() - follower.now.speed();
  if (!std::isfinite(speed_diff)) return false;
  const int a = sign_with_deadband(gap_rate, criteria.motion_deadband);
  const int b = sign_with_deadband(speed_diff, criteria.motion_deadband);
  // Only opposite signs (both outside the deadband) are inconsistent.
  return a * b >= 0;
}

LinkResult find_leader(const EgoState& ego, std::span<const MotionState> candidates,
                       const ZoneConfig& zones, const LinkCriteria& criteria,
                       const LaneTopology& lanes) {
  CheckFailures failures;
  std::vector<Ranked> ranked;
  const auto& e = ego.motion.now;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto& c = candidates[i];
    if (c.now.agent_id == e.agent_id) continue;
    auto pair = assign_zone(compute_pair_geometry(e, c.now, ego.heading), zones);
    if (pair.zone != std::optional<std::string>("forward")) {
      ++failures.outside_zone;
      continue;
    }
    bool ok = true;
    if (!route_compatible(pair, e, c.now, criteria, lanes)) { ++failures.route; ok = false; }
    if (!(e.speed() > criteria.min_follower_speed)) { ++failures.speed; ok = false; }
    if (!(pair.s < criteria.max_distance)) { ++failures.distance; ok = false; }
    if (!realistic_accel(e, criteria.max_abs_accel) ||
        !realistic_accel(c.now, criteria.max_abs_accel)) {
      ++failures.accel;
      ok = false;
    }
    if (!consistent_relative_motion(ego.motion, c, criteria)) { ++failures.motion; ok = false; }
    if (ok) ranked.push_back({pair.s, c.now.agent_id, i, pair});
  }
  return pick_nearest(std::move(ranked), failures, Role::leader);
}

LinkResult find_follower(const EgoState& ego, std::span<const MotionState> candidates,
                         const ZoneConfig& zones, const AffineSpacingPolicy& policy,
                         const LinkCriteria& criteria, const LaneTopology& lanes) {
  CheckFailures failures;
  std::vector<Ranked> ranked;
  const auto& e = ego.motion.now;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto& c = candidates[i];
    if (c.now.agent_id == e.agent_id) continue;
    auto pair = assign_zone(compute_pair_geometry(e, c.now, ego.heading), zones);
    if (pair.zone != std::optional<std::string>("rear")) {
      ++failures.outside_zone;
      continue;
    }
    double d_actual = pair.s;
    if (policy.bumper_to_bumper && e.length && c.now.length) {
      d_actual = std::max(0.0, d_actual - 0.5 * (*e.length + *c.now.length));
    }
    bool ok = true;
    if (!affine_spacing_check(d_actual, e.speed(), policy)) { ++failures.spacing; ok = false; }
    if (!route_compatible(pair, e, c.now, criteria, lanes)) { ++failures.route; ok = false; }
    if (!(c.now.speed() > criteria.min_follower_speed)) { ++failures.speed; ok = false; }
    if (!(pair.s < criteria.max_distance)) { ++failures.distance; ok = false; }
    if (!realistic_accel(e, criteria.max_abs_accel) ||
        !realistic_accel(c.now, criteria.max_abs_accel)) {
      ++failures.accel;
      ok = false;
    }
    if (!consistent_relative_motion(c, ego.motion, criteria)) { ++failures.motion; ok = false; }
    if (ok) ranked.push_back({pair.s, c.now.agent_id, i, pair});
  }
  return pick_nearest(std::move(ranked), failures, Role::follower);
}

Table pairs_to_table(std::span<const InteractionPair> pairs) {
  Table table;
  table.header = {"ego_id", "agent_id", "t", "s", "rho", "rel_speed", "zone", "role"};
  for (const auto& p : pairs) {
    table.rows.push_back({p.ego_id, p.agent_id, format_double(p.t), format_double(p.s),
                          format_double(p.rho), format_double(p.rel_speed), p.zone.value_or(""),
                          std::string(to_string(p.role))});
  }
  return table;
}

}  // namespace avpareto::interaction
