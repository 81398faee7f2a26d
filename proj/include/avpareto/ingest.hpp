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

#ifndef AVPARETO_INGEST_HPP
#define AVPARETO_INGEST_HPP

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "avpareto/common.hpp"
#include "avpareto/table.hpp"

namespace avpareto::ingest {

/// One agent's state at one timestep. Kinematic fields are NaN until derived
/// (or when too few samples exist to derive them).
struct TrajectoryFrame {
  std::string agent_id;
  double t = 0.0;
  double x = 0.0;
  double y = 0.0;
  std::optional<std::string> lane_id;
  AgentType type = AgentType::other;
  std::optional<double> length;
  std::optional<double> width;
  double vx = kNaN, vy = kNaN;
  double ax = kNaN, ay = kNaN;
  double jx = kNaN, jy = kNaN;

  double speed() const { return std::hypot(vx, vy); }
  double accel_magnitude() const { return std::hypot(ax, ay); }
  double jerk_magnitude() const { return std::hypot(jx, jy); }
  /// Acceleration projected on the direction of travel; NaN when speed is 0.
  double longitudinal_accel() const;
};

/// Which kinematic quantities were derivable for an agent.
struct KinematicsValidity {
  bool velocity = false;      // >= 2 frames
  bool acceleration = false;  // >= 3 frames
  bool jerk = false;          // >= 4 frames
};

/// All frames of one agent, strictly increasing in time on a uniform grid.
struct AgentTrack {
  std::string agent_id;
  AgentType type = AgentType::other;
  std::vector<TrajectoryFrame> frames;
  KinematicsValidity validity;

  /// Integer grid index of the first frame (round(t0 / dt)).
  long first_tick(double dt) const;
};

/// Maps canonical fields onto source column names. Empty optional fields are
/// simply absent from the source.
struct ColumnSchema {
  std::string id = "id";
  std::string time = "time";
  std::string x = "x";
  std::string y = "y";
  std::string lane;
  std::string type;
  std::string length;
  std::string width;
  std::string vx;
  std::string vy;
  std::string ax;
  std::string ay;
};

struct LoadResult {
  std::vector<AgentTrack> tracks;  // sorted by agent_id
  std::size_t dropped_rows = 0;    // rows with non-finite position
  bool has_input_kinematics = false;
};

/// Read a delimited trajectory table. Throws SchemaError when a mandatory
/// column cannot be mapped and GridError when an agent's times are not on
/// the `dt` grid.
LoadResult load_trajectories(const std::filesystem::path& path, const ColumnSchema& schema,
                             double dt = kDefaultDt);
LoadResult load_trajectories(const Table& table, const ColumnSchema& schema,
                             double dt = kDefaultDt);

/// Pixel to meter affine map with its origin at the lower-left reference.
struct FrameTransform {
  double scale_x = 1.0;  // meters per pixel
  double scale_y = 1.0;
  double origin_x = 0.0;  // pixels
  double origin_y = 0.0;

  void validate() const;
};

void pixel_to_meter(std::span<TrajectoryFrame> frames, const FrameTransform& transform);
void meter_to_pixel(std::span<TrajectoryFrame> frames, const FrameTransform& transform);
void pixel_to_meter(std::vector<AgentTrack>& tracks, const FrameTransform& transform);

struct SmoothingConfig {
  double sigma = 0.3;     // seconds
  int kernel_radius = 9;  // samples

  /// Config with the smallest admissible radius, ceil(3 sigma / dt).
  static SmoothingConfig with_sigma(double sigma, double dt = kDefaultDt);
  /// Throws ConfigError when sigma <= 0 or the radius truncates the kernel
  /// before three standard deviations.
  void validate(double dt = kDefaultDt) const;
};

/// Normalized truncated Gaussian weights w[-r..r], returned as 2r+1 values.
std::vector<double> gaussian_kernel(const SmoothingConfig& cfg, double dt = kDefaultDt);

/// Convolve with a truncated Gaussian; near the ends the kernel is
/// renormalized over in-range samples so no data is padded in.
std::vector<double> gaussian_smooth(std::span<const double> series, const SmoothingConfig& cfg,
                                    double dt = kDefaultDt);

/// Finite-difference derivative: central differences inside, second-order
/// one-sided differences at the two ends (first-order when n == 2).
std::vector<double> differentiate(std::span<const double> series, double dt);

enum class SmoothTarget { positions, kinematics, both, none };

struct KinematicsConfig {
  SmoothingConfig smoothing;
  SmoothTarget target = SmoothTarget::positions;
  /// Use velocity/acceleration columns from the source when present instead
  /// of the derived ones.
  bool trust_input_kinematics = false;
  double dt = kDefaultDt;
};

/// Fill vx..jy for one track from (smoothed) positions. Too-short tracks
/// keep NaN in the fields they cannot support and clear validity flags.
void derive_kinematics(AgentTrack& track, const KinematicsConfig& cfg);

/// Canonical frames table: agent_id, t, x, y, vx, vy, ax, ay, jx, jy,
/// lane_id, type, length, width.
Table frames_to_table(std::span<const AgentTrack> tracks);
std::vector<AgentTrack> tracks_from_table(const Table& table, double dt = kDefaultDt);

}  // namespace avpareto::ingest

#endif  // AVPARETO_INGEST_HPP
