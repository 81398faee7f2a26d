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

#include "avpareto/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace avpareto::ingest {

namespace {

// Grid spacing tolerance, seconds. Source tables store times as decimal text.
constexpr double kGridTolerance = 1e-6;

long tick_of(double t, double dt) { return std::lround(t / dt); }

std::optional<double> optional_number(const std::vector<std::string>& row,
                                      std::optional<std::size_t> col) {
  if (!col) return std::nullopt;
  const double v = parse_number(row[*col]);
  if (!std::isfinite(v)) return std::nullopt;
  return v;
}

std::optional<std::size_t> mapped_column(const Table& table, const std::string& name) {
  if (name.empty()) return std::nullopt;
  return table.require_column(name);
}

// Contiguous runs of frames (consecutive grid ticks) as [begin, end) pairs.
std::vector<std::pair<std::size_t, std::size_t>> contiguous_runs(
    const std::vector<TrajectoryFrame>& frames, double dt) {
  std::vector<std::pair<std::size_t, std::size_t>> runs;
  std::size_t begin = 0;
  for (std::size_t i = 1; i <= frames.size(); ++i) {
    if (i == frames.size() || tick_of(frames[i].t, dt) != tick_of(frames[i - 1].t, dt) + 1) {
      if (i > begin) runs.emplace_back(begin, i);
      begin = i;
    }
  }
  return runs;
}

}  // namespace

double TrajectoryFrame::longitudinal_accel() const {
  const double v = speed();
  if (!(v > 1e-9) || !std::isfinite(ax) || !std::isfinite(ay)) return kNaN;
  return (ax * vx + ay * vy) / v;
}

long AgentTrack::first_tick(double dt) const {
  return frames.empty() ? 0 : tick_of(frames.front().t, dt);
}

LoadResult load_trajectories(const std::filesystem::path& path, const ColumnSchema& schema,
                             double dt) {
  if (!std::filesystem::exists(path)) {
    throw SchemaError("trajectory file not found: '" + path.string() + "'");
  }
  return load_trajectories(read_table(path), schema, dt);
}

LoadResult load_trajectories(const Table& table, const ColumnSchema& schema, double dt) {
  const std::size_t c_id = table.require_column(schema.id);
  const std::size_t c_t = table.require_column(schema.time);
  const std::size_t c_x = table.require_column(schema.x);
  const std::size_t c_y = table.require_column(schema.y);
  const auto c_lane = mapped_column(table, schema.lane);
  const auto c_type = mapped_column(table, schema.type);
  const auto c_len = mapped_column(table, schema.length);
  const auto c_wid = mapped_column(table, schema.width);
  const auto c_vx = mapped_column(table, schema.vx);
  const auto c_vy = mapped_column(table, schema.vy);
  const auto c_ax = mapped_column(table, schema.ax);
  const auto c_ay = mapped_column(table, schema.ay);

  LoadResult result;
  result.has_input_kinematics = c_vx && c_vy;

  // Every row with a finite time takes part in the grid check, including rows
  // later dropped for a non-finite position.
  std::map<std::string, std::vector<double>> times;
  std::map<std::string, std::vector<TrajectoryFrame>> grouped;
  for (const auto& row : table.rows) {
    TrajectoryFrame f;
    f.agent_id = row[c_id];
    f.t = parse_number(row[c_t]);
    if (!std::isfinite(f.t)) {
      ++result.dropped_rows;
      continue;
    }
    times[f.agent_id].push_back(f.t);
    f.x = parse_number(row[c_x]);
    f.y = parse_number(row[c_y]);
    if (!std::isfinite(f.x) || !std::isfinite(f.y)) {
      ++result.dropped_rows;
      continue;
    }
    if (c_lane && !row[*c_lane].empty()) f.lane_id = row[*c_lane];
    if (c_type) f.type = parse_agent_type(row[*c_type]);
    f.length = optional_number(row, c_len);
    f.width = optional_number(row, c_wid);
    if ((f.length && *f.length < 0) || (f.width && *f.width < 0)) {
      throw SchemaError("negative vehicle dimension for agent '" + f.agent_id + "'");
    }
    if (c_vx) f.vx = parse_number(row[*c_vx]);
    if (c_vy) f.vy = parse_number(row[*c_vy]);
    if (c_ax) f.ax = parse_number(row[*c_ax]);
    if (c_ay) f.ay = parse_number(row[*c_ay]);
    grouped[f.agent_id].push_back(std::move(f));
  }

  for (auto& [id, ts] : times) {
    std::sort(ts.begin(), ts.end());
    for (std::size_t i = 1; i < ts.size(); ++i) {
      const double step = ts[i] - ts[i - 1];
      if (std::abs(step - dt) > kGridTolerance) {
        throw GridError(id, "step " + format_double(step) + " s between t=" +
                                format_double(ts[i - 1]) + " and t=" + format_double(ts[i]) +
                                ", expected " + format_double(dt) + " s");
      }
    }
  }

  for (auto& [id, frames] : grouped) {
    std::sort(frames.begin(), frames.end(),
              [](const TrajectoryFrame& a, const TrajectoryFrame& b) { return a.t < b.t; });
    AgentTrack track;
    track.agent_id = id;
    track.type = frames.front().type;
    track.frames = std::move(frames);
    result.tracks.push_back(std::move(track));
  }
  return result;
}

void FrameTransform::validate() const {
  if (!(scale_x > 0.0) || !(scale_y > 0.0)) {
    throw ConfigError("frame transform scales must be positive");
  }
}

void pixel_to_meter(std::span<TrajectoryFrame> frames, const FrameTransform& transform) {
  transform.validate();
  for (auto& f : frames) {
    f.x = (f.x - transform.origin_x) * transform.scale_x;
    f.y = (f.y - transform.origin_y) * transform.scale_y;
  }
}

void meter_to_pixel(std::span<TrajectoryFrame> frames, const FrameTransform& transform) {
  transform.validate();
  for (auto& f : frames) {
    f.x = f.x / transform.scale_x + transform.origin_x;
    f.y = f.y / transform.scale_y + transform.origin_y;
  }
}

void pixel_to_meter(std::vector<AgentTrack>& tracks, const FrameTransform& transform) {
  for (auto& track : tracks) pixel_to_meter(std::span(track.frames), transform);
}

SmoothingConfig SmoothingConfig::with_sigma(double sigma, double dt) {
  SmoothingConfig cfg;
  cfg.sigma = sigma;
  // The small offset keeps 3 * 0.1 / 0.1 from rounding up to 4.
  cfg.kernel_radius = static_cast<int>(std::ceil(3.0 * sigma / dt - 1e-9));
  return cfg;
}

void SmoothingConfig::validate(double dt) const {
  if (!(sigma > 0.0)) throw ConfigError("smoothing sigma must be positive");
  const int min_radius = static_cast<int>(std::ceil(3.0 * sigma / dt - 1e-9));
  if (kernel_radius < min_radius) {
    throw ConfigError("smoothing kernel_radius " + std::to_string(kernel_radius) +
                      " is below ceil(3*sigma/dt) = " + std::to_string(min_radius));
  }
}

std::vector<double> gaussian_kernel(const SmoothingConfig& cfg, double dt) {
  cfg.validate(dt);
  const double s = cfg.sigma / dt;
  const int r = cfg.kernel_radius;
  std::vector<double> w(static_cast<std::size_t>(2 * r + 1));
  double total = 0.0;
  for (int k = -r; k <= r; ++k) {
    const double v = std::exp(-0.5 * (k * k) / (s * s));
    w[static_cast<std::size_t>(k + r)] = v;
    total += v;
  }
  for (double& v : w) v /= total;
  return w;
}

std::vector<double> gaussian_smooth(std::span<const double> series, const SmoothingConfig& cfg,
                                    double dt) {
  if (series.empty()) throw DomainError("cannot smooth an empty series");
  const auto w = gaussian_kernel(cfg, dt);
  const long r = cfg.kernel_radius;
  const long n = static_cast<long>(series.size());
  std::vector<double> out(series.size());
  for (long i = 0; i < n; ++i) {
    // Accumulate deviations from the center sample so constant stretches come
    // out exactly constant.
    const double center = series[static_cast<std::size_t>(i)];
    double acc = 0.0;
    double mass = 0.0;
    for (long k = std::max(-r, -i); k <= std::min(r, n - 1 - i); ++k) {
      const double wk = w[static_cast<std::size_t>(k + r)];
      acc += wk * (series[static_cast<std::size_t>(i + k)] - center);
      mass += wk;
    }
    out[static_cast<std::size_t>(i)] = center + acc / mass;
  }
  return out;
}

std::vector<double> differentiate(std::span<const double> s, double dt) {
  const std::size_t n = s.size();
  std::vector<double> d(n, kNaN);
  if (n < 2) return d;
  if (n == 2) {
    d[0] = d[1] = (s[1] - s[0]) / dt;
    return d;
  }
  for (std::size_t i = 1; i + 1 < n; ++i) d[i] = (s[i + 1] - s[i - 1]) / (2.0 * dt);
  d[0] = (-3.0 * s[0] + 4.0 * s[1] - s[2]) / (2.0 * dt);
  d[n - 1] = (3.0 * s[n - 1] - 4.0 * s[n - 2] + s[n - 3]) / (2.0 * dt);
  return d;
}

void derive_kinematics(AgentTrack& track, const KinematicsConfig& cfg) {
  const bool smooth_pos = cfg.target == SmoothTarget::positions || cfg.target == SmoothTarget::both;
  const bool smooth_kin = cfg.target == SmoothTarget::kinematics || cfg.target == SmoothTarget::both;
  if (smooth_pos || smooth_kin) cfg.smoothing.validate(cfg.dt);

  track.validity = {};
  for (auto [begin, end] : contiguous_runs(track.frames, cfg.dt)) {
    const std::size_t n = end - begin;
    std::span<TrajectoryFrame> run(track.frames.data() + begin, n);
    std::vector<double> xs(n), ys(n);
    for (std::size_t i = 0; i < n; ++i) {
      xs[i] = run[i].x;
      ys[i] = run[i].y;
    }
    if (smooth_pos) {
      xs = gaussian_smooth(xs, cfg.smoothing, cfg.dt);
      ys = gaussian_smooth(ys, cfg.smoothing, cfg.dt);
    }
    auto maybe_smooth = [&](std::vector<double> v) {
      if (smooth_kin && n >= 1 && std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); })) {
        return gaussian_smooth(v, cfg.smoothing, cfg.dt);
      }
      return v;
    };

    std::vector<double> vx, vy;
    bool input_v = cfg.trust_input_kinematics &&
                   std::all_of(run.begin(), run.end(), [](const TrajectoryFrame& f) {
                     return std::isfinite(f.vx) && std::isfinite(f.vy);
                   });
    if (input_v) {
      for (const auto& f : run) {
        vx.push_back(f.vx);
        vy.push_back(f.vy);
      }
    } else {
      vx = maybe_smooth(differentiate(xs, cfg.dt));
      vy = maybe_smooth(differentiate(ys, cfg.dt));
    }

    std::vector<double> ax, ay;
    bool input_a = cfg.trust_input_kinematics &&
                   std::all_of(run.begin(), run.end(), [](const TrajectoryFrame& f) {
                     return std::isfinite(f.ax) && std::isfinite(f.ay);
                   });
    if (input_a) {
      for (const auto& f : run) {
        ax.push_back(f.ax);
        ay.push_back(f.ay);
      }
    } else {
      ax = maybe_smooth(differentiate(vx, cfg.dt));
      ay = maybe_smooth(differentiate(vy, cfg.dt));
    }
    auto jx = differentiate(ax, cfg.dt);
    auto jy = differentiate(ay, cfg.dt);

    const bool has_v = input_v || n >= 2;
    const bool has_a = input_a || n >= 3;
    const bool has_j = n >= 4 && (input_a || n >= 3);
    for (std::size_t i = 0; i < n; ++i) {
      auto& f = run[i];
      f.vx = has_v ? vx[i] : kNaN;
      f.vy = has_v ? vy[i] : kNaN;
      f.ax = has_a ? ax[i] : kNaN;
      f.ay = has_a ? ay[i] : kNaN;
      f.jx = has_j ? jx[i] : kNaN;
      f.jy = has_j ? jy[i] : kNaN;
    }
    track.validity.velocity |= has_v;
    track.validity.acceleration |= has_a;
    track.validity.jerk |= has_j;
  }
}

Table frames_to_table(std::span<const AgentTrack> tracks) {
  Table table;
  table.header = {"agent_id", "t",  "x",  "y",       "vx",   "vy",     "ax",
                  "ay",       "jx", "jy", "lane_id", "type", "length", "width"};
  for (const auto& track : tracks) {
    for (const auto& f : track.frames) {
      table.rows.push_back({f.agent_id, format_double(f.t), format_double(f.x),
                            format_double(f.y), format_optional(f.vx), format_optional(f.vy),
                            format_optional(f.ax), format_optional(f.ay), format_optional(f.jx),
                            format_optional(f.jy), f.lane_id.value_or(""),
                            std::string(to_string(f.type)), format_optional(f.length),
                            format_optional(f.width)});
    }
  }
  return table;
}

std::vector<AgentTrack> tracks_from_table(const Table& table, double dt) {
  ColumnSchema schema;
  schema.id = "agent_id";
  schema.time = "t";
  schema.lane = "lane_id";
  schema.type = "type";
  schema.length = "length";
  schema.width = "width";
  schema.vx = "vx";
  schema.vy = "vy";
  schema.ax = "ax";
  schema.ay = "ay";
  auto loaded = load_trajectories(table, schema, dt);
  const auto c_id = table.require_column("agent_id");
  const auto c_t = table.require_column("t");
  const auto c_jx = table.require_column("jx");
  const auto c_jy = table.require_column("jy");
  // Jerk columns are not part of the raw schema; attach them by key.
  std::map<std::pair<std::string, long>, std::pair<double, double>> jerk;
  for (const auto& row : table.rows) {
    jerk[{row[c_id], tick_of(parse_number(row[c_t]), dt)}] = {parse_number(row[c_jx]),
                                                              parse_number(row[c_jy])};
  }
  for (auto& track : loaded.tracks) {
    for (auto& f : track.frames) {
      const auto& j = jerk.at({f.agent_id, tick_of(f.t, dt)});
      f.jx = j.first;
      f.jy = j.second;
    }
    auto any_finite = [&track](auto member) {
      return std::any_of(track.frames.begin(), track.frames.end(),
                         [member](const TrajectoryFrame& f) { return std::isfinite(f.*member); });
    };
    track.validity.velocity = any_finite(&TrajectoryFrame::vx);
    track.validity.acceleration = any_finite(&TrajectoryFrame::ax);
    track.validity.jerk = any_finite(&TrajectoryFrame::jx);
  }
  return std::move(loaded.tracks);
}

}  // namespace avpareto::ingest
