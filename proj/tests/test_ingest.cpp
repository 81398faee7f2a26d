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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>
#include <sstream>

#include "avpareto/ingest.hpp"

using namespace avpareto;
using namespace avpareto::ingest;

namespace {

Table csv(const std::string& text) {
  std::istringstream in(text);
  return parse_table(in);
}

AgentTrack track_from(const std::vector<double>& xs, const std::vector<double>& ys,
                      double dt = kDefaultDt) {
  AgentTrack track;
  track.agent_id = "a";
  for (std::size_t i = 0; i < xs.size(); ++i) {
    TrajectoryFrame f;
    f.agent_id = "a";
    f.t = static_cast<double>(i) * dt;
    f.x = xs[i];
    f.y = ys[i];
    track.frames.push_back(f);
  }
  return track;
}

}  // namespace

TEST_CASE("load_trajectories groups a well-formed table") {
  auto table = csv("id,time,x,y\nv1,0.0,0,0\nv1,0.1,1,0\nv1,0.2,2,0\n");
  auto loaded = load_trajectories(table, ColumnSchema{});
  REQUIRE(loaded.tracks.size() == 1);
  CHECK(loaded.tracks[0].frames.size() == 3);
  CHECK(loaded.dropped_rows == 0);
}

TEST_CASE("load_trajectories sorts rows and splits agents") {
  auto table = csv("id,time,x,y\nb,0.1,1,0\na,0.0,0,0\nb,0.0,0,0\na,0.1,1,1\n");
  auto loaded = load_trajectories(table, ColumnSchema{});
  REQUIRE(loaded.tracks.size() == 2);
  CHECK(loaded.tracks[0].agent_id == "a");
  CHECK(loaded.tracks[1].frames[0].t == doctest::Approx(0.0));
  CHECK(loaded.tracks[1].frames[1].x == doctest::Approx(1.0));
}

TEST_CASE("load_trajectories rejects a non-uniform grid, naming the agent") {
  auto table = csv("id,time,x,y\nv7,0.0,0,0\nv7,0.1,1,0\nv7,0.3,2,0\n");
  try {
    (void)load_trajectories(table, ColumnSchema{});
    FAIL("expected GridError");
  } catch (const GridError& e) {
    CHECK(e.agent_id() == "v7");
    CHECK(std::string(e.what()).find("v7") != std::string::npos);
  }
}

TEST_CASE("load_trajectories drops non-finite positions and counts them") {
  std::ostringstream text;
  text << "id,time,x,y\n";
  for (int i = 0; i < 100; ++i) {
    text << "v1," << i / 10.0 << "," << (i == 42 ? std::string("nan") : std::to_string(i)) << ",0\n";
  }
  auto loaded = load_trajectories(csv(text.str()), ColumnSchema{});
  REQUIRE(loaded.tracks.size() == 1);
  CHECK(loaded.tracks[0].frames.size() == 99);
  CHECK(loaded.dropped_rows == 1);
}

TEST_CASE("load_trajectories reports the missing mandatory column") {
  auto table = csv("id,time,x\nv1,0.0,0\n");
  CHECK_THROWS_WITH_AS((void)load_trajectories(table, ColumnSchema{}),
                       doctest::Contains("'y'"), SchemaError);
}

TEST_CASE("load_trajectories maps optional columns") {
  ColumnSchema schema;
  schema.id = "track";
  schema.time = "sec";
  schema.x = "px";
  schema.y = "py";
  schema.lane = "lane";
  schema.type = "kind";
  schema.length = "len";
  auto table = csv("track,sec,px,py,lane,kind,len\nq,1.0,3,4,L2,AV,4.8\n");
  auto loaded = load_trajectories(table, schema);
  const auto& f = loaded.tracks.at(0).frames.at(0);
  CHECK(f.lane_id == std::optional<std::string>("L2"));
  CHECK(f.type == AgentType::av);
  CHECK(f.length == std::optional<double>(4.8));
  CHECK_FALSE(f.width.has_value());
}

TEST_CASE("pixel_to_meter examples") {
  std::vector<TrajectoryFrame> frames(1);
  frames[0].x = 100;
  frames[0].y = 0;
  pixel_to_meter(std::span(frames), FrameTransform{0.1, 0.1, 0, 0});
  CHECK(frames[0].x == doctest::Approx(10.0));

  frames[0].x = 50;
  pixel_to_meter(std::span(frames), FrameTransform{0.2, 0.2, 50, 0});
  CHECK(frames[0].x == 0.0);

  frames[0].x = 3.25;
  frames[0].y = -7.5;
  pixel_to_meter(std::span(frames), FrameTransform{});
  CHECK(frames[0].x == 3.25);
  CHECK(frames[0].y == -7.5);

  CHECK_THROWS_AS(pixel_to_meter(std::span(frames), FrameTransform{0.0, 1.0, 0, 0}), ConfigError);
}

TEST_CASE("pixel_to_meter followed by its inverse is the identity") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> pos(-2000, 2000), scale(0.01, 2.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<TrajectoryFrame> frames(5);
    std::vector<double> xs, ys;
    for (auto& f : frames) {
      f.x = pos(rng);
      f.y = pos(rng);
      xs.push_back(f.x);
      ys.push_back(f.y);
    }
    FrameTransform tf{scale(rng), scale(rng), pos(rng), pos(rng)};
    pixel_to_meter(std::span(frames), tf);
    meter_to_pixel(std::span(frames), tf);
    for (std::size_t i = 0; i < frames.size(); ++i) {
      CHECK(std::abs(frames[i].x - xs[i]) <= 1e-12 * std::max(1.0, std::abs(xs[i])));
      CHECK(std::abs(frames[i].y - ys[i]) <= 1e-12 * std::max(1.0, std::abs(ys[i])));
    }
  }
}

TEST_CASE("gaussian_smooth keeps constants") {
  std::vector<double> s(5, 5.0);
  auto out = gaussian_smooth(s, SmoothingConfig::with_sigma(0.3));
  for (double v : out) CHECK(v == doctest::Approx(5.0).epsilon(1e-15));
}

TEST_CASE("gaussian_smooth leaves interior points of a ramp unchanged") {
  std::vector<double> ramp;
  for (int i = 0; i < 40; ++i) ramp.push_back(0.7 * i - 3.0);
  const auto cfg = SmoothingConfig::with_sigma(0.3);
  auto out = gaussian_smooth(ramp, cfg);
  // A symmetric kernel annihilates odd moments wherever it fits entirely.
  for (int i = cfg.kernel_radius; i < 40 - cfg.kernel_radius; ++i) {
    CHECK(std::abs(out[i] - ramp[i]) < 1e-9);
  }
}

TEST_CASE("gaussian_smooth of a centered impulse returns the central kernel weight") {
  std::vector<double> impulse(9, 0.0);
  impulse[4] = 1.0;
  const auto cfg = SmoothingConfig::with_sigma(0.1);  // one sample
  CHECK(cfg.kernel_radius == 3);
  // Direct discrete-convolution oracle: w0 = 1 / sum_k exp(-k^2 / 2).
  double total = 0.0;
  for (int k = -cfg.kernel_radius; k <= cfg.kernel_radius; ++k) total += std::exp(-0.5 * k * k);
  auto out = gaussian_smooth(impulse, cfg);
  CHECK(out[4] == doctest::Approx(1.0 / total).epsilon(1e-14));
  CHECK(out.size() == impulse.size());
}

TEST_CASE("gaussian_smooth config errors") {
  std::vector<double> s{1.0, 2.0};
  CHECK_THROWS_AS(gaussian_smooth(s, SmoothingConfig{0.0, 3}), ConfigError);
  CHECK_THROWS_AS(gaussian_smooth(s, SmoothingConfig{-1.0, 3}), ConfigError);
  CHECK_THROWS_AS(gaussian_smooth(s, SmoothingConfig{0.3, 8}), ConfigError);
  CHECK_NOTHROW(gaussian_smooth(s, SmoothingConfig{0.3, 9}));
}

TEST_CASE("gaussian_smooth is linear and preserves nonnegativity") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-10, 10), pos(0, 10);
  const auto cfg = SmoothingConfig::with_sigma(0.3);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 1 + trial;
    std::vector<double> f(n), g(n), combo(n), nonneg(n);
    const double a = u(rng), b = u(rng);
    for (std::size_t i = 0; i < n; ++i) {
      f[i] = u(rng);
      g[i] = u(rng);
      combo[i] = a * f[i] + b * g[i];
      nonneg[i] = pos(rng);
    }
    auto sf = gaussian_smooth(f, cfg), sg = gaussian_smooth(g, cfg);
    auto sc = gaussian_smooth(combo, cfg);
    for (std::size_t i = 0; i < n; ++i) CHECK(std::abs(sc[i] - (a * sf[i] + b * sg[i])) < 1e-12 * 100);
    for (double v : gaussian_smooth(nonneg, cfg)) CHECK(v >= 0.0);
  }
}

TEST_CASE("derive_kinematics on linear motion") {
  std::vector<double> xs, ys;
  for (int i = 0; i < 30; ++i) {
    xs.push_back(5.0 * i * kDefaultDt);
    ys.push_back(0.0);
  }
  auto raw = track_from(xs, ys);
  KinematicsConfig cfg;
  cfg.target = SmoothTarget::none;
  derive_kinematics(raw, cfg);
  for (const auto& f : raw.frames) CHECK(f.vx == doctest::Approx(5.0).epsilon(1e-9));

  // With position smoothing the ends see a renormalized (asymmetric) kernel;
  // wherever the full kernel fits the ramp is untouched.
  auto smoothed = track_from(xs, ys);
  cfg.target = SmoothTarget::positions;
  derive_kinematics(smoothed, cfg);
  const std::size_t r = static_cast<std::size_t>(cfg.smoothing.kernel_radius);
  for (std::size_t i = r + 1; i + r + 1 < smoothed.frames.size(); ++i) {
    CHECK(smoothed.frames[i].vx == doctest::Approx(5.0).epsilon(1e-9));
    CHECK(smoothed.frames[i].vy == doctest::Approx(0.0));
  }
}

TEST_CASE("derive_kinematics reproduces quadratic derivatives without smoothing") {
  // Central-difference oracle: for x = a t^2 + b t + c the centered first and
  // second differences are exact, so vx = 2 a t + b and ax = 2 a.
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-3, 3);
  for (int trial = 0; trial < 20; ++trial) {
    const double a = u(rng), b = u(rng), c = u(rng);
    std::vector<double> xs, ys;
    for (int i = 0; i < 15; ++i) {
      const double t = i * kDefaultDt;
      xs.push_back(a * t * t + b * t + c);
      ys.push_back(-a * t * t);
    }
    auto track = track_from(xs, ys);
    KinematicsConfig cfg;
    cfg.target = SmoothTarget::none;
    derive_kinematics(track, cfg);
    for (std::size_t i = 1; i + 1 < track.frames.size(); ++i) {
      const double t = track.frames[i].t;
      CHECK(std::abs(track.frames[i].vx - (2 * a * t + b)) < 1e-9);
      CHECK(std::abs(track.frames[i].ax - 2 * a) < 1e-9);
      CHECK(std::abs(track.frames[i].ay + 2 * a) < 1e-9);
      CHECK(std::abs(track.frames[i].jx) < 1e-9);
    }
  }
}

TEST_CASE("derive_kinematics of x = t^2 gives ax = 2") {
  std::vector<double> xs, ys;
  for (int i = 0; i < 10; ++i) {
    const double t = i * kDefaultDt;
    xs.push_back(0.5 * 2.0 * t * t);
    ys.push_back(0.0);
  }
  auto track = track_from(xs, ys);
  KinematicsConfig cfg;
  cfg.target = SmoothTarget::none;
  derive_kinematics(track, cfg);
  for (std::size_t i = 1; i + 1 < track.frames.size(); ++i) {
    CHECK(track.frames[i].ax == doctest::Approx(2.0).epsilon(1e-9));
  }
}

TEST_CASE("derive_kinematics at standstill is all zero") {
  auto track = track_from(std::vector<double>(12, 3.0), std::vector<double>(12, -1.0));
  derive_kinematics(track, KinematicsConfig{});
  for (const auto& f : track.frames) {
    CHECK(f.speed() == 0.0);
    CHECK(f.accel_magnitude() == 0.0);
    CHECK(f.jerk_magnitude() == 0.0);
  }
  CHECK(track.validity.jerk);
}

TEST_CASE("derive_kinematics marks short tracks invalid instead of failing") {
  auto two = track_from({0.0, 1.0}, {0.0, 0.0});
  KinematicsConfig cfg;
  derive_kinematics(two, cfg);
  CHECK(two.validity.velocity);
  CHECK_FALSE(two.validity.acceleration);
  CHECK_FALSE(two.validity.jerk);
  CHECK(std::isnan(two.frames[0].ax));

  auto three = track_from({0.0, 1.0, 2.0}, {0.0, 0.0, 0.0});
  derive_kinematics(three, cfg);
  CHECK(three.validity.acceleration);
  CHECK_FALSE(three.validity.jerk);
  CHECK(std::isnan(three.frames[1].jx));
}

TEST_CASE("derive_kinematics differentiates each contiguous run separately") {
  auto track = track_from({0, 1, 2, 3, 4, 5, 6, 7}, {0, 0, 0, 0, 0, 0, 0, 0});
  // Remove the middle frame: the two halves must not be differenced across the hole.
  track.frames.erase(track.frames.begin() + 4);
  for (std::size_t i = 4; i < track.frames.size(); ++i) track.frames[i].x += 100.0;
  KinematicsConfig cfg;
  cfg.target = SmoothTarget::none;
  derive_kinematics(track, cfg);
  for (const auto& f : track.frames) CHECK(f.vx == doctest::Approx(10.0));
}

TEST_CASE("frames table round trip keeps canonical column order") {
  auto track = track_from({0, 1, 2, 3, 4}, {0, 0, 1, 1, 2});
  track.frames[2].lane_id = "3";
  track.frames[1].length = 4.5;
  derive_kinematics(track, KinematicsConfig{});
  std::vector<AgentTrack> tracks{track};
  auto table = frames_to_table(tracks);
  CHECK(table.header.front() == "agent_id");
  CHECK(table.header.back() == "width");
  auto back = tracks_from_table(table);
  REQUIRE(back.size() == 1);
  REQUIRE(back[0].frames.size() == 5);
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(back[0].frames[i].ax == track.frames[i].ax);
    CHECK(back[0].frames[i].jy == track.frames[i].jy);
  }
  CHECK(back[0].frames[2].lane_id == std::optional<std::string>("3"));
}
