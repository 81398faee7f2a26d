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


#include "avpareto/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace avpareto::synth {

namespace {

constexpr double kDt = kDefaultDt;

struct Idm {
  double v0 = 40.0;   // desired speed
  double t_gap = 1.8;
  double s0 = 1.0;
  double a_max = 1.5;
  double b = 2.0;

  double accel(double v, double gap, double dv) const {
    const double s_star = s0 + std::max(0.0, v * t_gap + v * dv / (2.0 * std::sqrt(a_max * b)));
    return a_max * (1.0 - std::pow(v / v0, 4.0) - std::pow(s_star / std::max(gap, 0.1), 2.0));
  }
};

struct Agent {
  std::string id;
  AgentType type;
  std::string lane;
  double length, width;
  std::vector<double> x, y;  // meters, per step (NaN when absent)
};

class Writer {
 public:
  Writer(const SynthOptions& o, std::mt19937_64& rng) : o_(o), rng_(rng), noise_(0.0, o.position_noise) {}

  void add(const Agent& a) {
    for (std::size_t n = 0; n < a.x.size(); ++n) {
      if (!std::isfinite(a.x[n])) continue;
      const double xm = a.x[n] + noise_(rng_);
      const double ym = a.y[n] + noise_(rng_);
      const double px = xm / o_.transform.scale_x + o_.transform.origin_x;
      const double py = ym / o_.transform.scale_y + o_.transform.origin_y;
      table_.rows.push_back({a.id, format_double(std::round(n * kDt * 10.0) / 10.0),
                             format_double(std::round(px * 1000.0) / 1000.0),
                             format_double(std::round(py * 1000.0) / 1000.0), a.lane,
                             std::string(to_string(a.type)), format_double(a.length),
                             format_double(a.width)});
    }
  }

  Table finish() {
    table_.header = {"id", "time", "x", "y", "lane", "type", "length", "width"};
    std::stable_sort(table_.rows.begin(), table_.rows.end(),
                     [](const auto& a, const auto& b) { return a[0] < b[0]; });
    return std::move(table_);
  }

 private:
  const SynthOptions& o_;
  std::mt19937_64& rng_;
  std::normal_distribution<double> noise_;
  Table table_;
};

std::string vehicle_id(const char* prefix, int i) {
  return std::string(prefix) + (i < 10 ? "0" : "") + std::to_string(i);
}

// Car-following lane: the head vehicle follows a speed profile, the rest use
// IDM on the predecessor's state seen `delay` steps late.
std::vector<Agent> platoon(const SynthOptions& o, std::mt19937_64& rng, const std::string& lane,
                           double y, int size, double v_base, bool with_avs, double brake_at,
                           const char* prefix) {
  std::uniform_int_distribution<int> delay_dist(4, 10);
  std::uniform_real_distribution<double> jitter(-2.0, 2.0);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  const int steps = o.highway_steps;
  const double ph = phase(rng);
  const Idm idm;
  std::vector<Agent> agents;
  std::vector<std::vector<double>> v(static_cast<std::size_t>(size), std::vector<double>(static_cast<std::size_t>(steps)));
  std::vector<int> delays;
  double x0 = 0.0;
  for (int i = 0; i < size; ++i) {
    const bool av = with_avs && i % 2 == 1;
    Agent a{vehicle_id(prefix, i), av ? AgentType::av : (i % 4 == 2 ? AgentType::truck : AgentType::car),
            lane, i % 4 == 2 ? 10.0 : 4.5, i % 4 == 2 ? 2.5 : 1.8, {}, {}};
    a.x.assign(static_cast<std::size_t>(steps), 0.0);
    a.y.assign(static_cast<std::size_t>(steps), y);
    if (i > 0) x0 -= 4.5 + idm.s0 + v_base * idm.t_gap + jitter(rng);
    a.x[0] = x0;
    v[static_cast<std::size_t>(i)][0] = v_base;
    agents.push_back(std::move(a));
    delays.push_back(av ? 3 : delay_dist(rng));
  }
  for (int n = 1; n < steps; ++n) {
    const auto un = static_cast<std::size_t>(n);
    for (int i = 0; i < size; ++i) {
      const auto ui = static_cast<std::size_t>(i);
      double& vn = v[ui][un];
      const double vp = v[ui][un - 1];
      double acc;
      if (i == 0) {
        const double t = n * kDt;
        const double target = v_base + 3.0 * std::sin(2.0 * std::numbers::pi * t / 20.0 + ph);
        acc = std::clamp(target - vp, -3.0, 1.5);
        if (t >= brake_at && t < brake_at + 2.0) acc = -2.6;  // hard braking
      } else {
        const auto seen = static_cast<std::size_t>(std::max(0, n - 1 - delays[ui]));
        const auto& lead = agents[ui - 1];
        const double gap = lead.x[seen] - agents[ui].x[un - 1] - 0.5 * (lead.length + agents[ui].length);
        acc = std::clamp(idm.accel(vp, gap, vp - v[ui - 1][seen]), -4.5, 2.0);
      }
      vn = std::max(0.0, vp + acc * kDt);
      agents[ui].x[un] = agents[ui].x[un - 1] + 0.5 * (vp + vn) * kDt;
    }
  }
  return agents;
}

Table highway(const SynthOptions& o, std::mt19937_64& rng) {
  Writer w(o, rng);
  for (const auto& a : platoon(o, rng, "A", 0.0, o.platoon_size, 13.0, true, 31.0, "h")) w.add(a);
  for (const auto& a : platoon(o, rng, "B", 3.5, 5, 15.0, false, 45.0, "b")) w.add(a);
  return w.finish();
}

// Eastbound AV with a lead car and a follower through an intersection at the
// origin; a westbound car turns left (north) across its path and a
// pedestrian crosses on the far side.
Table urban(const SynthOptions& o, std::mt19937_64& rng) {
  const int steps = o.urban_steps;
  const auto un = static_cast<std::size_t>(steps);
  std::uniform_real_distribution<double> jitter(-1.0, 1.0);
  Writer w(o, rng);
  const Idm idm{15.0, 1.6, 2.0, 1.5, 2.0};

  // Eastbound queue: lead car, AV, follower car, second AV, follower.
  const int n = 5;
  std::vector<Agent> q;
  std::vector<double> v(static_cast<std::size_t>(n), 8.0);
  std::vector<int> delays{0, 3, 7, 3, 8};
  double x = -60.0;
  std::vector<std::vector<double>> vs(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const bool av = i == 1 || i == 3;
    Agent a{vehicle_id("u", i), av ? AgentType::av : AgentType::car, "E1", 4.5, 1.8, {}, {}};
    a.x.assign(un, 0.0);
    a.y.assign(un, -1.75);
    a.x[0] = x;
    x -= 4.5 + 2.0 + 8.0 * 1.6 + jitter(rng);
    q.push_back(std::move(a));
    vs[static_cast<std::size_t>(i)].assign(un, 8.0);
  }
  for (int s = 1; s < steps; ++s) {
    const auto us = static_cast<std::size_t>(s);
    const double t = s * kDt;
    for (int i = 0; i < n; ++i) {
      const auto ui = static_cast<std::size_t>(i);
      const double vp = vs[ui][us - 1];
      double acc;
      if (i == 0) {
        // Slow for the turning car, then accelerate away.
        const double target = t < 8.0 ? 8.0 : (t < 14.0 ? 3.0 : 11.0);
        acc = std::clamp(target - vp, -2.8, 1.2);
      } else {
        const auto seen = static_cast<std::size_t>(std::max(0, s - 1 - delays[ui]));
        const double gap = q[ui - 1].x[seen] - q[ui].x[us - 1] - 4.5;
        acc = std::clamp(idm.accel(vp, gap, vp - vs[ui - 1][seen]), -4.5, 2.0);
      }
      vs[ui][us] = std::max(0.0, vp + acc * kDt);
      q[ui].x[us] = q[ui].x[us - 1] + 0.5 * (vp + vs[ui][us]) * kDt;
    }
  }
  for (const auto& a : q) w.add(a);

  // Westbound car turning left: straight, quarter circle of radius 8 m, north.
  Agent turn{"t00", AgentType::car, "W1", 4.5, 1.8, std::vector<double>(un), std::vector<double>(un)};
  double arc = 0.0;
  const double r = 8.0, speed = 6.0;
  const double approach = 50.0;
  for (int s = 0; s < steps; ++s) {
    const auto us = static_cast<std::size_t>(s);
    if (arc < approach) {
      turn.x[us] = 8.0 + approach - arc;
      turn.y[us] = 1.75;
    } else if (arc < approach + 0.5 * std::numbers::pi * r) {
      const double th = (arc - approach) / r;  // 0 .. pi/2
      turn.x[us] = 8.0 - r * std::sin(th);
      turn.y[us] = 1.75 + r * (1.0 - std::cos(th));
    } else {
      turn.x[us] = 0.0;
      turn.y[us] = 1.75 + r + (arc - approach - 0.5 * std::numbers::pi * r);
    }
    arc += speed * kDt;
  }
  w.add(turn);

  // Pedestrian crossing north to south east of the intersection.
  Agent ped{"p00", AgentType::pedestrian, "", 0.5, 0.5, std::vector<double>(un, kNaN), std::vector<double>(un, kNaN)};
  for (int s = 50; s < std::min(steps, 50 + 140); ++s) {
    const auto us = static_cast<std::size_t>(s);
    ped.x[us] = 14.0;
    ped.y[us] = 9.0 - 1.3 * (s - 50) * kDt;
  }
  w.add(ped);
  return w.finish();
}

}  // namespace

std::vector<SynthDataset> generate(const SynthOptions& options) {
  options.transform.validate();
  std::mt19937_64 rng(options.seed);
  std::vector<SynthDataset> out;
  out.push_back({"highway", highway(options, rng)});
  out.push_back({"urban", urban(options, rng)});
  return out;
}

ingest::ColumnSchema schema() {
  ingest::ColumnSchema s;
  s.id = "id";
  s.time = "time";
  s.x = "x";
  s.y = "y";
  s.lane = "lane";
  s.type = "type";
  s.length = "length";
  s.width = "width";
  return s;
}

}  // namespace avpareto::synth
