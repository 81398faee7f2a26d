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

#include "avpareto/delay.hpp"

using namespace avpareto;
using namespace avpareto::metrics;

namespace {

// Aperiodic acceleration-like signal: a few incommensurate sines plus a
// random walk.
std::vector<double> base_signal(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> step(0.0, 0.05);
  std::vector<double> out;
  double walk = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = 0.1 * static_cast<double>(i);
    walk += step(rng);
    out.push_back(0.8 * std::sin(1.3 * t) + 0.5 * std::sin(2.9 * t + 0.4) + 0.3 * std::sin(0.57 * t) + walk);
  }
  return out;
}

struct Pair {
  std::vector<double> leader, follower;
};

// Follower repeats the leader `shift` samples later. The leader covers a
// 5 s window; the follower covers the window plus up to 3 s of response, or
// just the window when `extended` is false.
Pair shifted(int shift, std::uint64_t seed, bool extended = true) {
  const auto base = base_signal(140, seed);
  Pair p;
  const int start = 40;
  for (int i = 0; i < 50; ++i) p.leader.push_back(base[static_cast<std::size_t>(start + i)]);
  for (int i = 0; i < (extended ? 80 : 50); ++i) {
    p.follower.push_back(base[static_cast<std::size_t>(start + i - shift)]);
  }
  return p;
}

double var(const std::vector<double>& v) {
  double m = 0.0, s = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size());
}

std::vector<DelayObservation> lane_fixture(std::size_t n, double noise, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> d(10.0, 50.0), v(5.0, 25.0), a(-2.0, 2.0);
  std::normal_distribution<double> eps(0.0, noise);
  std::vector<DelayObservation> out;
  for (std::size_t i = 0; i < n; ++i) {
    DelayObservation o;
    o.distance = d(rng);
    o.v_leader = v(rng);
    o.v_follower = v(rng);
    o.a_leader = a(rng);
    o.lane = i % 2 ? "B" : "A";
    o.follower_type = i % 3 ? "car" : "truck";
    o.tau_raw = 0.5 + 0.02 * o.distance + (o.lane == "B" ? 0.2 : 0.0) + eps(rng);
    out.push_back(o);
  }
  return out;
}

}  // namespace

TEST_CASE("xcorr recovers integer shifts exactly") {
  for (int shift : {0, 3, 7, 15, 22}) {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
      for (bool extended : {true, false}) {
        const Pair p = shifted(shift, seed, extended);
        const auto est = estimate_delay_xcorr(p.leader, p.follower);
        REQUIRE(est);
        CHECK(est->lag == shift);
        CHECK(est->tau == doctest::Approx(0.1 * shift));
      }
    }
  }
}

TEST_CASE("xcorr of identical series is zero lag") {
  const auto s = base_signal(50, 3);
  const auto est = estimate_delay_xcorr(s, s);
  REQUIRE(est);
  CHECK(est->lag == 0);
  CHECK(est->correlation == doctest::Approx(1.0));
}

TEST_CASE("xcorr refuses a follower shorter than the leader") {
  const auto s = base_signal(50, 6);
  CHECK(!estimate_delay_xcorr(s, std::span<const double>(s).subspan(0, 40)));
}

TEST_CASE("xcorr is empty for a constant series") {
  const auto s = base_signal(50, 4);
  const std::vector<double> flat(50, 0.7);
  CHECK(!estimate_delay_xcorr(s, flat));
  CHECK(!estimate_delay_xcorr(flat, s));
}

TEST_CASE("xcorr within one sample at SNR 10") {
  std::mt19937_64 rng(99);
  for (int shift : {0, 3, 7, 15}) {
    for (int trial = 0; trial < 20; ++trial) {
      Pair p = shifted(shift, 100 + static_cast<std::uint64_t>(trial));
      std::normal_distribution<double> nl(0.0, std::sqrt(var(p.leader) / 10.0));
      std::normal_distribution<double> nf(0.0, std::sqrt(var(p.follower) / 10.0));
      for (auto& x : p.leader) x += nl(rng);
      for (auto& x : p.follower) x += nf(rng);
      const auto est = estimate_delay_xcorr(p.leader, p.follower);
      REQUIRE(est);
      CHECK(std::abs(est->lag - shift) <= 1);
    }
  }
}

TEST_CASE("xcorr lag never exceeds three seconds") {
  const Pair p = shifted(35, 5);
  const auto est = estimate_delay_xcorr(p.leader, p.follower);
  REQUIRE(est);
  CHECK(est->lag <= 30);
  CHECK(est->tau >= 0.0);
}

TEST_CASE("delay model recovers an additive generator") {
  const auto data = lane_fixture(1500, 0.05, 7);
  const DelayModel m = fit_delay_model(data);
  for (double d = 12.0; d <= 48.0; d += 4.0) {
    for (const char* lane : {"A", "B"}) {
      DelayObservation o;
      o.distance = d;
      o.v_leader = 15.0;
      o.v_follower = 15.0;
      o.a_leader = 0.0;
      o.lane = lane;
      o.follower_type = "car";
      const double truth = 0.5 + 0.02 * d + (o.lane == "B" ? 0.2 : 0.0);
      CHECK(std::abs(m.predict(o) - truth) <= 0.1);
    }
  }
  CHECK(m.pseudo_r2 > 0.8);
}

TEST_CASE("constant delays give an intercept-only model") {
  auto data = lane_fixture(300, 0.0, 8);
  for (auto& o : data) o.tau_raw = 1.25;
  const DelayModel m = fit_delay_model(data);
  for (const auto& o : data) CHECK(std::abs(m.predict(o) - 1.25) <= 1e-6);
}

TEST_CASE("refinement is skipped below the observation floor") {
  const auto data = lane_fixture(50, 0.05, 9);
  const DelayRefinement r = refine_delay(data);
  CHECK(!r.model);
  CHECK(!r.warning.empty());
  for (std::size_t i = 0; i < data.size(); ++i) CHECK(r.tau[i] == data[i].tau_raw);
  CHECK_THROWS_AS(fit_delay_model(data), FitError);
}

TEST_CASE("refinement fills missing delays and replaces outliers") {
  auto data = lane_fixture(600, 0.05, 10);
  data[3].tau_raw.reset();
  data[10].tau_raw = 2.9;  // far from ~1.1
  const DelayRefinement r = refine_delay(data);
  REQUIRE(r.model);
  CHECK(r.replaced[3]);
  CHECK(r.replaced[10]);
  CHECK(!r.replaced[4]);
  CHECK(*r.tau[4] == *data[4].tau_raw);
  CHECK(std::abs(*r.tau[10] - r.model->predict(data[10])) < 1e-12);
  for (const auto& t : r.tau) {
    REQUIRE(t);
    CHECK(*t >= 0.0);
  }
}

TEST_CASE("predictions are clamped to [0, 3]") {
  auto data = lane_fixture(400, 0.05, 11);
  for (auto& o : data) o.tau_raw = *o.tau_raw + 0.1 * o.distance;  // up to ~6.7 s
  const DelayModel m = fit_delay_model(data);
  DelayObservation far = data.front();
  far.distance = 50.0;
  CHECK(m.predict_raw(far) > 3.0);
  CHECK(m.predict(far) == 3.0);
}
