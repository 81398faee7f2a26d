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

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "avpareto/common.hpp"
#include "avpareto/frontier.hpp"
#include "json.hpp"

using namespace avpareto;
using namespace avpareto::frontier;

namespace {

std::vector<bool> brute_force(const std::vector<Point>& x) {
  std::vector<bool> out(x.size(), true);
  for (std::size_t i = 0; i < x.size(); ++i) {
    for (std::size_t j = 0; j < x.size(); ++j) {
      bool ge = true, gt = false;
      for (int k = 0; k < 3; ++k) {
        ge = ge && x[j][k] >= x[i][k];
        gt = gt || x[j][k] > x[i][k];
      }
      if (ge && gt) out[i] = false;
    }
  }
  return out;
}

std::vector<Point> random_points(std::size_t n, std::mt19937_64& rng, bool clustered) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> g(0.0, 0.05);
  std::vector<Point> out(n);
  std::array<Point, 4> centers;
  for (auto& c : centers) c = {u(rng), u(rng), u(rng)};
  for (auto& p : out) {
    if (clustered) {
      const auto& c = centers[rng() % 4];
      for (int k = 0; k < 3; ++k) p[k] = std::clamp(c[k] + g(rng), 0.0, 1.0);
    } else {
      // Coarse values so ties and duplicates occur.
      for (int k = 0; k < 3; ++k) p[k] = std::round(u(rng) * 20.0) / 20.0;
    }
  }
  return out;
}

double surface(double s, double e) { return 1.0 - 0.5 * s * s - 0.5 * e * e; }

// Triples with every other point on one closed side, in general position.
std::set<std::set<std::size_t>> brute_hull(const std::vector<Point>& p) {
  std::set<std::set<std::size_t>> out;
  const std::size_t n = p.size();
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = a + 1; b < n; ++b)
      for (std::size_t c = b + 1; c < n; ++c) {
        const Point u{p[b][0] - p[a][0], p[b][1] - p[a][1], p[b][2] - p[a][2]};
        const Point v{p[c][0] - p[a][0], p[c][1] - p[a][1], p[c][2] - p[a][2]};
        const Point nn{u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2], u[0] * v[1] - u[1] * v[0]};
        int pos = 0, neg = 0;
        for (std::size_t d = 0; d < n; ++d) {
          const double s = nn[0] * (p[d][0] - p[a][0]) + nn[1] * (p[d][1] - p[a][1]) + nn[2] * (p[d][2] - p[a][2]);
          if (s > 1e-12) ++pos;
          if (s < -1e-12) ++neg;
        }
        if (pos == 0 || neg == 0) out.insert({a, b, c});
      }
  return out;
}

}  // namespace

TEST_CASE("dominance examples") {
  CHECK(dominates({1, 1, 1}, {0.5, 0.5, 0.5}));
  CHECK_FALSE(dominates({0.7, 0.7, 0.7}, {0.7, 0.7, 0.7}));
  CHECK_FALSE(dominates({0.9, 0.1, 0.5}, {0.1, 0.9, 0.5}));
  CHECK_FALSE(dominates({0.1, 0.9, 0.5}, {0.9, 0.1, 0.5}));
  CHECK(dominates({0.7, 0.7, 0.8}, {0.7, 0.7, 0.7}));
}

TEST_CASE("dominance is irreflexive, antisymmetric and transitive") {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int> u(0, 4);
  for (int i = 0; i < 10000; ++i) {
    Point a, b, c;
    for (int k = 0; k < 3; ++k) {
      a[k] = u(rng) / 4.0;
      b[k] = u(rng) / 4.0;
      c[k] = u(rng) / 4.0;
    }
    CHECK_FALSE(dominates(a, a));
    CHECK_FALSE((dominates(a, b) && dominates(b, a)));
    if (dominates(a, b) && dominates(b, c)) CHECK(dominates(a, c));
  }
}

TEST_CASE("Pareto set examples") {
  const std::vector<Point> x{{1, 1, 1}, {0.5, 0.5, 0.5}, {0.9, 0.2, 0.3}};
  auto r = pareto_set(x);
  CHECK(r.indices == std::vector<std::size_t>{0});
  CHECK(r.fraction == doctest::Approx(1.0 / 3.0));
  CHECK((*r.mean_dominated)[0] == doctest::Approx(0.7));

  const std::vector<Point> y{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
  CHECK(pareto_set(y).indices.size() == 3);

  const std::vector<Point> one{{0.3, 0.3, 0.3}};
  r = pareto_set(one);
  CHECK(r.indices.size() == 1);
  CHECK(r.fraction == 1.0);
  CHECK_FALSE(r.mean_dominated.has_value());

  const std::vector<Point> dup{{0.5, 0.5, 0.5}, {0.5, 0.5, 0.5}, {0.1, 0.1, 0.1}};
  CHECK(pareto_set(dup).indices == std::vector<std::size_t>{0, 1});
  CHECK_THROWS_AS(pareto_set(std::vector<Point>{}), DomainError);
}

TEST_CASE("Pareto set equals brute force") {
  std::mt19937_64 rng(2);
  for (std::size_t n : {10, 100, 1000, 2000}) {
    for (bool clustered : {false, true}) {
      const auto x = random_points(n, rng, clustered);
      const auto expected = brute_force(x);
      CHECK(pareto_set(x).is_pareto == expected);
      CHECK(pareto_set(x, 4).is_pareto == expected);
    }
  }
}

TEST_CASE("Pareto membership survives monotone transforms of one axis") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    auto x = random_points(300, rng, trial % 2 == 1);
    const auto before = pareto_set(x).is_pareto;
    const int axis = trial % 3;
    for (auto& p : x) p[axis] = std::exp(3.0 * p[axis]) - 7.0;
    CHECK(pareto_set(x).is_pareto == before);
  }
}

TEST_CASE("GPR recovers a known concave surface") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 0.01);
  std::vector<Point> cand;
  for (int i = 0; i < 120; ++i) {
    const double s = u(rng), e = u(rng);
    cand.push_back({s, e, surface(s, e) + noise(rng)});
  }
  const auto pr = pareto_set(cand);
  std::vector<Point> train;
  for (std::size_t i : pr.indices) {
    if (train.size() < 60) train.push_back(cand[i]);
  }
  REQUIRE(train.size() == 60);
  const auto m = fit_frontier(train);

  double sse = 0.0;
  for (const auto& c : m.lattice) sse += std::pow(c.mean - surface(c.u, c.v), 2.0);
  const double rmse = std::sqrt(sse / static_cast<double>(m.lattice.size()));
  CHECK(rmse < 0.05);
  CHECK(m.lattice.size() == 2500);
  const double noise_sd = std::sqrt(m.kernel.noise_var);
  for (std::size_t i = 0; i < train.size(); ++i) {
    CHECK(std::abs(m.predict(train[i][0], train[i][1]).first - train[i][2]) <= 3.0 * noise_sd);
  }
  CHECK(m.kernel.noise_var > 0.0);
  CHECK(m.kernel.length[0] > 0.0);
  CHECK(m.overshoot.resolution == 50);
  CHECK(m.overshoot.fraction >= 0.0);
  for (const auto& c : m.lattice) CHECK(std::isfinite(c.mean));
}

TEST_CASE("GPR variance is smallest at the data") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.2, 0.5);
  std::vector<Point> train;
  for (int i = 0; i < 20; ++i) {
    const double s = u(rng), e = u(rng);
    train.push_back({s, e, surface(s, e)});
  }
  const auto m = fit_frontier(train);
  double max_train = 0.0;
  for (const auto& p : train) max_train = std::max(max_train, m.predict(p[0], p[1]).second);
  // Lattice cell farthest from every training input.
  std::size_t far = 0;
  double far_d = -1.0;
  for (std::size_t c = 0; c < m.lattice.size(); ++c) {
    double d = 1e9;
    for (const auto& p : train) d = std::min(d, std::hypot(m.lattice[c].u - p[0], m.lattice[c].v - p[1]));
    if (d > far_d) {
      far_d = d;
      far = c;
    }
  }
  CHECK(max_train <= m.lattice[far].std);
}

TEST_CASE("GPR on a constant target") {
  std::vector<Point> train;
  for (int i = 0; i < 12; ++i) train.push_back({i / 11.0, std::fmod(i * 0.37, 1.0), 0.9});
  const auto m = fit_frontier(train);
  for (const auto& c : m.lattice) CHECK(std::abs(c.mean - 0.9) < 1e-6);
  CHECK(m.overshoot.fraction == 0.0);
}

TEST_CASE("frontier fit refuses bad input") {
  const std::vector<Point> few{{0.1, 0.2, 0.3}, {0.2, 0.1, 0.3}, {0.3, 0.3, 0.1}};
  CHECK_THROWS_AS(fit_frontier(few), FitError);
  std::vector<Point> flat;
  for (int i = 0; i < 8; ++i) flat.push_back({0.5, i / 8.0, 0.2});
  CHECK_THROWS_AS(fit_frontier(flat), FitError);
  FrontierOptions bad;
  bad.lattice = 1;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("headroom against a constant frontier") {
  std::vector<Point> train;
  for (int i = 0; i < 12; ++i) train.push_back({i / 11.0, std::fmod(i * 0.37, 1.0), 0.9});
  const auto m = fit_frontier(train);
  const double cell = 1.0 / 49.0;
  const Point h = headroom(Point{20 * cell, 31 * cell, 0.5}, m);
  CHECK(h[2] == doctest::Approx(0.4).epsilon(1e-5));
  CHECK(h[0] == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(h[1] == doctest::Approx(0.0).epsilon(1e-9));

  // Off-lattice: other axes bounded by the cell size.
  const Point g = headroom(Point{0.5, 0.5, 0.5}, m);
  CHECK(g[2] == doctest::Approx(0.4).epsilon(1e-5));
  CHECK(g[0] <= cell);
  CHECK(g[1] <= cell);

  // Above the frontier clamps to zero.
  CHECK(headroom(Point{0.5, 0.5, 0.95}, m)[2] == 0.0);
}

TEST_CASE("headroom is nonnegative and vanishes on the surface") {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Point> train;
  for (int i = 0; i < 40; ++i) {
    const double s = u(rng), e = u(rng);
    train.push_back({s, e, surface(s, e)});
  }
  const auto m = fit_frontier(train);
  std::vector<Point> xs;
  for (int i = 0; i < 300; ++i) xs.push_back({u(rng), u(rng), u(rng)});
  const auto rep = headroom(xs, m, 3);
  for (const auto& h : rep.headroom)
    for (double v : h) CHECK(v >= 0.0);
  const auto serial = headroom(xs, m, 1);
  CHECK(serial.medians == rep.medians);

  const double diag = std::sqrt(2.0) / 49.0;
  for (std::size_t c = 0; c < m.lattice.size(); c += 37) {
    const Point h = headroom(m.surface_point(c), m);
    CHECK(h == Point{0.0, 0.0, 0.0});
  }
  for (int i = 0; i < 100; ++i) {
    const double s = u(rng), e = u(rng);
    const Point h = headroom(Point{s, e, m.predict(s, e).first}, m);
    for (double v : h) CHECK(v <= diag);
  }
}

TEST_CASE("headroom to the Pareto set") {
  const std::vector<Point> pareto{{1.0, 0.5, 0.5}, {0.5, 1.0, 0.5}};
  const std::vector<Point> xs{{0.9, 0.4, 0.6}};
  const auto r = headroom_to_set(xs, pareto);
  CHECK(r.headroom[0][0] == doctest::Approx(0.1));
  CHECK(r.headroom[0][1] == doctest::Approx(0.1));
  CHECK(r.headroom[0][2] == 0.0);
}

TEST_CASE("convex hull of a tetrahedron") {
  const std::vector<Point> p{{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {0.2, 0.3, 1}};
  const auto h = convex_hull_frontier(p);
  REQUIRE_FALSE(h.degenerate);
  CHECK(h.facets.size() == 4);
  std::set<std::set<std::size_t>> got;
  for (const auto& f : h.facets) got.insert({f.v[0], f.v[1], f.v[2]});
  CHECK(got == brute_hull(p));
  // Only the base faces downward; the three sides all lean up.
  std::size_t upper = 0;
  for (const auto& f : h.facets) {
    const bool base = std::set<std::size_t>{f.v[0], f.v[1], f.v[2]} == std::set<std::size_t>{0, 1, 2};
    CHECK(f.upper == !base);
    upper += f.upper;
  }
  CHECK(h.envelope.size() == upper);
}

TEST_CASE("convex hull of a cube") {
  std::vector<Point> p;
  for (int i = 0; i < 8; ++i) p.push_back({double(i & 1), double((i >> 1) & 1), double((i >> 2) & 1)});
  const auto h = convex_hull_frontier(p);
  REQUIRE_FALSE(h.degenerate);
  CHECK(h.facets.size() == 12);
  REQUIRE(h.envelope.size() == 2);
  for (std::size_t f : h.envelope) {
    for (std::size_t v : h.facets[f].v) CHECK(p[v][2] == 1.0);
    CHECK(h.facets[f].normal[2] == doctest::Approx(1.0));
  }
  const auto hs = convex_hull_frontier(p, Axis::S);
  CHECK(hs.envelope.size() == 2);
}

TEST_CASE("degenerate hulls") {
  std::vector<Point> plane;
  for (int i = 0; i < 10; ++i) plane.push_back({i / 10.0, std::fmod(i * 0.3, 1.0), 0.5});
  const auto h = convex_hull_frontier(plane);
  CHECK(h.degenerate);
  CHECK(h.envelope.empty());
  const std::vector<Point> line{{0, 0, 0}, {1, 1, 1}, {0.5, 0.5, 0.5}, {0.2, 0.2, 0.2}};
  CHECK(convex_hull_frontier(line).degenerate);
  CHECK(convex_hull_frontier(std::vector<Point>{{0, 0, 0}, {1, 0, 0}, {0, 1, 0}}).degenerate);
}

TEST_CASE("convex hull matches brute force on random clouds") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<Point> p(6 + trial % 15);
    for (auto& q : p) q = {u(rng), u(rng), u(rng)};
    const auto h = convex_hull_frontier(p);
    std::set<std::set<std::size_t>> got;
    for (const auto& f : h.facets) got.insert({f.v[0], f.v[1], f.v[2]});
    CHECK(got == brute_hull(p));
    CHECK(got.size() == h.facets.size());
    // Every point lies behind every facet.
    for (const auto& f : h.facets) {
      const double off = f.normal[0] * p[f.v[0]][0] + f.normal[1] * p[f.v[0]][1] + f.normal[2] * p[f.v[0]][2];
      for (const auto& q : p) CHECK(f.normal[0] * q[0] + f.normal[1] * q[1] + f.normal[2] * q[2] <= off + 1e-9);
    }
  }
}

TEST_CASE("summary restates the inputs") {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Point> x;
  for (int i = 0; i < 400; ++i) {
    const double s = u(rng), e = u(rng);
    x.push_back({s, e, surface(s, e) * (0.6 + 0.4 * u(rng))});
  }
  const auto pr = pareto_set(x);
  std::vector<Point> pts;
  for (std::size_t i : pr.indices) pts.push_back(x[i]);
  const auto m = fit_frontier(pts);
  const auto hr = headroom(x, m);
  const auto j = nlohmann::json::parse(summary_to_json(pareto_report(pr, &m, &hr)));

  std::size_t count = 0;
  Point mp{}, md{};
  for (std::size_t i = 0; i < x.size(); ++i) {
    const bool opt = !std::any_of(x.begin(), x.end(), [&](const Point& q) { return dominates(q, x[i]); });
    count += opt;
    for (int k = 0; k < 3; ++k) (opt ? mp : md)[k] += x[i][k];
  }
  CHECK(j["n"] == 400);
  CHECK(j["n_pareto"] == count);
  CHECK(j["pareto_fraction"].get<double>() == doctest::Approx(count / 400.0));
  const char* names[] = {"S", "E", "I"};
  for (int k = 0; k < 3; ++k) {
    CHECK(j["mean_pareto"][names[k]].get<double>() == doctest::Approx(mp[k] / count));
    CHECK(j["mean_dominated"][names[k]].get<double>() == doctest::Approx(md[k] / (400 - count)));
    // Pareto points beat the dominated set on average here.
    CHECK(mp[k] / count >= md[k] / (400 - count) - 0.2);
  }
  std::vector<double> hi;
  for (const auto& h : hr.headroom) hi.push_back(h[2]);
  CHECK(j["median_headroom"]["I"].get<double>() == doctest::Approx(median(hi)));
  CHECK(j["frontier"]["overshoot"]["resolution"] == 50);
  CHECK(j["frontier"]["train_rmse"].get<double>() >= 0.0);

  const auto none = nlohmann::json::parse(summary_to_json(pareto_report(pr, nullptr, nullptr, "skipped")));
  CHECK(none["frontier"].is_null());
  CHECK(none["frontier_notice"] == "skipped");
}
