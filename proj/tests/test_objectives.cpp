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

#include "avpareto/common.hpp"
#include "avpareto/objectives.hpp"

using namespace avpareto;
using namespace avpareto::objectives;
using metrics::MetricRecord;

namespace {

std::vector<MetricRecord> random_records(std::size_t n, std::uint64_t seed, double missing = 0.2) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<MetricRecord> out;
  for (std::size_t i = 0; i < n; ++i) {
    MetricRecord r;
    r.ego_id = "e" + std::to_string(i % 7);
    r.dataset = (i % 3 == 0) ? "a" : "b";
    r.t = 0.1 * static_cast<double>(i);
    auto maybe = [&](double v) -> std::optional<double> {
      return u(rng) < missing ? std::nullopt : std::optional<double>(v);
    };
    r.m_max = u(rng) * 3.0 - 1.0;
    r.headway_dist = maybe(5.0 + 40.0 * u(rng));
    r.gain = maybe(-0.5 + 2.0 * u(rng));
    r.jerk_mag = maybe(4.0 * u(rng));
    r.decel_mag = maybe(3.0 * u(rng));
    out.push_back(std::move(r));
  }
  return out;
}

// Straightforward KNN written independently of the library.
double knn_oracle(const std::vector<std::array<double, 3>>& complete, const std::array<double, 3>& x,
                  const std::array<bool, 3>& have, int k, std::size_t target) {
  std::vector<std::pair<double, std::size_t>> d;
  for (std::size_t c = 0; c < complete.size(); ++c) {
    double s = 0.0;
    for (int j = 0; j < 3; ++j) if (have[j]) s += (x[j] - complete[c][j]) * (x[j] - complete[c][j]);
    d.push_back({std::sqrt(s), c});
  }
  std::sort(d.begin(), d.end());
  const std::size_t kk = std::min<std::size_t>(k, d.size());
  if (d[0].first == 0.0) {
    double acc = 0.0;
    int n = 0;
    for (std::size_t i = 0; i < kk && d[i].first == 0.0; ++i, ++n) acc += complete[d[i].second][target];
    return acc / n;
  }
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < kk; ++i) {
    num += complete[d[i].second][target] / d[i].first;
    den += 1.0 / d[i].first;
  }
  return num / den;
}

}  // namespace

TEST_CASE("min-max normalization examples") {
  const std::vector<double> v{2.0, 4.0, 6.0};
  MetricRange r = range_of(v, false);
  auto n = minmax_normalize(v, r);
  CHECK(n == std::vector<double>{0.0, 0.5, 1.0});
  r.invert = true;
  n = minmax_normalize(v, r);
  CHECK(n == std::vector<double>{1.0, 0.5, 0.0});

  const std::vector<double> flat{3.0, 3.0, 3.0};
  std::vector<std::string> warnings;
  n = minmax_normalize(flat, range_of(flat), &warnings);
  CHECK(n == std::vector<double>{0.5, 0.5, 0.5});
  CHECK(warnings.size() == 1);
}

TEST_CASE("composite scores") {
  Normalized m;
  m[0] = 0.2;
  m[1] = 0.3;
  m[2] = 0.1;
  m[4] = 0.4;
  const Scores s = composite_scores(m);
  CHECK(*s[0] == doctest::Approx(0.8));
  CHECK(*s[1] == doctest::Approx(0.8));
  CHECK_FALSE(s[2].has_value());

  m[3] = 0.0;
  CHECK(*composite_scores(m)[2] == doctest::Approx(0.8));
}

TEST_CASE("knn imputation example") {
  std::vector<ObjectiveVector> g(3);
  g[0].value = {0.0, 0.0, 1.0};
  g[1].value = {3.0, 0.0, 0.0};
  g[2].value = {1.0, 0.0, kNaN};
  // Distances 1 and 2 in (S, E); weights 1 and 1/2 -> (1 + 0) / 1.5.
  knn_impute(g, 2);
  CHECK(g[2].value[2] == doctest::Approx(2.0 / 3.0));
  CHECK(g[2].imputed[2]);
  CHECK_FALSE(g[2].imputed[0]);

  std::vector<ObjectiveVector> h(3);
  h[0].value = {0.0, 0.0, 1.0};
  h[1].value = {0.0, 3.0, 0.0};
  h[2].value = {0.0, 1.0, kNaN};
  knn_impute(h, 2);
  // distances 1 and 2: weights 1, 0.5 -> (1 * 1 + 0.5 * 0) / 1.5
  CHECK(h[2].value[2] == doctest::Approx(2.0 / 3.0));

  std::vector<ObjectiveVector> q(3);
  q[0].value = {0.0, 0.0, 1.0};
  q[1].value = {0.0, 3.0, 0.0};
  q[2].value = {0.0, 0.0, kNaN};
  knn_impute(q, 2);
  CHECK(q[2].value[2] == 1.0);  // zero-distance neighbour copied
}

TEST_CASE("knn inverse distance with distances 1 and 3") {
  std::vector<ObjectiveVector> g(3);
  g[0].value = {1.0, 0.0, 1.0};
  g[1].value = {3.0, 0.0, 0.0};
  g[2].value = {0.0, 0.0, kNaN};
  knn_impute(g, 2);
  CHECK(g[2].value[2] == doctest::Approx(0.75));
}

TEST_CASE("knn edge cases") {
  std::vector<ObjectiveVector> g(2);
  g[0].value = {0.2, 0.4, 0.6};
  g[1].value = {kNaN, kNaN, kNaN};
  std::vector<std::string> warnings;
  knn_impute(g, 5, &warnings);
  CHECK(warnings.size() == 1);
  CHECK(g[1].value[1] == doctest::Approx(0.4));

  std::vector<ObjectiveVector> none(2);
  none[0].value = {0.2, kNaN, 0.6};
  none[1].value = {kNaN, 0.1, 0.6};
  CHECK_THROWS_AS(knn_impute(none, 3), FitError);
}

TEST_CASE("knn matches brute force on random groups") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 5 + trial % 20;
    std::vector<ObjectiveVector> g(n);
    std::vector<std::array<double, 3>> complete;
    for (auto& v : g) {
      for (auto& x : v.value) x = std::round(u(rng) * 10.0) / 10.0;
      if (u(rng) < 0.3) v.value[rng() % 3] = kNaN;
      if (v.complete()) complete.push_back(v.value);
    }
    if (complete.empty()) continue;
    const auto before = g;
    const int k = 1 + trial % 6;
    knn_impute(g, k);
    for (std::size_t i = 0; i < n; ++i) {
      std::array<bool, 3> have;
      for (int j = 0; j < 3; ++j) have[j] = std::isfinite(before[i].value[j]);
      for (int j = 0; j < 3; ++j) {
        if (have[j]) {
          CHECK(g[i].value[j] == before[i].value[j]);
          CHECK_FALSE(g[i].imputed[j]);
        } else {
          CHECK(g[i].imputed[j]);
          CHECK(g[i].value[j] == doctest::Approx(knn_oracle(complete, before[i].value, have, k, j)));
        }
      }
    }
  }
}

TEST_CASE("objectives stay in the unit cube") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto recs = random_records(300, seed);
    const auto res = build_objectives(recs, {});
    CHECK_FALSE(res.vectors.empty());
    for (const auto& v : res.vectors) {
      CHECK(v.complete());
      for (double x : v.value) {
        CHECK(x >= 0.0);
        CHECK(x <= 1.0);
      }
    }
  }
}

TEST_CASE("positive affine maps of a metric leave objectives unchanged") {
  const auto recs = random_records(400, 3);
  auto scaled = recs;
  for (auto& r : scaled) {
    if (r.headway_dist) *r.headway_dist = 3.0 * *r.headway_dist + 7.0;
    if (r.jerk_mag) *r.jerk_mag = 0.5 * *r.jerk_mag - 1.0;
  }
  const auto a = build_objectives(recs, {});
  const auto b = build_objectives(scaled, {});
  REQUIRE(a.vectors.size() == b.vectors.size());
  for (std::size_t i = 0; i < a.vectors.size(); ++i) {
    for (int j = 0; j < 3; ++j) CHECK(b.vectors[i].value[j] == doctest::Approx(a.vectors[i].value[j]).epsilon(1e-12));
  }
}

TEST_CASE("row order does not change the result") {
  const auto recs = random_records(400, 5);
  auto shuffled = recs;
  std::mt19937_64 rng(9);
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  const auto a = build_objectives(recs, {});
  const auto b = build_objectives(shuffled, {});
  REQUIRE(a.vectors.size() == b.vectors.size());
  for (std::size_t i = 0; i < a.vectors.size(); ++i) {
    CHECK(a.vectors[i].ego_id == b.vectors[i].ego_id);
    CHECK(a.vectors[i].t == b.vectors[i].t);
    CHECK(a.vectors[i].value == b.vectors[i].value);
  }
}

TEST_CASE("normalizing normalized values is the identity") {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  std::vector<double> v(100);
  for (auto& x : v) x = u(rng);
  const auto once = minmax_normalize(v, range_of(v, false));
  const auto twice = minmax_normalize(once, range_of(once, false));
  for (std::size_t i = 0; i < v.size(); ++i) CHECK(twice[i] == doctest::Approx(once[i]).epsilon(1e-14));
}

TEST_CASE("percentile filter drops extreme rows") {
  auto recs = random_records(2000, 4, 0.0);
  recs[10].jerk_mag = 1e6;
  const auto res = build_objectives(recs, {});
  CHECK(res.filtered_rows > 0);
  for (const auto& v : res.vectors) CHECK_FALSE((v.ego_id == recs[10].ego_id && v.t == recs[10].t));
  const auto& jr = res.context.groups.at(recs[10].dataset)[3];
  CHECK(jr.max < 10.0);
}

TEST_CASE("frozen context reproduces scores") {
  const auto recs = random_records(500, 8);
  ObjectivesConfig cfg;
  cfg.filter = false;
  const auto a = build_objectives(recs, cfg);
  const auto ctx = deserialize_context(serialize_context(a.context));
  const auto b = build_objectives(recs, cfg, &ctx);
  REQUIRE(a.vectors.size() == b.vectors.size());
  for (std::size_t i = 0; i < a.vectors.size(); ++i) CHECK(a.vectors[i].value == b.vectors[i].value);
  CHECK_THROWS_AS(deserialize_context("{\"format\": 1}"), SchemaError);
}

TEST_CASE("objectives table round trip") {
  const auto res = build_objectives(random_records(200, 1), {});
  const auto back = objectives_from_table(objectives_to_table(res.vectors));
  REQUIRE(back.size() == res.vectors.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].ego_id == res.vectors[i].ego_id);
    CHECK(back[i].group == res.vectors[i].group);
    CHECK(back[i].imputed == res.vectors[i].imputed);
    for (int j = 0; j < 3; ++j) CHECK(back[i].value[j] == doctest::Approx(res.vectors[i].value[j]));
  }
}
