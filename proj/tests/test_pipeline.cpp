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
#include <fstream>
#include <random>
#include <sstream>

#include "avpareto/common.hpp"
#include "avpareto/pipeline.hpp"
#include "json.hpp"

using namespace avpareto;
using namespace avpareto::pipeline;
using nlohmann::json;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("avpareto_test_pipeline_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::map<std::string, std::string> output_digests(const fs::path& out_dir) {
  std::map<std::string, std::string> d;
  for (const auto stage : kStages) {
    for (const auto& [rel, digest] : read_manifest(out_dir, stage).outputs) d[rel] = digest;
  }
  return d;
}

synth::SynthOptions small_synth() {
  synth::SynthOptions o;
  o.highway_steps = 350;
  o.urban_steps = 250;
  return o;
}

RunConfig synthetic_config(const fs::path& dir, int workers) {
  const auto cfg_path = write_synthetic(dir / "data", small_synth());
  RunConfig cfg = load_config(cfg_path);
  cfg.out_dir = dir / "out";
  cfg.workers = workers;
  cfg.finalize();
  return cfg;
}

}  // namespace

TEST_CASE("SHA-256 known vectors") {
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST_CASE("config parsing") {
  const auto c = parse_config(R"({"seed": 11, "inputs": [{"name": "a", "path": "a.csv"}],
                                  "objectives": {"k": 3}, "frontier": {"dependent_axis": "S"},
                                  "thresholds": {"jerk": 3.0}})",
                              "/data");
  CHECK(c.seed == 11);
  CHECK(c.metrics.spacing.seed == 11);
  CHECK(c.inputs.at(0).path == fs::path("/data/a.csv"));
  CHECK(c.objectives.k == 3);
  CHECK(c.frontier.dependent == frontier::Axis::S);
  CHECK(c.metrics.jerk_threshold == 3.0);

  const RunConfig d = parse_config("{}");
  CHECK(d.thresholds.risk == 1.85);
  CHECK(d.thresholds.headway_time == 4.0);
  CHECK(d.thresholds.gain == 1.0);
  CHECK(d.thresholds.jerk == 2.5);
  CHECK(d.thresholds.decel == 2.0);
  CHECK(d.metrics.tail.percentile == 97.0);
  CHECK(d.objectives.k == 5);
  CHECK(d.frontier.lattice == 50);

  CHECK_THROWS_AS(parse_config(R"({"sede": 1})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"tail": {"percentile": 97, "pct": 1}})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"seed": "x"})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"thresholds": {"jerk": -1}})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"frontier": {"dependent_axis": "Q"}})"), ConfigError);
  CHECK_THROWS_AS(parse_config("{not json"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"inputs": [{"name": "a", "path": "x"}, {"name": "a", "path": "y"}]})"), ConfigError);
}

TEST_CASE("effective config round trips") {
  const auto c = parse_config(R"({"seed": 3, "units": "pixels", "transform": {"scale_x": 0.2},
                                  "lanes": {"adjacency": {"A": ["B"]}}, "spacing_model": {"kind": "linear"}})");
  const std::string once = config_to_json(c);
  const std::string twice = config_to_json(parse_config(once));
  CHECK(once == twice);
  CHECK(c.units == Units::pixels);
  CHECK(c.metrics.lanes.same_or_adjacent("A", "B"));
}

TEST_CASE("histograms count every valid value") {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> v(100);
  for (auto& x : v) x = g(rng);
  const auto h = histogram("risk", v, 12, 1.85);
  CHECK(h.edges.size() == 13);
  std::size_t total = 0;
  for (auto c : h.counts) total += c;
  CHECK(total == 100);
  CHECK(h.edges.front() == *std::min_element(v.begin(), v.end()));
  CHECK(h.edges.back() == *std::max_element(v.begin(), v.end()));
  const auto j = json::parse(histogram_to_json(h));
  CHECK(j["threshold"] == 1.85);

  const auto flat = histogram("gain", std::vector<double>(5, 2.0), 10, 1.0);
  CHECK(flat.counts == std::vector<std::size_t>{5});
  CHECK(flat.edges == std::vector<double>{1.5, 2.5});
}

TEST_CASE("missing upstream artifacts") {
  RunConfig cfg = parse_config(R"({"inputs": [{"name": "a", "path": "/nonexistent.csv"}]})");
  cfg.out_dir = scratch("missing");
  CHECK_THROWS_AS(run_metrics(cfg), MissingUpstreamError);
  CHECK_THROWS_AS(run_objectives(cfg), MissingUpstreamError);
  CHECK_THROWS_AS(run_pareto(cfg), MissingUpstreamError);
  try {
    run_report(cfg);
    FAIL("report ran without inputs");
  } catch (const ReportDependencyError& e) {
    CHECK(e.stage() == "metrics");
  }
  CHECK_THROWS_AS(run_ingest(cfg), ConfigError);
}

TEST_CASE("three-point objectives file skips the frontier") {
  RunConfig cfg = parse_config("{}");
  cfg.out_dir = scratch("toy");
  std::ofstream(cfg.out_dir / "objectives.csv") << "ego_id,t,S,E,I,imputed_S,imputed_E,imputed_I,group\n"
                                                    "a,0,1,1,1,0,0,0,g\n"
                                                    "a,0.1,0.5,0.5,0.5,0,0,0,g\n"
                                                    "a,0.2,0.9,0.2,0.3,0,0,0,g\n";
  const auto r = run_pareto(cfg);
  CHECK(fs::exists(cfg.out_dir / "pareto.csv"));
  CHECK_FALSE(fs::exists(cfg.out_dir / "frontier_lattice.csv"));
  bool noticed = false;
  for (const auto& n : r.notices) noticed = noticed || n.find("frontier skipped") != std::string::npos;
  CHECK(noticed);
  const auto s = json::parse(slurp(cfg.out_dir / "summary.json"));
  CHECK(s["n_pareto"] == 1);
  CHECK(s["frontier"].is_null());
  CHECK(s["hull"]["degenerate"] == true);
  CHECK(slurp(cfg.out_dir / "pareto.csv") == "row,is_pareto\n0,1\n1,0\n2,0\n");
}

TEST_CASE("synthetic pipeline end to end") {
  const fs::path dir = scratch("e2e");
  const RunConfig cfg = synthetic_config(dir, 2);
  run_all(cfg);
  CHECK(validate_chain(cfg.out_dir).empty());

  // Rerunning a stage with unchanged inputs reproduces its outputs.
  const auto before = read_manifest(cfg.out_dir, "ingest").outputs;
  run_ingest(cfg);
  CHECK(read_manifest(cfg.out_dir, "ingest").outputs == before);
  CHECK(validate_chain(cfg.out_dir).empty());

  SUBCASE("histograms recount the metrics table") {
    const Table m = read_table(cfg.out_dir / "metrics.csv");
    const std::map<std::string, std::string> column{
        {"risk", "M_max"}, {"headway", "headway_time"}, {"gain", "gain"}, {"jerk", "jerk_mag"}, {"decel", "decel_mag"}};
    const std::map<std::string, double> line{{"risk", 1.85}, {"headway", 4.0}, {"gain", 1.0}, {"jerk", 2.5}, {"decel", 2.0}};
    for (const auto& [name, col] : column) {
      const auto c = m.require_column(col);
      std::size_t valid = 0;
      for (const auto& row : m.rows) valid += std::isfinite(parse_number(row[c]));
      const auto j = json::parse(slurp(cfg.out_dir / "report" / ("hist_" + name + ".json")));
      std::size_t total = 0;
      for (auto n : j["counts"]) total += n.get<std::size_t>();
      CHECK(total == valid);
      CHECK(j["n"] == valid);
      CHECK(j["threshold"] == line.at(name));
    }
  }

  SUBCASE("imputation flags follow missing metrics") {
    const Table m = read_table(cfg.out_dir / "metrics.csv");
    const Table o = read_table(cfg.out_dir / "objectives.csv");
    std::map<std::pair<std::string, std::string>, const std::vector<std::string>*> by_key;
    const auto m_ego = m.require_column("ego_id"), m_t = m.require_column("t");
    for (const auto& row : m.rows) by_key[{row[m_ego], row[m_t]}] = &row;
    const auto o_ego = o.require_column("ego_id"), o_t = o.require_column("t");
    const auto c_gain = m.require_column("gain"), c_head = m.require_column("headway_dist");
    const auto c_jerk = m.require_column("jerk_mag"), c_decel = m.require_column("decel_mag");
    const auto c_risk = m.require_column("M_max");
    const auto i_s = o.require_column("imputed_S"), i_e = o.require_column("imputed_E"), i_i = o.require_column("imputed_I");
    std::size_t full = 0, missing_gain = 0;
    for (const auto& row : o.rows) {
      const auto& mr = *by_key.at({row[o_ego], row[o_t]});
      auto has = [&](std::size_t c) { return std::isfinite(parse_number(mr[c])); };
      CHECK(parse_bool(row[i_e]) == !(has(c_gain) && has(c_head)));
      CHECK(parse_bool(row[i_s]) == !has(c_risk));
      CHECK(parse_bool(row[i_i]) == !(has(c_jerk) && has(c_decel)));
      if (has(c_gain) && has(c_head) && has(c_risk) && has(c_jerk) && has(c_decel)) ++full;
      if (!has(c_gain)) ++missing_gain;
    }
    CHECK(full > 0);
    CHECK(missing_gain > 0);
  }

  SUBCASE("summary matches the emitted tables") {
    const Table o = read_table(cfg.out_dir / "objectives.csv");
    const Table p = read_table(cfg.out_dir / "pareto.csv");
    const auto s = json::parse(slurp(cfg.out_dir / "summary.json"));
    REQUIRE(o.rows.size() == p.rows.size());
    std::size_t np = 0;
    std::array<double, 3> mp{}, md{};
    for (std::size_t i = 0; i < o.rows.size(); ++i) {
      const bool opt = parse_bool(p.rows[i][1]);
      np += opt;
      for (int k = 0; k < 3; ++k) (opt ? mp : md)[k] += parse_number(o.rows[i][2 + k]);
    }
    CHECK(s["n"] == o.rows.size());
    CHECK(s["n_pareto"] == np);
    const char* names[] = {"S", "E", "I"};
    for (int k = 0; k < 3; ++k) {
      CHECK(s["mean_pareto"][names[k]].get<double>() == doctest::Approx(mp[k] / np));
      CHECK(s["mean_dominated"][names[k]].get<double>() == doctest::Approx(md[k] / (o.rows.size() - np)));
    }
    CHECK(s["frontier"]["overshoot"].contains("max"));
    CHECK(s["frontier"]["train_rmse"].is_number());
  }

  SUBCASE("tampering breaks the chain") {
    std::ofstream(cfg.out_dir / "objectives.csv", std::ios::app) << "x,0,0,0,0,0,0,0,g\n";
    const auto problems = validate_chain(cfg.out_dir);
    CHECK_FALSE(problems.empty());
  }
}

TEST_CASE("outputs do not depend on worker count or staging") {
  const fs::path a = scratch("workers_a"), b = scratch("workers_b");
  const RunConfig ca = synthetic_config(a, 1);
  const RunConfig cb = synthetic_config(b, 4);
  run_all(ca);
  run_ingest(cb);
  run_metrics(cb);
  run_objectives(cb);
  run_pareto(cb);
  run_report(cb);
  CHECK(output_digests(ca.out_dir) == output_digests(cb.out_dir));
}
