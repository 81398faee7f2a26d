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

#include "avpareto/pipeline.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <set>
#include <sstream>

#include "avpareto/model_io.hpp"
#include "json.hpp"

namespace avpareto::pipeline {

namespace {

using nlohmann::json;

// Reads one JSON object, remembering which keys were consumed so the rest
// can be rejected as unknown.
class Reader {
 public:
  Reader(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ConfigError("config section '" + where_ + "' must be an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    if (!j_.contains(key)) return;
    seen_.insert(key);
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError("config key '" + name(key) + "' has the wrong type");
    }
  }

  void get_path(const char* key, std::optional<fs::path>& out, const fs::path& base) {
    if (!j_.contains(key)) return;
    seen_.insert(key);
    if (j_.at(key).is_null()) {
      out.reset();
      return;
    }
    std::string s;
    get(key, s);
    out = resolve(s, base);
  }

  std::optional<Reader> section(const char* key) {
    if (!j_.contains(key)) return std::nullopt;
    seen_.insert(key);
    return Reader(j_.at(key), name(key));
  }

  const json* raw(const char* key) {
    if (!j_.contains(key)) return nullptr;
    seen_.insert(key);
    return &j_.at(key);
  }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.count(k)) throw ConfigError("unknown config key '" + name(k) + "'");
    }
  }

  std::string name(const std::string& key) const { return where_.empty() ? key : where_ + "." + key; }

  static fs::path resolve(const std::string& s, const fs::path& base) {
    fs::path p(s);
    return (p.is_relative() && !base.empty()) ? base / p : p;
  }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

const std::array<std::pair<const char*, std::string ingest::ColumnSchema::*>, 12> kSchemaFields{{
    {"id", &ingest::ColumnSchema::id},
    {"time", &ingest::ColumnSchema::time},
    {"x", &ingest::ColumnSchema::x},
    {"y", &ingest::ColumnSchema::y},
    {"lane", &ingest::ColumnSchema::lane},
    {"type", &ingest::ColumnSchema::type},
    {"length", &ingest::ColumnSchema::length},
    {"width", &ingest::ColumnSchema::width},
    {"vx", &ingest::ColumnSchema::vx},
    {"vy", &ingest::ColumnSchema::vy},
    {"ax", &ingest::ColumnSchema::ax},
    {"ay", &ingest::ColumnSchema::ay},
}};

ingest::SmoothTarget parse_target(const std::string& s) {
  if (s == "positions") return ingest::SmoothTarget::positions;
  if (s == "kinematics") return ingest::SmoothTarget::kinematics;
  if (s == "both") return ingest::SmoothTarget::both;
  if (s == "none") return ingest::SmoothTarget::none;
  throw ConfigError("smoothing.target must be positions, kinematics, both or none");
}

std::string target_name(ingest::SmoothTarget t) {
  switch (t) {
    case ingest::SmoothTarget::positions: return "positions";
    case ingest::SmoothTarget::kinematics: return "kinematics";
    case ingest::SmoothTarget::both: return "both";
    case ingest::SmoothTarget::none: break;
  }
  return "none";
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& p, std::string_view text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << text;
}

std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string frames_file(const std::string& name) { return "frames_" + name + ".csv"; }

// Records `rel` (relative to out_dir) as a stage output.
void record(Manifest& m, const fs::path& out_dir, const std::string& rel) {
  m.outputs[rel] = sha256_file(out_dir / rel);
}

Manifest start_manifest(const RunConfig& cfg, std::string stage) {
  Manifest m;
  m.stage = std::move(stage);
  m.config_digest = sha256_hex(config_to_json(cfg));
  m.timestamp = utc_now();
  return m;
}

void finish_stage(const RunConfig& cfg, const Manifest& m) {
  write_text(manifest_path(cfg.out_dir, m.stage), manifest_to_json(m));
}

// Input file from an earlier stage; missing means exit 3.
fs::path upstream(const RunConfig& cfg, const std::string& stage, const std::string& producer,
                  const std::string& rel, Manifest& m) {
  const fs::path p = cfg.out_dir / rel;
  if (!fs::exists(p)) {
    throw MissingUpstreamError(stage, stage + ": missing " + p.string() + " (run '" + producer + "' first)");
  }
  m.inputs[rel] = sha256_file(p);
  return p;
}

void remove_stale(const RunConfig& cfg, const std::string& rel) {
  std::error_code ec;
  fs::remove(cfg.out_dir / rel, ec);
}

}  // namespace

void RunConfig::finalize() {
  if (workers < 1) throw ConfigError("workers must be >= 1");
  if (report_bins < 1) throw ConfigError("report.bins must be >= 1");
  metrics.workers = workers;
  metrics.spacing.seed = seed;
  metrics.dt = kinematics.dt;
  metrics.xcorr.dt = kinematics.dt;
  synth.seed = seed;
  std::set<std::string> names;
  for (const auto& in : inputs) {
    if (in.name.empty()) throw ConfigError("every input needs a name");
    if (in.name.find_first_of("/\\") != std::string::npos) throw ConfigError("input name '" + in.name + "' contains a path separator");
    if (!names.insert(in.name).second) throw ConfigError("duplicate input name '" + in.name + "'");
  }
  kinematics.smoothing.validate(kinematics.dt);
  if (units == Units::pixels) transform.validate();
  metrics.validate();
  objectives.validate();
  frontier.validate();
  for (double t : {thresholds.risk, thresholds.headway_time, thresholds.gain, thresholds.jerk, thresholds.decel}) {
    if (!(t > 0.0)) throw ConfigError("report thresholds must be > 0");
  }
}

RunConfig parse_config(std::string_view json_text, const fs::path& base_dir) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  RunConfig c;
  Reader r(j, "");
  r.get("seed", c.seed);
  r.get("workers", c.workers);
  std::string out_dir;
  r.get("out_dir", out_dir);
  if (!out_dir.empty()) c.out_dir = Reader::resolve(out_dir, base_dir);

  if (const json* in = r.raw("inputs")) {
    if (!in->is_array()) throw ConfigError("config key 'inputs' must be an array");
    for (const auto& item : *in) {
      Reader ir(item, "inputs[]");
      InputSpec spec;
      std::string path;
      ir.get("name", spec.name);
      ir.get("path", path);
      ir.finish();
      if (path.empty()) throw ConfigError("input '" + spec.name + "' has no path");
      spec.path = Reader::resolve(path, base_dir);
      c.inputs.push_back(std::move(spec));
    }
  }
  if (auto s = r.section("schema")) {
    for (const auto& [key, member] : kSchemaFields) s->get(key, c.schema.*member);
    s->finish();
  }
  std::string units = "meters";
  r.get("units", units);
  if (units == "pixels") c.units = Units::pixels;
  else if (units != "meters") throw ConfigError("units must be meters or pixels");
  if (auto s = r.section("transform")) {
    s->get("scale_x", c.transform.scale_x);
    s->get("scale_y", c.transform.scale_y);
    s->get("origin_x", c.transform.origin_x);
    s->get("origin_y", c.transform.origin_y);
    s->finish();
  }
  r.get("dt", c.kinematics.dt);
  if (auto s = r.section("smoothing")) {
    s->get("sigma", c.kinematics.smoothing.sigma);
    s->get("kernel_radius", c.kinematics.smoothing.kernel_radius);
    std::string target = target_name(c.kinematics.target);
    s->get("target", target);
    c.kinematics.target = parse_target(target);
    s->get("trust_input_kinematics", c.kinematics.trust_input_kinematics);
    s->finish();
  }
  auto& m = c.metrics;
  if (const json* zones = r.raw("zones")) {
    if (!zones->is_array()) throw ConfigError("config key 'zones' must be an array");
    m.zones.zones.clear();
    for (const auto& item : *zones) {
      Reader zr(item, "zones[]");
      interaction::Zone z;
      zr.get("name", z.name);
      zr.get("min_angle", z.min_angle);
      zr.get("max_angle", z.max_angle);
      zr.get("max_range", z.max_range);
      zr.finish();
      m.zones.zones.push_back(z);
    }
  }
  if (auto s = r.section("spacing_policy")) {
    s->get("d0", m.policy.d0);
    s->get("h", m.policy.h);
    s->get("eps", m.policy.eps);
    s->get("bumper_to_bumper", m.policy.bumper_to_bumper);
    s->finish();
  }
  if (auto s = r.section("link")) {
    s->get("min_follower_speed", m.criteria.min_follower_speed);
    s->get("max_distance", m.criteria.max_distance);
    s->get("max_abs_accel", m.criteria.max_abs_accel);
    s->get("motion_window", m.criteria.motion_window);
    s->get("motion_deadband", m.criteria.motion_deadband);
    s->get("lane_width", m.criteria.lane_width);
    s->finish();
  }
  if (auto s = r.section("lanes")) {
    std::map<std::string, std::vector<std::string>> adj;
    s->get("adjacency", adj);
    s->finish();
    for (const auto& [lane, others] : adj) m.lanes.adjacency[lane] = {others.begin(), others.end()};
  }
  if (auto s = r.section("spacing_model")) {
    std::string kind = m.spacing.kind == metrics::RegressorKind::mlp ? "mlp" : "linear";
    s->get("kind", kind);
    if (kind == "mlp") m.spacing.kind = metrics::RegressorKind::mlp;
    else if (kind == "linear") m.spacing.kind = metrics::RegressorKind::linear;
    else throw ConfigError("spacing_model.kind must be mlp or linear");
    s->get("hidden", m.spacing.hidden);
    s->get("epochs", m.spacing.epochs);
    s->get("batch_size", m.spacing.batch_size);
    s->get("learning_rate", m.spacing.learning_rate);
    s->get("weight_decay", m.spacing.weight_decay);
    s->get("holdout_fraction", m.spacing.holdout_fraction);
    s->get("residual_bins", m.spacing.residual_bins);
    s->get("min_pairs", m.spacing.min_pairs);
    s->finish();
  }
  if (auto s = r.section("tail")) {
    s->get("percentile", m.tail.percentile);
    s->get("min_exceedances", m.tail.min_exceedances);
    s->get("xi_min", m.tail.xi_min);
    s->get("xi_max", m.tail.xi_max);
    s->finish();
  }
  if (auto s = r.section("delay")) {
    s->get("max_lag", m.xcorr.max_lag);
    s->get("min_variance", m.xcorr.min_variance);
    s->get("window", m.delay_window);
    s->get("min_observations", m.delay.min_observations);
    s->get("outlier_mads", m.delay.outlier_mads);
    s->get("outlier_floor", m.delay.outlier_floor);
    s->finish();
  }
  if (auto s = r.section("thresholds")) {
    s->get("jerk", m.jerk_threshold);
    s->get("decel", m.decel_threshold);
    s->get("decel_min_frames", m.decel_min_frames);
    s->get("a_min", m.a_min);
    s->get("min_speed", m.min_speed);
    s->finish();
  }
  r.get_path("frozen_models", c.frozen_models, base_dir);
  if (auto s = r.section("objectives")) {
    std::string grouping = c.objectives.grouping == objectives::Grouping::dataset ? "dataset" : "global";
    s->get("grouping", grouping);
    if (grouping == "dataset") c.objectives.grouping = objectives::Grouping::dataset;
    else if (grouping == "global") c.objectives.grouping = objectives::Grouping::global;
    else throw ConfigError("objectives.grouping must be dataset or global");
    s->get("k", c.objectives.k);
    s->get("filter", c.objectives.filter);
    s->get("filter_lo", c.objectives.filter_lo);
    s->get("filter_hi", c.objectives.filter_hi);
    s->get_path("frozen_context", c.frozen_context, base_dir);
    s->finish();
  }
  if (auto s = r.section("frontier")) {
    std::string axis(frontier::to_string(c.frontier.dependent));
    s->get("dependent_axis", axis);
    c.frontier.dependent = frontier::parse_axis(axis);
    s->get("lattice", c.frontier.lattice);
    s->get("length_min", c.frontier.length_min);
    s->get("length_max", c.frontier.length_max);
    s->get("signal_min", c.frontier.signal_min);
    s->get("signal_max", c.frontier.signal_max);
    s->get("noise_min", c.frontier.noise_min);
    s->get("noise_max", c.frontier.noise_max);
    s->get("grid", c.frontier.grid);
    s->get("starts", c.frontier.starts);
    s->get("min_points", c.frontier.min_points);
    std::string ref = c.headroom_reference == HeadroomReference::surface ? "surface" : "pareto_set";
    s->get("headroom_reference", ref);
    if (ref == "surface") c.headroom_reference = HeadroomReference::surface;
    else if (ref == "pareto_set") c.headroom_reference = HeadroomReference::pareto_set;
    else throw ConfigError("frontier.headroom_reference must be surface or pareto_set");
    s->finish();
  }
  if (auto s = r.section("report")) {
    s->get("bins", c.report_bins);
    if (auto t = s->section("thresholds")) {
      t->get("risk", c.thresholds.risk);
      t->get("headway_time", c.thresholds.headway_time);
      t->get("gain", c.thresholds.gain);
      t->get("jerk", c.thresholds.jerk);
      t->get("decel", c.thresholds.decel);
      t->finish();
    }
    s->finish();
  }
  if (auto s = r.section("synth")) {
    s->get("highway_steps", c.synth.highway_steps);
    s->get("urban_steps", c.synth.urban_steps);
    s->get("platoon_size", c.synth.platoon_size);
    s->get("position_noise", c.synth.position_noise);
    s->finish();
  }
  r.finish();
  c.finalize();
  return c;
}

RunConfig load_config(const fs::path& path) {
  if (!fs::exists(path)) throw ConfigError("config file not found: " + path.string());
  return parse_config(read_text(path), path.parent_path());
}

std::string config_to_json(const RunConfig& c) {
  json j;
  j["seed"] = c.seed;
  json inputs = json::array();
  for (const auto& in : c.inputs) inputs.push_back({{"name", in.name}, {"path", in.path.string()}});
  j["inputs"] = inputs;
  json schema;
  for (const auto& [key, member] : kSchemaFields) schema[key] = c.schema.*member;
  j["schema"] = schema;
  j["units"] = c.units == Units::pixels ? "pixels" : "meters";
  j["transform"] = {{"scale_x", c.transform.scale_x},
                    {"scale_y", c.transform.scale_y},
                    {"origin_x", c.transform.origin_x},
                    {"origin_y", c.transform.origin_y}};
  j["dt"] = c.kinematics.dt;
  j["smoothing"] = {{"sigma", c.kinematics.smoothing.sigma},
                    {"kernel_radius", c.kinematics.smoothing.kernel_radius},
                    {"target", target_name(c.kinematics.target)},
                    {"trust_input_kinematics", c.kinematics.trust_input_kinematics}};
  const auto& m = c.metrics;
  json zones = json::array();
  for (const auto& z : m.zones.zones) {
    zones.push_back({{"name", z.name}, {"min_angle", z.min_angle}, {"max_angle", z.max_angle}, {"max_range", z.max_range}});
  }
  j["zones"] = zones;
  j["spacing_policy"] = {{"d0", m.policy.d0}, {"h", m.policy.h}, {"eps", m.policy.eps},
                         {"bumper_to_bumper", m.policy.bumper_to_bumper}};
  j["link"] = {{"min_follower_speed", m.criteria.min_follower_speed},
               {"max_distance", m.criteria.max_distance},
               {"max_abs_accel", m.criteria.max_abs_accel},
               {"motion_window", m.criteria.motion_window},
               {"motion_deadband", m.criteria.motion_deadband},
               {"lane_width", m.criteria.lane_width}};
  json adj = json::object();
  for (const auto& [lane, others] : m.lanes.adjacency) adj[lane] = std::vector<std::string>(others.begin(), others.end());
  j["lanes"] = {{"adjacency", adj}};
  j["spacing_model"] = {{"kind", m.spacing.kind == metrics::RegressorKind::mlp ? "mlp" : "linear"},
                        {"hidden", m.spacing.hidden},
                        {"epochs", m.spacing.epochs},
                        {"batch_size", m.spacing.batch_size},
                        {"learning_rate", m.spacing.learning_rate},
                        {"weight_decay", m.spacing.weight_decay},
                        {"holdout_fraction", m.spacing.holdout_fraction},
                        {"residual_bins", m.spacing.residual_bins},
                        {"min_pairs", m.spacing.min_pairs}};
  j["tail"] = {{"percentile", m.tail.percentile},
               {"min_exceedances", m.tail.min_exceedances},
               {"xi_min", m.tail.xi_min},
               {"xi_max", m.tail.xi_max}};
  j["delay"] = {{"max_lag", m.xcorr.max_lag},
                {"min_variance", m.xcorr.min_variance},
                {"window", m.delay_window},
                {"min_observations", m.delay.min_observations},
                {"outlier_mads", m.delay.outlier_mads},
                {"outlier_floor", m.delay.outlier_floor}};
  j["thresholds"] = {{"jerk", m.jerk_threshold},
                     {"decel", m.decel_threshold},
                     {"decel_min_frames", m.decel_min_frames},
                     {"a_min", m.a_min},
                     {"min_speed", m.min_speed}};
  j["frozen_models"] = c.frozen_models ? json(c.frozen_models->string()) : json(nullptr);
  j["objectives"] = {{"grouping", c.objectives.grouping == objectives::Grouping::dataset ? "dataset" : "global"},
                     {"k", c.objectives.k},
                     {"filter", c.objectives.filter},
                     {"filter_lo", c.objectives.filter_lo},
                     {"filter_hi", c.objectives.filter_hi},
                     {"frozen_context", c.frozen_context ? json(c.frozen_context->string()) : json(nullptr)}};
  j["frontier"] = {{"dependent_axis", std::string(frontier::to_string(c.frontier.dependent))},
                   {"lattice", c.frontier.lattice},
                   {"length_min", c.frontier.length_min},
                   {"length_max", c.frontier.length_max},
                   {"signal_min", c.frontier.signal_min},
                   {"signal_max", c.frontier.signal_max},
                   {"noise_min", c.frontier.noise_min},
                   {"noise_max", c.frontier.noise_max},
                   {"grid", c.frontier.grid},
                   {"starts", c.frontier.starts},
                   {"min_points", c.frontier.min_points},
                   {"headroom_reference", c.headroom_reference == HeadroomReference::surface ? "surface" : "pareto_set"}};
  j["report"] = {{"bins", c.report_bins},
                 {"thresholds",
                  {{"risk", c.thresholds.risk},
                   {"headway_time", c.thresholds.headway_time},
                   {"gain", c.thresholds.gain},
                   {"jerk", c.thresholds.jerk},
                   {"decel", c.thresholds.decel}}}};
  j["synth"] = {{"highway_steps", c.synth.highway_steps},
                {"urban_steps", c.synth.urban_steps},
                {"platoon_size", c.synth.platoon_size},
                {"position_noise", c.synth.position_noise}};
  // workers and out_dir do not change any output and stay out of the digest.
  return j.dump(2) + "\n";
}

std::string sha256_hex(std::string_view bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("SHA-256 failed");
  }
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 15];
  }
  return out;
}

std::string sha256_file(const fs::path& path) { return sha256_hex(read_text(path)); }

std::string manifest_to_json(const Manifest& m) {
  json j;
  j["stage"] = m.stage;
  j["inputs"] = m.inputs;
  j["outputs"] = m.outputs;
  j["config_digest"] = m.config_digest;
  j["timestamp"] = m.timestamp;
  return j.dump(2) + "\n";
}

Manifest manifest_from_json(std::string_view text) {
  try {
    const auto j = json::parse(text);
    Manifest m;
    m.stage = j.at("stage").get<std::string>();
    m.inputs = j.at("inputs").get<std::map<std::string, std::string>>();
    m.outputs = j.at("outputs").get<std::map<std::string, std::string>>();
    m.config_digest = j.at("config_digest").get<std::string>();
    m.timestamp = j.at("timestamp").get<std::string>();
    return m;
  } catch (const json::exception& e) {
    throw SchemaError(std::string("malformed manifest: ") + e.what());
  }
}

fs::path manifest_path(const fs::path& out_dir, std::string_view stage) {
  return out_dir / ("manifest_" + std::string(stage) + ".json");
}

Manifest read_manifest(const fs::path& out_dir, std::string_view stage) {
  return manifest_from_json(read_text(manifest_path(out_dir, stage)));
}

StageResult run_ingest(const RunConfig& cfg) {
  if (cfg.inputs.empty()) throw ConfigError("ingest: no inputs configured");
  StageResult res;
  res.manifest = start_manifest(cfg, "ingest");
  fs::create_directories(cfg.out_dir);
  for (const auto& in : cfg.inputs) {
    if (!fs::exists(in.path)) throw ConfigError("ingest: input '" + in.name + "' not found: " + in.path.string());
    res.manifest.inputs[fs::absolute(in.path).lexically_normal().string()] = sha256_file(in.path);
    auto loaded = ingest::load_trajectories(in.path, cfg.schema, cfg.kinematics.dt);
    if (loaded.dropped_rows) {
      res.warnings.push_back(in.name + ": dropped " + std::to_string(loaded.dropped_rows) +
                             " rows with non-finite position");
    }
    if (cfg.units == Units::pixels) ingest::pixel_to_meter(loaded.tracks, cfg.transform);
    for (auto& t : loaded.tracks) ingest::derive_kinematics(t, cfg.kinematics);
    const std::string rel = frames_file(in.name);
    write_table(cfg.out_dir / rel, ingest::frames_to_table(loaded.tracks));
    record(res.manifest, cfg.out_dir, rel);
    res.notices.push_back(in.name + ": " + std::to_string(loaded.tracks.size()) + " agents");
  }
  finish_stage(cfg, res.manifest);
  return res;
}

StageResult run_metrics(const RunConfig& cfg) {
  StageResult res;
  res.manifest = start_manifest(cfg, "metrics");
  if (cfg.inputs.empty()) throw ConfigError("metrics: no inputs configured");
  std::vector<metrics::Dataset> datasets;
  for (const auto& in : cfg.inputs) {
    const fs::path p = upstream(cfg, "metrics", "ingest", frames_file(in.name), res.manifest);
    datasets.push_back({in.name, ingest::tracks_from_table(read_table(p), cfg.kinematics.dt)});
  }
  metrics::ModelBundle frozen;
  if (cfg.frozen_models) {
    frozen = metrics::load_models(*cfg.frozen_models);
    res.manifest.inputs[cfg.frozen_models->string()] = sha256_file(*cfg.frozen_models);
  }
  const auto result = metrics::compute_metrics(datasets, cfg.metrics, frozen);
  res.warnings = result.warnings;
  write_table(cfg.out_dir / "metrics.csv", metrics::metrics_to_table(result.records));
  record(res.manifest, cfg.out_dir, "metrics.csv");
  metrics::save_models(cfg.out_dir / "models.json", result.models);
  record(res.manifest, cfg.out_dir, "models.json");
  res.notices.push_back(std::to_string(result.records.size()) + " metric rows");
  finish_stage(cfg, res.manifest);
  return res;
}

StageResult run_objectives(const RunConfig& cfg) {
  StageResult res;
  res.manifest = start_manifest(cfg, "objectives");
  const fs::path p = upstream(cfg, "objectives", "metrics", "metrics.csv", res.manifest);
  const auto records = metrics::metrics_from_table(read_table(p));
  std::optional<objectives::NormalizationContext> ctx;
  if (cfg.frozen_context) {
    ctx = objectives::deserialize_context(read_text(*cfg.frozen_context));
    res.manifest.inputs[cfg.frozen_context->string()] = sha256_file(*cfg.frozen_context);
  }
  const auto out = objectives::build_objectives(records, cfg.objectives, ctx ? &*ctx : nullptr);
  res.warnings = out.warnings;
  write_table(cfg.out_dir / "objectives.csv", objectives::objectives_to_table(out.vectors));
  record(res.manifest, cfg.out_dir, "objectives.csv");
  write_text(cfg.out_dir / "normalization.json", objectives::serialize_context(out.context));
  record(res.manifest, cfg.out_dir, "normalization.json");
  std::array<std::size_t, 3> imputed{};
  for (const auto& v : out.vectors)
    for (int k = 0; k < 3; ++k) imputed[k] += v.imputed[k];
  res.notices.push_back(std::to_string(out.vectors.size()) + " objective vectors; imputed S/E/I: " +
                        std::to_string(imputed[0]) + "/" + std::to_string(imputed[1]) + "/" +
                        std::to_string(imputed[2]) + " (k = " + std::to_string(cfg.objectives.k) + ")");
  finish_stage(cfg, res.manifest);
  return res;
}

StageResult run_pareto(const RunConfig& cfg) {
  StageResult res;
  res.manifest = start_manifest(cfg, "pareto");
  const fs::path p = upstream(cfg, "pareto", "objectives", "objectives.csv", res.manifest);
  const auto vectors = objectives::objectives_from_table(read_table(p));
  if (vectors.empty()) throw SchemaError("pareto: objectives table has no rows");
  std::vector<frontier::Point> pts;
  pts.reserve(vectors.size());
  std::array<std::size_t, 3> imputed{};
  for (const auto& v : vectors) {
    for (double x : v.value) {
      if (!std::isfinite(x)) throw SchemaError("pareto: objectives table has missing values");
    }
    pts.push_back(v.value);
    for (int k = 0; k < 3; ++k) imputed[k] += v.imputed[k];
  }

  const auto pr = frontier::pareto_set(pts, cfg.workers);
  write_table(cfg.out_dir / "pareto.csv", frontier::pareto_table(pr));
  record(res.manifest, cfg.out_dir, "pareto.csv");
  std::vector<frontier::Point> opt;
  for (std::size_t i : pr.indices) opt.push_back(pts[i]);

  std::optional<frontier::FrontierModel> model;
  std::string notice;
  try {
    model = frontier::fit_frontier(opt, cfg.frontier);
  } catch (const FitError& e) {
    notice = std::string("frontier skipped: ") + e.what();
    res.notices.push_back(notice);
  }
  if (model) {
    write_table(cfg.out_dir / "frontier_lattice.csv", frontier::lattice_table(*model));
    record(res.manifest, cfg.out_dir, "frontier_lattice.csv");
  } else {
    remove_stale(cfg, "frontier_lattice.csv");
  }

  std::optional<frontier::HeadroomReport> hr;
  if (cfg.headroom_reference == HeadroomReference::pareto_set) {
    hr = frontier::headroom_to_set(pts, opt, cfg.workers);
  } else if (model) {
    hr = frontier::headroom(pts, *model, cfg.workers);
  }
  if (hr) {
    Table t;
    t.header = {"row", "ego_id", "t", "group", "headroom_S", "headroom_E", "headroom_I"};
    for (std::size_t i = 0; i < vectors.size(); ++i) {
      t.rows.push_back({std::to_string(i), vectors[i].ego_id, format_double(vectors[i].t), vectors[i].group,
                        format_double(hr->headroom[i][0]), format_double(hr->headroom[i][1]),
                        format_double(hr->headroom[i][2])});
    }
    write_table(cfg.out_dir / "headroom.csv", t);
    record(res.manifest, cfg.out_dir, "headroom.csv");
  } else {
    remove_stale(cfg, "headroom.csv");
    res.notices.push_back("headroom skipped: no frontier surface");
  }

  const auto hull = frontier::convex_hull_frontier(opt, cfg.frontier.dependent);
  write_table(cfg.out_dir / "hull.csv", frontier::hull_table(hull, pr.indices));
  record(res.manifest, cfg.out_dir, "hull.csv");
  if (hull.degenerate) res.notices.push_back("convex hull degenerate: Pareto points are coplanar or too few");

  auto summary = json::parse(
      frontier::summary_to_json(frontier::pareto_report(pr, model ? &*model : nullptr, hr ? &*hr : nullptr, notice)));
  summary["headroom_reference"] = cfg.headroom_reference == HeadroomReference::surface ? "surface" : "pareto_set";
  summary["hull"] = {{"degenerate", hull.degenerate}, {"facets", hull.facets.size()}, {"envelope_facets", hull.envelope.size()}};
  summary["imputed"] = {{"S", imputed[0]}, {"E", imputed[1]}, {"I", imputed[2]}};
  summary["knn_k"] = cfg.objectives.k;
  write_text(cfg.out_dir / "summary.json", summary.dump(2) + "\n");
  record(res.manifest, cfg.out_dir, "summary.json");
  res.notices.push_back(std::to_string(pr.indices.size()) + " of " + std::to_string(pr.n) + " points Pareto-optimal");
  finish_stage(cfg, res.manifest);
  return res;
}

Histogram histogram(std::string metric, const std::vector<double>& values, int bins, double threshold) {
  if (bins < 1) throw ConfigError("histogram needs at least one bin");
  Histogram h;
  h.metric = std::move(metric);
  h.threshold = threshold;
  h.n = values.size();
  if (values.empty()) return h;
  const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  double lo = *lo_it, hi = *hi_it;
  if (!(hi > lo)) {
    lo -= 0.5;
    hi += 0.5;
    bins = 1;
  }
  for (int i = 0; i <= bins; ++i) h.edges.push_back(i == bins ? hi : lo + (hi - lo) * i / bins);
  h.counts.assign(static_cast<std::size_t>(bins), 0);
  for (double v : values) {
    auto b = static_cast<long>(std::floor((v - lo) / (hi - lo) * bins));
    b = std::clamp<long>(b, 0, bins - 1);
    ++h.counts[static_cast<std::size_t>(b)];
  }
  return h;
}

std::string histogram_to_json(const Histogram& h) {
  json j;
  j["metric"] = h.metric;
  j["n"] = h.n;
  j["threshold"] = h.threshold;
  j["edges"] = h.edges;
  j["counts"] = h.counts;
  return j.dump(1) + "\n";
}

StageResult run_report(const RunConfig& cfg) {
  StageResult res;
  res.manifest = start_manifest(cfg, "report");
  auto need = [&](const std::string& producer, const std::string& rel) {
    const fs::path p = cfg.out_dir / rel;
    if (!fs::exists(manifest_path(cfg.out_dir, producer)) || !fs::exists(p)) {
      throw ReportDependencyError(producer, "report: missing " + p.string() + " from stage '" + producer + "'");
    }
    res.manifest.inputs[rel] = sha256_file(p);
    return p;
  };
  const auto records = metrics::metrics_from_table(read_table(need("metrics", "metrics.csv")));
  const fs::path summary = need("pareto", "summary.json");
  const auto pareto_manifest = read_manifest(cfg.out_dir, "pareto");

  struct Spec {
    const char* name;
    double threshold;
    std::optional<double> metrics::MetricRecord::*field;
  };
  const std::array<Spec, 5> specs{{{"risk", cfg.thresholds.risk, &metrics::MetricRecord::m_max},
                                   {"headway", cfg.thresholds.headway_time, &metrics::MetricRecord::headway_time},
                                   {"gain", cfg.thresholds.gain, &metrics::MetricRecord::gain},
                                   {"jerk", cfg.thresholds.jerk, &metrics::MetricRecord::jerk_mag},
                                   {"decel", cfg.thresholds.decel, &metrics::MetricRecord::decel_mag}}};
  fs::create_directories(cfg.out_dir / "report");
  for (const auto& s : specs) {
    std::vector<double> values;
    for (const auto& r : records) {
      const auto& v = r.*(s.field);
      if (v && std::isfinite(*v)) values.push_back(*v);
    }
    const std::string rel = std::string("report/hist_") + s.name + ".json";
    if (values.empty()) {
      remove_stale(cfg, rel);
      res.notices.push_back(std::string(s.name) + " histogram omitted: no valid values");
      continue;
    }
    write_text(cfg.out_dir / rel, histogram_to_json(histogram(s.name, values, cfg.report_bins, s.threshold)));
    record(res.manifest, cfg.out_dir, rel);
  }
  write_text(cfg.out_dir / "report/summary.json", read_text(summary));
  record(res.manifest, cfg.out_dir, "report/summary.json");
  if (pareto_manifest.outputs.count("frontier_lattice.csv")) {
    const fs::path lattice = need("pareto", "frontier_lattice.csv");
    write_text(cfg.out_dir / "report/frontier_lattice.csv", read_text(lattice));
    record(res.manifest, cfg.out_dir, "report/frontier_lattice.csv");
  } else {
    remove_stale(cfg, "report/frontier_lattice.csv");
    res.notices.push_back("frontier lattice omitted: no frontier surface was fitted");
  }
  finish_stage(cfg, res.manifest);
  return res;
}

std::vector<StageResult> run_all(const RunConfig& cfg) {
  std::vector<StageResult> out;
  out.push_back(run_ingest(cfg));
  out.push_back(run_metrics(cfg));
  out.push_back(run_objectives(cfg));
  out.push_back(run_pareto(cfg));
  out.push_back(run_report(cfg));
  return out;
}

std::vector<std::string> validate_chain(const fs::path& out_dir) {
  std::vector<std::string> problems;
  std::map<std::string, std::string> produced;  // rel path -> digest from earlier stages
  bool any = false;
  for (const auto stage : kStages) {
    const fs::path mp = manifest_path(out_dir, stage);
    if (!fs::exists(mp)) continue;
    any = true;
    Manifest m;
    try {
      m = manifest_from_json(read_text(mp));
    } catch (const SchemaError& e) {
      problems.push_back(std::string(stage) + ": " + e.what());
      continue;
    }
    if (m.stage != stage) problems.push_back(std::string(stage) + ": manifest names stage '" + m.stage + "'");
    for (const auto& [rel, digest] : m.inputs) {
      if (fs::path(rel).is_absolute()) continue;  // external input
      const auto it = produced.find(rel);
      if (it == produced.end()) {
        problems.push_back(std::string(stage) + ": input " + rel + " was not produced by an earlier stage");
      } else if (it->second != digest) {
        problems.push_back(std::string(stage) + ": input " + rel + " differs from the upstream output");
      }
    }
    for (const auto& [rel, digest] : m.outputs) {
      const fs::path p = out_dir / rel;
      if (!fs::exists(p)) {
        problems.push_back(std::string(stage) + ": output " + rel + " is missing");
      } else if (sha256_file(p) != digest) {
        problems.push_back(std::string(stage) + ": output " + rel + " changed since the stage ran");
      }
      produced[rel] = digest;
    }
  }
  if (!any) problems.push_back("no manifests in " + out_dir.string());
  return problems;
}

fs::path write_synthetic(const fs::path& dir, const synth::SynthOptions& options) {
  fs::create_directories(dir);
  json cfg;
  cfg["seed"] = options.seed;
  cfg["units"] = "pixels";
  cfg["transform"] = {{"scale_x", options.transform.scale_x},
                      {"scale_y", options.transform.scale_y},
                      {"origin_x", options.transform.origin_x},
                      {"origin_y", options.transform.origin_y}};
  const auto schema = synth::schema();
  json s;
  for (const auto& [key, member] : kSchemaFields) {
    if (!(schema.*member).empty()) s[key] = schema.*member;
  }
  cfg["schema"] = s;
  cfg["synth"] = {{"highway_steps", options.highway_steps},
                  {"urban_steps", options.urban_steps},
                  {"platoon_size", options.platoon_size},
                  {"position_noise", options.position_noise}};
  json inputs = json::array();
  for (const auto& d : synth::generate(options)) {
    write_table(dir / (d.name + ".csv"), d.table);
    inputs.push_back({{"name", d.name}, {"path", d.name + ".csv"}});
  }
  cfg["inputs"] = inputs;
  const fs::path path = dir / "config.json";
  write_text(path, cfg.dump(2) + "\n");
  return path;
}

}  // namespace avpareto::pipeline
