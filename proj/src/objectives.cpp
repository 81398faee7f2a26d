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


#include "avpareto/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "json.hpp"

namespace avpareto::objectives {

namespace {

constexpr std::array<Metric, kMetricCount> kMetrics{Metric::risk, Metric::headway, Metric::gain,
                                                    Metric::jerk, Metric::decel};

std::optional<double> mean_of(std::initializer_list<std::optional<double>> xs) {
  double acc = 0.0;
  for (const auto& x : xs) {
    if (!x) return std::nullopt;
    acc += *x;
  }
  return acc / static_cast<double>(xs.size());
}

std::string group_key(const metrics::MetricRecord& r, Grouping g) {
  return g == Grouping::dataset ? r.dataset : std::string("all");
}

}  // namespace

std::string_view to_string(Metric m) {
  switch (m) {
    case Metric::risk: return "risk";
    case Metric::headway: return "headway";
    case Metric::gain: return "gain";
    case Metric::jerk: return "jerk";
    case Metric::decel: break;
  }
  return "decel";
}

std::string_view to_string(Objective o) {
  switch (o) {
    case Objective::S: return "S";
    case Objective::E: return "E";
    case Objective::I: break;
  }
  return "I";
}

double normalize_value(double v, const MetricRange& range) {
  if (std::isnan(v)) return v;
  if (range.degenerate()) return 0.5;
  return std::clamp((v - range.min) / (range.max - range.min), 0.0, 1.0);
}

std::vector<double> minmax_normalize(std::span<const double> values, const MetricRange& range,
                                     std::vector<std::string>* warnings) {
  if (range.degenerate() && warnings) {
    warnings->push_back("degenerate range (min = max = " + format_double(range.min) +
                        "); values mapped to 0.5");
  }
  std::vector<double> out;
  out.reserve(values.size());
  for (double v : values) {
    const double m = normalize_value(v, range);
    out.push_back(range.invert && !std::isnan(m) ? 1.0 - m : m);
  }
  return out;
}

MetricRange range_of(std::span<const double> values, bool invert) {
  MetricRange r{0.0, 0.0, invert};
  bool any = false;
  for (double v : values) {
    if (!std::isfinite(v)) continue;
    if (!any) {
      r.min = r.max = v;
      any = true;
    }
    r.min = std::min(r.min, v);
    r.max = std::max(r.max, v);
  }
  return r;
}

Scores composite_scores(const Normalized& m, const std::array<bool, kMetricCount>& invert) {
  Normalized g;
  for (std::size_t i = 0; i < kMetricCount; ++i) {
    if (m[i]) g[i] = invert[i] ? 1.0 - *m[i] : *m[i];
  }
  return {mean_of({g[0]}), mean_of({g[1], g[2]}), mean_of({g[3], g[4]})};
}

bool ObjectiveVector::complete() const {
  return std::all_of(value.begin(), value.end(), [](double v) { return std::isfinite(v); });
}

void knn_impute(std::span<ObjectiveVector> group, int k, std::vector<std::string>* warnings) {
  std::vector<std::size_t> complete;
  bool any_missing = false;
  for (std::size_t i = 0; i < group.size(); ++i) {
    if (group[i].complete()) complete.push_back(i);
    else any_missing = true;
  }
  if (!any_missing) return;
  const std::string name = group.empty() ? std::string() : group.front().group;
  if (complete.empty()) throw FitError("no complete objective vectors in group '" + name + "'");
  if (k < 1) throw ConfigError("KNN k must be >= 1");
  std::size_t kk = static_cast<std::size_t>(k);
  if (complete.size() < kk) {
    if (warnings) {
      warnings->push_back("group '" + name + "': only " + std::to_string(complete.size()) +
                          " complete vectors, KNN k reduced from " + std::to_string(k));
    }
    kk = complete.size();
  }

  std::array<double, kObjectiveCount> centroid{};
  for (std::size_t c : complete)
    for (std::size_t j = 0; j < kObjectiveCount; ++j) centroid[j] += group[c].value[j];
  for (auto& v : centroid) v /= static_cast<double>(complete.size());

  std::vector<std::pair<double, std::size_t>> dist(complete.size());
  for (auto& target : group) {
    if (target.complete()) continue;
    std::array<bool, kObjectiveCount> have{};
    bool any = false;
    for (std::size_t j = 0; j < kObjectiveCount; ++j) {
      have[j] = std::isfinite(target.value[j]);
      any = any || have[j];
    }
    std::array<double, kObjectiveCount> fill = centroid;
    if (any) {
      for (std::size_t c = 0; c < complete.size(); ++c) {
        double d2 = 0.0;
        for (std::size_t j = 0; j < kObjectiveCount; ++j) {
          if (have[j]) d2 += std::pow(target.value[j] - group[complete[c]].value[j], 2.0);
        }
        dist[c] = {std::sqrt(d2), complete[c]};
      }
      std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(kk), dist.end());
      std::array<double, kObjectiveCount> acc{};
      double wsum = 0.0;
      std::size_t zeros = 0;
      for (std::size_t n = 0; n < kk && dist[n].first == 0.0; ++n) {
        for (std::size_t j = 0; j < kObjectiveCount; ++j) acc[j] += group[dist[n].second].value[j];
        ++zeros;
      }
      if (zeros) {
        wsum = static_cast<double>(zeros);
      } else {
        for (std::size_t n = 0; n < kk; ++n) {
          const double w = 1.0 / dist[n].first;
          for (std::size_t j = 0; j < kObjectiveCount; ++j) acc[j] += w * group[dist[n].second].value[j];
          wsum += w;
        }
      }
      for (std::size_t j = 0; j < kObjectiveCount; ++j) fill[j] = acc[j] / wsum;
    }
    for (std::size_t j = 0; j < kObjectiveCount; ++j) {
      if (!have[j]) {
        target.value[j] = fill[j];
        target.imputed[j] = true;
      }
    }
  }
}

void ObjectivesConfig::validate() const {
  if (k < 1) throw ConfigError("KNN k must be >= 1");
  if (filter && !(filter_lo >= 0.0 && filter_lo < filter_hi && filter_hi <= 100.0)) {
    throw ConfigError("filter percentiles must satisfy 0 <= lo < hi <= 100");
  }
}

std::array<std::optional<double>, kMetricCount> metric_values(const metrics::MetricRecord& r) {
  return {r.m_max, r.headway_dist, r.gain, r.jerk_mag, r.decel_mag};
}

ObjectivesResult build_objectives(std::span<const metrics::MetricRecord> records,
                                  const ObjectivesConfig& config, const NormalizationContext* frozen) {
  config.validate();
  ObjectivesResult result;

  // Group rows in (group, ego_id, t) order.
  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < records.size(); ++i) groups[group_key(records[i], config.grouping)].push_back(i);
  for (auto& [name, rows] : groups) {
    std::stable_sort(rows.begin(), rows.end(), [&](std::size_t a, std::size_t b) {
      if (records[a].ego_id != records[b].ego_id) return records[a].ego_id < records[b].ego_id;
      return records[a].t < records[b].t;
    });
  }

  for (auto& [name, rows] : groups) {
    std::vector<std::array<std::optional<double>, kMetricCount>> values;
    for (std::size_t i : rows) values.push_back(metric_values(records[i]));

    GroupRanges ranges;
    std::vector<bool> keep(rows.size(), true);
    if (frozen) {
      const auto it = frozen->groups.find(name);
      if (it == frozen->groups.end()) throw SchemaError("frozen context has no group '" + name + "'");
      ranges = it->second;
    } else {
      if (config.filter) {
        for (std::size_t m = 0; m < kMetricCount; ++m) {
          std::vector<double> col;
          for (const auto& v : values) if (v[m] && std::isfinite(*v[m])) col.push_back(*v[m]);
          if (col.empty()) continue;
          const double lo = quantile(col, config.filter_lo / 100.0);
          const double hi = quantile(col, config.filter_hi / 100.0);
          for (std::size_t r = 0; r < values.size(); ++r) {
            if (values[r][m] && (*values[r][m] < lo || *values[r][m] > hi)) keep[r] = false;
          }
        }
      }
      for (std::size_t m = 0; m < kMetricCount; ++m) {
        std::vector<double> col;
        for (std::size_t r = 0; r < values.size(); ++r) {
          if (keep[r] && values[r][m]) col.push_back(*values[r][m]);
        }
        ranges[m] = range_of(col, config.invert[m]);
        if (ranges[m].degenerate() && !col.empty()) {
          result.warnings.push_back("group '" + name + "': metric " + std::string(to_string(kMetrics[m])) +
                                    " is constant; normalized to 0.5");
        }
      }
    }
    result.context.groups[name] = ranges;

    std::vector<ObjectiveVector> vectors;
    std::array<bool, kMetricCount> invert;
    for (std::size_t m = 0; m < kMetricCount; ++m) invert[m] = ranges[m].invert;
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (!keep[r]) {
        ++result.filtered_rows;
        continue;
      }
      Normalized n;
      for (std::size_t m = 0; m < kMetricCount; ++m) {
        if (values[r][m] && std::isfinite(*values[r][m])) n[m] = normalize_value(*values[r][m], ranges[m]);
      }
      const Scores s = composite_scores(n, invert);
      if (!s[0] && !s[1] && !s[2]) {
        ++result.empty_rows;
        continue;
      }
      ObjectiveVector v;
      v.ego_id = records[rows[r]].ego_id;
      v.t = records[rows[r]].t;
      v.group = name;
      for (std::size_t j = 0; j < kObjectiveCount; ++j) v.value[j] = s[j].value_or(kNaN);
      vectors.push_back(std::move(v));
    }
    if (!vectors.empty()) knn_impute(vectors, config.k, &result.warnings);
    for (auto& v : vectors) result.vectors.push_back(std::move(v));
  }
  if (result.filtered_rows) {
    result.warnings.push_back(std::to_string(result.filtered_rows) +
                              " rows outside the percentile band were dropped");
  }
  if (result.empty_rows) {
    result.warnings.push_back(std::to_string(result.empty_rows) +
                              " rows without any computable objective were dropped");
  }
  return result;
}

Table objectives_to_table(std::span<const ObjectiveVector> vectors) {
  Table t;
  t.header = {"ego_id", "t", "S", "E", "I", "imputed_S", "imputed_E", "imputed_I", "group"};
  for (const auto& v : vectors) {
    t.rows.push_back({v.ego_id, format_double(v.t), format_optional(v.value[0]),
                      format_optional(v.value[1]), format_optional(v.value[2]),
                      v.imputed[0] ? "1" : "0", v.imputed[1] ? "1" : "0", v.imputed[2] ? "1" : "0",
                      v.group});
  }
  return t;
}

std::vector<ObjectiveVector> objectives_from_table(const Table& table) {
  const auto c_s = table.require_column("S");
  const auto c_e = table.require_column("E");
  const auto c_i = table.require_column("I");
  const auto c_ego = table.column("ego_id");
  const auto c_t = table.column("t");
  const auto c_g = table.column("group");
  const std::array<std::optional<std::size_t>, 3> c_imp{table.column("imputed_S"), table.column("imputed_E"),
                                                        table.column("imputed_I")};
  std::vector<ObjectiveVector> out;
  for (const auto& row : table.rows) {
    ObjectiveVector v;
    if (c_ego) v.ego_id = row[*c_ego];
    if (c_t) v.t = parse_number(row[*c_t]);
    if (c_g) v.group = row[*c_g];
    v.value = {parse_number(row[c_s]), parse_number(row[c_e]), parse_number(row[c_i])};
    for (std::size_t j = 0; j < 3; ++j) {
      if (c_imp[j] && !row[*c_imp[j]].empty()) v.imputed[j] = parse_bool(row[*c_imp[j]]);
    }
    out.push_back(std::move(v));
  }
  return out;
}

std::string serialize_context(const NormalizationContext& ctx) {
  nlohmann::json j;
  j["format"] = "avpareto-normalization";
  j["version"] = 1;
  nlohmann::json groups = nlohmann::json::object();
  for (const auto& [name, ranges] : ctx.groups) {
    nlohmann::json g = nlohmann::json::object();
    for (std::size_t m = 0; m < kMetricCount; ++m) {
      g[std::string(to_string(kMetrics[m]))] = {{"min", ranges[m].min}, {"max", ranges[m].max},
                                                 {"invert", ranges[m].invert}};
    }
    groups[name] = g;
  }
  j["groups"] = groups;
  return j.dump(1) + "\n";
}

NormalizationContext deserialize_context(std::string_view text) {
  try {
    const auto j = nlohmann::json::parse(text);
    if (j.at("format").get<std::string>() != "avpareto-normalization" || j.at("version").get<int>() != 1) {
      throw SchemaError("not a version 1 normalization context");
    }
    NormalizationContext ctx;
    for (const auto& [name, g] : j.at("groups").items()) {
      GroupRanges ranges;
      for (std::size_t m = 0; m < kMetricCount; ++m) {
        const auto& r = g.at(std::string(to_string(kMetrics[m])));
        ranges[m] = {r.at("min").get<double>(), r.at("max").get<double>(), r.at("invert").get<bool>()};
      }
      ctx.groups[name] = ranges;
    }
    return ctx;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("malformed normalization context: ") + e.what());
  }
}

}  // namespace avpareto::objectives
