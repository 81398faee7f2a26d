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


#include "avpareto/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "avpareto/parallel.hpp"

namespace avpareto::metrics {

namespace {

using interaction::EgoState;
using interaction::HeadingTracker;
using interaction::MotionState;
using interaction::Role;

long tick_of(double t, double dt) { return std::lround(t / dt); }

// Frames of one dataset indexed by grid tick.
struct TickIndex {
  double dt;
  std::vector<std::vector<long>> ticks;  // per track, sorted
  std::map<long, std::vector<std::pair<std::size_t, std::size_t>>> at;

  TickIndex(const Dataset& d, double step) : dt(step) {
    for (std::size_t k = 0; k < d.tracks.size(); ++k) {
      auto& tk = ticks.emplace_back();
      for (std::size_t i = 0; i < d.tracks[k].frames.size(); ++i) {
        tk.push_back(tick_of(d.tracks[k].frames[i].t, dt));
        at[tk.back()].emplace_back(k, i);
      }
    }
  }

  std::optional<std::size_t> find(std::size_t track, long tick) const {
    const auto& tk = ticks[track];
    const auto it = std::lower_bound(tk.begin(), tk.end(), tick);
    if (it == tk.end() || *it != tick) return std::nullopt;
    return static_cast<std::size_t>(it - tk.begin());
  }
};

struct ZonePair {
  InteractionPair pair;
  InteractionFeatures x;
};

struct FollowerLink {
  std::size_t track = 0;
  std::size_t frame = 0;
};

// Everything gathered for one ego frame before the models exist.
struct Pending {
  MetricRecord record;
  std::vector<ZonePair> pairs;
  std::optional<FollowerLink> follower;
  std::optional<double> tau_raw;
  DelayObservation observation;
};

double longitudinal(const TrajectoryFrame& f) { return f.longitudinal_accel(); }

// Contiguous acceleration series from tick `from` through `to`, stopping at
// the first missing or non-finite sample.
std::vector<double> accel_run(const Dataset& d, const TickIndex& index, std::size_t track, long from,
                              long to) {
  std::vector<double> out;
  for (long k = from; k <= to; ++k) {
    const auto f = index.find(track, k);
    if (!f) break;
    const double a = longitudinal(d.tracks[track].frames[*f]);
    if (!std::isfinite(a)) break;
    out.push_back(a);
  }
  return out;
}

std::vector<Pending> scan_ego(const Dataset& d, const TickIndex& index, std::size_t ego,
                              const MetricsConfig& cfg) {
  const AgentTrack& track = d.tracks[ego];
  const long lag_ticks = std::max(1L, std::lround(cfg.criteria.motion_window / cfg.dt));
  const long window = std::max(3L, std::lround(cfg.delay_window / cfg.dt));
  const long reach = std::lround(cfg.xcorr.max_lag / cfg.dt);
  HeadingTracker heading(cfg.min_speed);
  std::vector<Pending> out;

  auto motion = [&](std::size_t k, std::size_t i) {
    MotionState m{d.tracks[k].frames[i], std::nullopt};
    if (auto j = index.find(k, index.ticks[k][i] - lag_ticks)) m.lagged = d.tracks[k].frames[*j];
    return m;
  };

  // Deceleration events per contiguous run of the ego track.
  std::vector<std::optional<int>> event_of(track.frames.size());
  int next_event = 0;
  for (std::size_t start = 0; start < track.frames.size();) {
    std::size_t end = start + 1;
    while (end < track.frames.size() && index.ticks[ego][end] == index.ticks[ego][end - 1] + 1) ++end;
    std::vector<double> a;
    for (std::size_t i = start; i < end; ++i) a.push_back(longitudinal(track.frames[i]));
    for (const auto& e : detect_decel_events(a, cfg.decel_threshold, cfg.decel_min_frames)) {
      for (std::size_t i = e.start; i <= e.end; ++i) event_of[start + i] = next_event;
      ++next_event;
    }
    start = end;
  }

  for (std::size_t i = 0; i < track.frames.size(); ++i) {
    const TrajectoryFrame& e = track.frames[i];
    const long tick = index.ticks[ego][i];
    Pending p;
    MetricRecord& r = p.record;
    r.ego_id = track.agent_id;
    r.dataset = d.name;
    r.t = e.t;

    EgoState state{motion(ego, i), heading.update(e)};
    std::vector<MotionState> candidates;
    std::vector<std::size_t> candidate_track;
    for (const auto& [k, j] : index.at.at(tick)) {
      if (k == ego) continue;
      candidates.push_back(motion(k, j));
      candidate_track.push_back(k);
    }

    const auto lead = interaction::find_leader(state, candidates, cfg.zones, cfg.criteria, cfg.lanes);
    const auto follow = interaction::find_follower(state, candidates, cfg.zones, cfg.policy,
                                                   cfg.criteria, cfg.lanes);
    for (std::size_t c = 0; c < candidates.size(); ++c) {
      const TrajectoryFrame& a = candidates[c].now;
      InteractionPair pair = interaction::assign_zone(
          interaction::compute_pair_geometry(e, a, state.heading), cfg.zones);
      if (!pair.zone) continue;
      if (lead.index == c) pair.role = Role::leader;
      if (follow.index == c) pair.role = Role::follower;
      ZonePair zp{pair, {}};
      zp.x.s = pair.s;
      zp.x.rho = pair.rho;
      zp.x.rel_speed = pair.rel_speed;
      zp.x.ego_speed = std::isfinite(e.speed()) ? e.speed() : 0.0;
      zp.x.agent_type = a.type;
      zp.x.lane_context = classify_lane_context(pair, state.heading.radians, e, a, cfg.lanes,
                                                cfg.criteria.lane_width);
      zp.x.dataset_context = d.name;
      if (std::isfinite(zp.x.rel_speed)) p.pairs.push_back(std::move(zp));
    }

    if (lead.index) {
      const Headway h = compute_headway(e, candidates[*lead.index].now, cfg.min_speed);
      r.leader_id = lead.agent_id;
      r.headway_dist = h.distance;
      r.headway_time = h.time;
    }
    if (follow.index) {
      const std::size_t k = candidate_track[*follow.index];
      const TrajectoryFrame& f = candidates[*follow.index].now;
      r.follower_id = follow.agent_id;
      p.follower = FollowerLink{k, *index.find(k, tick)};
      const auto ego_a = accel_run(d, index, ego, tick - window + 1, tick);
      const auto fol_a = accel_run(d, index, k, tick - window + 1, tick + reach);
      if (static_cast<long>(ego_a.size()) == window && fol_a.size() >= ego_a.size()) {
        if (auto est = estimate_delay_xcorr(ego_a, fol_a, cfg.xcorr)) p.tau_raw = est->tau;
      }
      p.observation = DelayObservation{std::isfinite(e.speed()) ? e.speed() : 0.0,
                                       std::isfinite(f.speed()) ? f.speed() : 0.0,
                                       follow.pair->s,
                                       std::isfinite(longitudinal(e)) ? longitudinal(e) : 0.0,
                                       e.lane_id.value_or(""),
                                       std::string(to_string(f.type)),
                                       p.tau_raw};
    }

    const double j = e.jerk_magnitude();
    if (track.validity.jerk && std::isfinite(j)) {
      r.jerk_mag = j;
      r.jerk_flag = j > cfg.jerk_threshold;
    }
    const double al = longitudinal(e);
    if (track.validity.acceleration && std::isfinite(al)) r.decel_mag = std::max(0.0, -al);
    r.decel_event_id = event_of[i];
    out.push_back(std::move(p));
  }
  return out;
}

// Follower longitudinal acceleration at ego tick + tau / dt.
std::optional<double> follower_accel_at(const Dataset& d, const TickIndex& index, std::size_t track,
                                        long tick, double tau, double dt) {
  const double pos = static_cast<double>(tick) + tau / dt;
  const double lo = std::floor(pos + 1e-9);
  const double w = pos - lo;
  const auto f0 = index.find(track, static_cast<long>(lo));
  if (!f0) return std::nullopt;
  const double a0 = longitudinal(d.tracks[track].frames[*f0]);
  if (w < 1e-9) return std::isfinite(a0) ? std::optional<double>(a0) : std::nullopt;
  const auto f1 = index.find(track, static_cast<long>(lo) + 1);
  if (!f1) return std::nullopt;
  const double a1 = longitudinal(d.tracks[track].frames[*f1]);
  if (!std::isfinite(a0) || !std::isfinite(a1)) return std::nullopt;
  return a0 + w * (a1 - a0);
}

std::string cell(const std::optional<double>& v) { return format_optional(v); }
std::string cell(const std::optional<std::string>& v) { return v.value_or(""); }

std::optional<double> opt_number(const std::string& c) {
  const double v = parse_number(c);
  return std::isnan(v) ? std::nullopt : std::optional<double>(v);
}

}  // namespace

void MetricsConfig::validate() const {
  zones.validate();
  policy.validate();
  if (!(dt > 0.0)) throw ConfigError("dt must be > 0");
  if (!(delay_window > 0.0)) throw ConfigError("delay window must be > 0");
  if (!(a_min > 0.0)) throw ConfigError("gain a_min must be > 0");
  if (!(jerk_threshold > 0.0)) throw ConfigError("jerk threshold must be > 0");
  if (!(decel_threshold > 0.0)) throw ConfigError("decel threshold must be > 0");
  if (decel_min_frames < 1) throw ConfigError("decel min frames must be >= 1");
  if (!(tail.percentile > 0.0 && tail.percentile < 100.0)) {
    throw ConfigError("GPD percentile must be in (0, 100)");
  }
  if (!(xcorr.max_lag >= 0.0)) throw ConfigError("max delay must be >= 0");
}

LaneContext classify_lane_context(const InteractionPair& pair, double ego_heading,
                                  const TrajectoryFrame& ego, const TrajectoryFrame& agent,
                                  const interaction::LaneTopology& lanes, double lane_width) {
  if (std::isfinite(agent.speed()) && agent.speed() >= 0.1) {
    double diff = std::abs(std::atan2(agent.vy, agent.vx) - ego_heading) * 180.0 / std::numbers::pi;
    diff = std::fmod(diff, 360.0);
    if (diff > 180.0) diff = 360.0 - diff;
    if (diff >= 45.0 && diff <= 135.0) return LaneContext::crossing;
  }
  if (ego.lane_id && agent.lane_id) {
    if (*ego.lane_id == *agent.lane_id) return LaneContext::same;
    return lanes.same_or_adjacent(*ego.lane_id, *agent.lane_id) ? LaneContext::adjacent
                                                                : LaneContext::other;
  }
  const double lat = std::abs(pair.lateral);
  if (lat < 0.5 * lane_width) return LaneContext::same;
  if (lat < 1.5 * lane_width) return LaneContext::adjacent;
  return LaneContext::other;
}

MetricsResult compute_metrics(std::span<const Dataset> datasets, const MetricsConfig& config,
                              const ModelBundle& frozen) {
  config.validate();
  MetricsResult result;

  // Pass 1: geometry, links, raw delays, jerk and deceleration per ego.
  std::vector<TickIndex> indices;
  struct EgoRef {
    std::size_t dataset, track;
  };
  std::vector<EgoRef> egos;
  for (std::size_t d = 0; d < datasets.size(); ++d) {
    indices.emplace_back(datasets[d], config.dt);
    for (std::size_t k = 0; k < datasets[d].tracks.size(); ++k) {
      if (datasets[d].tracks[k].type == AgentType::av) egos.push_back({d, k});
    }
  }
  std::vector<std::vector<Pending>> per_ego(egos.size());
  parallel_for(egos.size(), config.workers, [&](std::size_t i) {
    per_ego[i] = scan_ego(datasets[egos[i].dataset], indices[egos[i].dataset], egos[i].track, config);
  });

  // Spacing model on every zone pair, then M_max per ego frame.
  result.models.spacing = frozen.spacing;
  if (!result.models.spacing) {
    std::vector<SpacingSample> samples;
    for (const auto& ego : per_ego)
      for (const auto& p : ego)
        for (const auto& zp : p.pairs)
          if (zp.pair.s > 0.0) samples.push_back({zp.x, zp.pair.s});
    if (samples.size() >= config.spacing.min_pairs) {
      result.models.spacing = fit_spacing_model(samples, config.spacing);
    } else {
      result.warnings.push_back("risk score disabled: " + std::to_string(samples.size()) +
                                " interaction pairs, need " + std::to_string(config.spacing.min_pairs));
    }
  }
  if (result.models.spacing) {
    const SpacingModel& model = *result.models.spacing;
    parallel_for(per_ego.size(), config.workers, [&](std::size_t i) {
      for (auto& p : per_ego[i]) {
        for (const auto& zp : p.pairs) {
          if (!(zp.pair.s > 0.0)) continue;
          const double m = risk_score(zp.pair.s, zp.x, model).value;
          if (!p.record.m_max || m > *p.record.m_max) p.record.m_max = m;
        }
      }
    });
  }

  // Tail of M_max.
  result.models.tail = frozen.tail;
  if (!result.models.tail && result.models.spacing) {
    std::vector<double> m;
    for (const auto& ego : per_ego)
      for (const auto& p : ego)
        if (p.record.m_max) m.push_back(*p.record.m_max);
    TailFitResult fit = fit_gpd_tail(m, config.tail);
    result.models.tail = fit.model;
    if (!fit.warning.empty()) result.warnings.push_back(fit.warning);
  }
  if (result.models.tail) {
    for (auto& ego : per_ego)
      for (auto& p : ego)
        if (p.record.m_max && *p.record.m_max > result.models.tail->u) {
          p.record.tail_prob = tail_exceedance_prob(*p.record.m_max, *result.models.tail);
        }
  }

  // Delay refinement over every linked follower, then the gain.
  std::vector<DelayObservation> observations;
  std::vector<Pending*> linked;
  for (auto& ego : per_ego)
    for (auto& p : ego)
      if (p.follower) {
        observations.push_back(p.observation);
        linked.push_back(&p);
      }
  DelayRefinement refined;
  if (frozen.delay) {
    refined = apply_delay_model(observations, *frozen.delay, config.delay);
  } else {
    refined = refine_delay(observations, config.delay);
    if (!refined.warning.empty()) result.warnings.push_back(refined.warning);
  }
  result.models.delay = refined.model;
  for (std::size_t i = 0; i < linked.size(); ++i) linked[i]->record.tau = refined.tau[i];

  for (std::size_t i = 0; i < per_ego.size(); ++i) {
    const Dataset& d = datasets[egos[i].dataset];
    const TickIndex& index = indices[egos[i].dataset];
    const AgentTrack& track = d.tracks[egos[i].track];
    for (std::size_t f = 0; f < per_ego[i].size(); ++f) {
      Pending& p = per_ego[i][f];
      if (!p.follower || !p.record.tau) continue;
      const auto a_f = follower_accel_at(d, index, p.follower->track, index.ticks[egos[i].track][f],
                                         *p.record.tau, config.dt);
      if (a_f) p.record.gain = stability_gain(*a_f, longitudinal(track.frames[f]), config.a_min);
    }
  }

  for (auto& ego : per_ego) {
    for (auto& p : ego) {
      for (auto& zp : p.pairs) result.pairs.push_back(std::move(zp.pair));
      result.records.push_back(std::move(p.record));
    }
  }
  return result;
}

Table metrics_to_table(std::span<const MetricRecord> records) {
  Table t;
  t.header = {"ego_id", "t", "M_max", "tail_prob", "headway_dist", "headway_time", "gain", "tau",
              "jerk_mag", "jerk_flag", "decel_event_id", "decel_mag", "valid_risk",
              "valid_headway", "valid_gain", "valid_jerk", "valid_decel", "dataset", "leader_id",
              "follower_id"};
  auto flag = [](bool b) { return std::string(b ? "1" : "0"); };
  for (const auto& r : records) {
    t.rows.push_back({r.ego_id, format_double(r.t), cell(r.m_max), cell(r.tail_prob),
                      cell(r.headway_dist), cell(r.headway_time), cell(r.gain), cell(r.tau),
                      cell(r.jerk_mag), flag(r.jerk_flag),
                      r.decel_event_id ? std::to_string(*r.decel_event_id) : "", cell(r.decel_mag),
                      flag(r.valid_risk()), flag(r.valid_headway()), flag(r.valid_gain()),
                      flag(r.valid_jerk()), flag(r.valid_decel()), r.dataset, cell(r.leader_id),
                      cell(r.follower_id)});
  }
  return t;
}

std::vector<MetricRecord> metrics_from_table(const Table& table) {
  const auto c_ego = table.require_column("ego_id");
  const auto c_t = table.require_column("t");
  const auto c_m = table.require_column("M_max");
  const auto c_hd = table.require_column("headway_dist");
  const auto c_gain = table.require_column("gain");
  const auto c_jerk = table.require_column("jerk_mag");
  const auto c_decel = table.require_column("decel_mag");
  const auto c_tail = table.column("tail_prob");
  const auto c_ht = table.column("headway_time");
  const auto c_tau = table.column("tau");
  const auto c_jf = table.column("jerk_flag");
  const auto c_ev = table.column("decel_event_id");
  const auto c_ds = table.column("dataset");
  const auto c_lead = table.column("leader_id");
  const auto c_fol = table.column("follower_id");
  std::vector<MetricRecord> out;
  for (const auto& row : table.rows) {
    MetricRecord r;
    r.ego_id = row[c_ego];
    r.t = parse_number(row[c_t]);
    if (!std::isfinite(r.t)) throw SchemaError("metrics row with non-finite 't'");
    r.m_max = opt_number(row[c_m]);
    r.headway_dist = opt_number(row[c_hd]);
    r.gain = opt_number(row[c_gain]);
    r.jerk_mag = opt_number(row[c_jerk]);
    r.decel_mag = opt_number(row[c_decel]);
    if (c_tail) r.tail_prob = opt_number(row[*c_tail]);
    if (c_ht) r.headway_time = opt_number(row[*c_ht]);
    if (c_tau) r.tau = opt_number(row[*c_tau]);
    if (c_jf && !row[*c_jf].empty()) r.jerk_flag = parse_bool(row[*c_jf]);
    if (c_ev && !row[*c_ev].empty()) r.decel_event_id = static_cast<int>(parse_number(row[*c_ev]));
    if (c_ds) r.dataset = row[*c_ds];
    if (c_lead && !row[*c_lead].empty()) r.leader_id = row[*c_lead];
    if (c_fol && !row[*c_fol].empty()) r.follower_id = row[*c_fol];
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace avpareto::metrics
