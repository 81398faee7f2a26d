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


#include "avpareto/delay.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

namespace avpareto::metrics {

namespace {

constexpr int kDegree = 3;
constexpr double kRidge = 1e-8;

double pearson(std::span<const double> a, std::span<const double> b, double min_variance) {
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa / n < min_variance || sbb / n < min_variance) return kNaN;
  return sab / std::sqrt(saa * sbb);
}

double variance(std::span<const double> a) {
  double m = 0.0;
  for (double v : a) m += v;
  m /= static_cast<double>(a.size());
  double s = 0.0;
  for (double v : a) s += (v - m) * (v - m);
  return s / static_cast<double>(a.size());
}

// Uncentered cubic B-spline basis on [lo, hi] with uniform knots.
Eigen::VectorXd bspline(double x, double lo, double hi, int size) {
  const int intervals = size - kDegree;
  const double h = (hi - lo) / intervals;
  x = std::clamp(x, lo, hi);
  // Index of the knot span, with the right end folded into the last span.
  int span = std::min(static_cast<int>(std::floor((x - lo) / h)), intervals - 1);
  const double u = (x - lo) / h - span;
  // Uniform cubic B-spline blending functions.
  const double u2 = u * u, u3 = u2 * u;
  Eigen::VectorXd b = Eigen::VectorXd::Zero(size);
  b(span) = (1 - 3 * u + 3 * u2 - u3) / 6.0;
  b(span + 1) = (4 - 6 * u2 + 3 * u3) / 6.0;
  b(span + 2) = (1 + 3 * u + 3 * u2 - 3 * u3) / 6.0;
  b(span + 3) = u3 / 6.0;
  return b;
}

double term_input(const DelayObservation& o, std::size_t k) {
  switch (k) {
    case 0: return o.v_leader;
    case 1: return o.v_follower;
    case 2: return o.distance;
    default: return o.a_leader;
  }
}

Eigen::MatrixXd second_difference_penalty(int size) {
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(size - 2, size);
  for (int i = 0; i < size - 2; ++i) {
    d(i, i) = 1.0;
    d(i, i + 1) = -2.0;
    d(i, i + 2) = 1.0;
  }
  return d.transpose() * d;
}

std::vector<std::string> levels_of(std::span<const DelayObservation> rows,
                                   const std::string DelayObservation::*field) {
  std::vector<std::string> out;
  for (const auto& r : rows) out.push_back(r.*field);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

struct Layout {
  std::array<Eigen::Index, 4> term_offset{};
  std::array<bool, 4> term_active{};
  Eigen::Index lane_offset = 0;
  Eigen::Index type_offset = 0;
  Eigen::Index width = 1;
};

struct Solve {
  Eigen::VectorXd beta;
  double rss = 0.0;
  double gcv = 0.0;
};

Solve penalized_solve(const Eigen::MatrixXd& xtx, const Eigen::VectorXd& xty, double yty,
                      const Layout& layout, const Eigen::MatrixXd& penalty,
                      const std::array<double, 4>& lambdas, double n) {
  Eigen::MatrixXd a = xtx;
  for (std::size_t k = 0; k < 4; ++k) {
    if (!layout.term_active[k]) continue;
    const Eigen::Index o = layout.term_offset[k];
    a.block(o, o, DelayModel::kBasisSize, DelayModel::kBasisSize) += lambdas[k] * penalty;
  }
  for (Eigen::Index i = 1; i < a.rows(); ++i) a(i, i) += kRidge * n;
  const Eigen::LDLT<Eigen::MatrixXd> ldlt(a);
  Solve s;
  s.beta = ldlt.solve(xty);
  // RSS from the normal equations: y'y - 2 b'X'y + b'X'X b.
  s.rss = std::max(0.0, yty - 2.0 * s.beta.dot(xty) + s.beta.dot(xtx * s.beta));
  const double edf = ldlt.solve(xtx).trace();
  const double denom = n - edf;
  s.gcv = denom > 0.0 ? n * s.rss / (denom * denom) : std::numeric_limits<double>::infinity();
  return s;
}

}  // namespace

std::optional<DelayEstimate> estimate_delay_xcorr(std::span<const double> a_leader,
                                                  std::span<const double> a_follower,
                                                  const XcorrOptions& options) {
  if (a_follower.size() < a_leader.size() || a_leader.size() < 3) return std::nullopt;
  for (double v : a_leader) if (!std::isfinite(v)) return std::nullopt;
  for (double v : a_follower) if (!std::isfinite(v)) return std::nullopt;
  if (variance(a_leader) < options.min_variance ||
      variance(a_follower.subspan(0, a_leader.size())) < options.min_variance) {
    return std::nullopt;
  }
  const int max_lag = std::min(static_cast<int>(std::lround(options.max_lag / options.dt)),
                               static_cast<int>(a_follower.size()) - 3);
  std::optional<DelayEstimate> best;
  for (int k = 0; k <= max_lag; ++k) {
    const auto lag = static_cast<std::size_t>(k);
    const std::size_t overlap = std::min(a_leader.size(), a_follower.size() - lag);
    const double r = pearson(a_leader.subspan(0, overlap), a_follower.subspan(lag, overlap),
                             options.min_variance);
    if (!std::isfinite(r)) continue;
    if (!best || r > best->correlation) best = DelayEstimate{k, k * options.dt, r};
  }
  return best;
}

Eigen::VectorXd SmoothTerm::basis(double x) const {
  return bspline(x, lo, hi, static_cast<int>(column_means.size())) - column_means;
}

double DelayModel::predict_raw(const DelayObservation& o) const {
  double y = intercept;
  for (std::size_t k = 0; k < terms.size(); ++k) {
    if (terms[k].active()) y += terms[k].basis(term_input(o, k)).dot(terms[k].coef);
  }
  for (std::size_t i = 1; i < lane_levels.size(); ++i) {
    if (lane_levels[i] == o.lane) y += lane_coef(static_cast<Eigen::Index>(i - 1));
  }
  for (std::size_t i = 1; i < type_levels.size(); ++i) {
    if (type_levels[i] == o.follower_type) y += type_coef(static_cast<Eigen::Index>(i - 1));
  }
  return y;
}

double DelayModel::predict(const DelayObservation& o) const {
  return std::clamp(predict_raw(o), 0.0, kMaxTau);
}

DelayModel fit_delay_model(std::span<const DelayObservation> records,
                           const DelayRefineOptions& options) {
  std::vector<DelayObservation> rows;
  for (const auto& r : records) {
    if (r.tau_raw && std::isfinite(*r.tau_raw)) rows.push_back(r);
  }
  if (rows.size() < options.min_observations) {
    throw FitError("delay model needs at least " + std::to_string(options.min_observations) +
                   " observations, got " + std::to_string(rows.size()));
  }
  constexpr int K = DelayModel::kBasisSize;
  DelayModel model;
  model.n_obs = rows.size();
  model.lane_levels = levels_of(rows, &DelayObservation::lane);
  model.type_levels = levels_of(rows, &DelayObservation::follower_type);

  Layout layout;
  for (std::size_t k = 0; k < 4; ++k) {
    auto& term = model.terms[k];
    term.lo = term.hi = term_input(rows.front(), k);
    for (const auto& r : rows) {
      term.lo = std::min(term.lo, term_input(r, k));
      term.hi = std::max(term.hi, term_input(r, k));
    }
    layout.term_active[k] = term.hi - term.lo > 1e-9 * (1.0 + std::abs(term.hi));
    if (layout.term_active[k]) {
      layout.term_offset[k] = layout.width;
      layout.width += K;
    }
  }
  layout.lane_offset = layout.width;
  layout.width += static_cast<Eigen::Index>(model.lane_levels.size()) - 1;
  layout.type_offset = layout.width;
  layout.width += static_cast<Eigen::Index>(model.type_levels.size()) - 1;

  const auto n = static_cast<Eigen::Index>(rows.size());
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(n, layout.width);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& r = rows[static_cast<std::size_t>(i)];
    x(i, 0) = 1.0;
    y(i) = *r.tau_raw;
    for (std::size_t k = 0; k < 4; ++k) {
      if (!layout.term_active[k]) continue;
      const auto& t = model.terms[k];
      x.block(i, layout.term_offset[k], 1, K) = bspline(term_input(r, k), t.lo, t.hi, K).transpose();
    }
    for (std::size_t l = 1; l < model.lane_levels.size(); ++l) {
      if (model.lane_levels[l] == r.lane) x(i, layout.lane_offset + static_cast<Eigen::Index>(l) - 1) = 1.0;
    }
    for (std::size_t l = 1; l < model.type_levels.size(); ++l) {
      if (model.type_levels[l] == r.follower_type) {
        x(i, layout.type_offset + static_cast<Eigen::Index>(l) - 1) = 1.0;
      }
    }
  }
  // Center each spline block so the intercept carries the mean.
  for (std::size_t k = 0; k < 4; ++k) {
    if (!layout.term_active[k]) continue;
    auto block = x.middleCols(layout.term_offset[k], K);
    model.terms[k].column_means = block.colwise().mean().transpose();
    block.rowwise() -= model.terms[k].column_means.transpose();
  }

  const Eigen::MatrixXd xtx = x.transpose() * x;
  const Eigen::VectorXd xty = x.transpose() * y;
  const double yty = y.squaredNorm();
  const Eigen::MatrixXd penalty = second_difference_penalty(K);
  const double nd = static_cast<double>(n);

  // Coordinate search over a log grid of smoothing parameters.
  std::vector<double> grid;
  for (int e = -8; e <= 16; ++e) grid.push_back(std::pow(10.0, e / 2.0));
  std::array<double, 4> lambdas{1.0, 1.0, 1.0, 1.0};
  Solve best = penalized_solve(xtx, xty, yty, layout, penalty, lambdas, nd);
  for (int sweep = 0; sweep < 3; ++sweep) {
    bool changed = false;
    for (std::size_t k = 0; k < 4; ++k) {
      if (!layout.term_active[k]) continue;
      for (double lam : grid) {
        auto trial = lambdas;
        trial[k] = lam;
        Solve s = penalized_solve(xtx, xty, yty, layout, penalty, trial, nd);
        if (s.gcv < best.gcv * (1.0 - 1e-12)) {
          best = std::move(s);
          lambdas = trial;
          changed = true;
        }
      }
    }
    if (!changed) break;
  }

  model.intercept = best.beta(0);
  for (std::size_t k = 0; k < 4; ++k) {
    model.terms[k].lambda = lambdas[k];
    if (layout.term_active[k]) {
      model.terms[k].coef = best.beta.segment(layout.term_offset[k], K);
    } else {
      model.terms[k].column_means.resize(0);
    }
  }
  model.lane_coef = best.beta.segment(layout.lane_offset, static_cast<Eigen::Index>(model.lane_levels.size()) - 1);
  model.type_coef = best.beta.segment(layout.type_offset, static_cast<Eigen::Index>(model.type_levels.size()) - 1);

  double tss = 0.0, rss = 0.0;
  const double mean = y.mean();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const double r = y(static_cast<Eigen::Index>(i)) - model.predict_raw(rows[i]);
    rss += r * r;
    tss += (y(static_cast<Eigen::Index>(i)) - mean) * (y(static_cast<Eigen::Index>(i)) - mean);
  }
  model.pseudo_r2 = tss > 0.0 ? 1.0 - rss / tss : 1.0;
  return model;
}

DelayRefinement apply_delay_model(std::span<const DelayObservation> records, const DelayModel& model,
                                  const DelayRefineOptions& options) {
  DelayRefinement out;
  out.replaced.assign(records.size(), false);
  std::vector<double> resid;
  for (const auto& r : records) {
    const bool have = r.tau_raw && std::isfinite(*r.tau_raw);
    out.tau.push_back(have ? r.tau_raw : std::nullopt);
    if (have) resid.push_back(*r.tau_raw - model.predict_raw(r));
  }
  double mad = std::numeric_limits<double>::infinity();
  if (!resid.empty()) {
    const double med = median(resid);
    std::vector<double> dev;
    for (double r : resid) dev.push_back(std::abs(r - med));
    mad = median(dev);
  }
  for (std::size_t i = 0; i < records.size(); ++i) {
    const bool missing = !out.tau[i];
    const bool outlier = !missing && std::abs(*out.tau[i] - model.predict_raw(records[i])) >
                                         std::max(options.outlier_mads * mad, options.outlier_floor);
    if (missing || outlier) {
      out.tau[i] = model.predict(records[i]);
      out.replaced[i] = true;
    }
  }
  out.model = model;
  return out;
}

DelayRefinement refine_delay(std::span<const DelayObservation> records,
                             const DelayRefineOptions& options) {
  std::size_t have = 0;
  for (const auto& r : records) have += r.tau_raw && std::isfinite(*r.tau_raw);
  if (have < options.min_observations) {
    DelayRefinement out;
    out.replaced.assign(records.size(), false);
    for (const auto& r : records) {
      out.tau.push_back(r.tau_raw && std::isfinite(*r.tau_raw) ? r.tau_raw : std::nullopt);
    }
    out.warning = "delay refinement skipped: " + std::to_string(have) + " raw delays, need " +
                  std::to_string(options.min_observations);
    return out;
  }
  // Refit once without the first-pass outliers so they do not bend the model
  // that is meant to replace them.
  const DelayRefinement first = apply_delay_model(records, fit_delay_model(records, options), options);
  std::vector<DelayObservation> inliers(records.begin(), records.end());
  std::size_t kept = 0;
  for (std::size_t i = 0; i < inliers.size(); ++i) {
    if (first.replaced[i]) inliers[i].tau_raw.reset();
    kept += inliers[i].tau_raw.has_value();
  }
  if (kept == have || kept < options.min_observations) return first;
  return apply_delay_model(records, fit_delay_model(inliers, options), options);
}

}  // namespace avpareto::metrics
