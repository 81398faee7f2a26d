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

#include "avpareto/tail.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "avpareto/common.hpp"

namespace avpareto::metrics {

namespace {

constexpr double kXiZero = 1e-12;
constexpr double kInf = std::numeric_limits<double>::infinity();

struct Profile {
  std::span<const double> y;
  double mean = 0.0;
  double max = 0.0;

  // Shape estimate for a given theta = xi / beta.
  double xi(double theta) const {
    double acc = 0.0;
    for (double v : y) acc += std::log1p(theta * v);
    return acc / static_cast<double>(y.size());
  }

  // Profile log-likelihood, up to the common factor n.
  double loglik(double theta) const {
    if (std::abs(theta) * max < 1e-10) return -std::log(mean) - 1.0;
    const double x = xi(theta);
    const double beta = x / theta;
    if (!(beta > 0.0) || !std::isfinite(beta)) return -kInf;
    return -std::log(beta) - x - 1.0;
  }

  GpdParams params(double theta) const {
    if (std::abs(theta) * max < 1e-10) return {0.0, mean};
    const double x = xi(theta);
    return {x, x / theta};
  }
};

// xi(theta) is increasing; find theta with xi(theta) == target on (lo, hi).
double solve_theta(const Profile& p, double target, double lo, double hi) {
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (p.xi(mid) < target) lo = mid; else hi = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

double gpd_negative_log_likelihood(std::span<const double> exceedances, const GpdParams& p) {
  if (!(p.beta > 0.0)) return kInf;
  const double n = static_cast<double>(exceedances.size());
  double acc = 0.0;
  if (std::abs(p.xi) < kXiZero) {
    for (double y : exceedances) acc += y;
    return n * std::log(p.beta) + acc / p.beta;
  }
  for (double y : exceedances) {
    const double t = p.xi * y / p.beta;
    if (!(t > -1.0)) return kInf;
    acc += std::log1p(t);
  }
  return n * std::log(p.beta) + (1.0 + 1.0 / p.xi) * acc;
}

GpdParams fit_gpd(std::span<const double> exceedances, double xi_min, double xi_max) {
  if (exceedances.size() < 2) throw FitError("GPD fit needs at least two exceedances");
  if (!(xi_min < 0.0) || !(xi_max > 0.0)) throw ConfigError("GPD shape bounds must bracket 0");
  Profile p{exceedances};
  for (double y : exceedances) {
    if (!(y > 0.0) || !std::isfinite(y)) throw FitError("GPD exceedances must be positive");
    p.mean += y;
    p.max = std::max(p.max, y);
  }
  p.mean /= static_cast<double>(exceedances.size());

  // Bracket theta so that the implied shape stays inside [xi_min, xi_max].
  const double theta_floor = -1.0 / p.max;
  const double theta_lo = solve_theta(p, xi_min, theta_floor * (1.0 - 1e-12), 0.0);
  double hi = 1.0 / p.mean;
  while (p.xi(hi) < xi_max) hi *= 2.0;
  const double theta_hi = solve_theta(p, xi_max, 0.0, hi);

  // Candidates: a uniform grid, zero, and the moment estimate.
  std::vector<double> starts;
  const int grid = 400;
  for (int i = 0; i <= grid; ++i) {
    starts.push_back(theta_lo + (theta_hi - theta_lo) * static_cast<double>(i) / grid);
  }
  starts.push_back(0.0);
  double var = 0.0;
  for (double y : exceedances) var += (y - p.mean) * (y - p.mean);
  var /= static_cast<double>(exceedances.size() - 1);
  if (var > 0.0) {
    const double xi_mom = 0.5 * (1.0 - p.mean * p.mean / var);
    const double beta_mom = 0.5 * p.mean * (p.mean * p.mean / var + 1.0);
    starts.push_back(std::clamp(xi_mom / beta_mom, theta_lo, theta_hi));
  }
  std::sort(starts.begin(), starts.end());

  std::size_t best = 0;
  double best_ll = -kInf;
  for (std::size_t i = 0; i < starts.size(); ++i) {
    const double ll = p.loglik(starts[i]);
    if (ll > best_ll) {
      best_ll = ll;
      best = i;
    }
  }

  // Golden-section refinement between the neighbours of the best candidate.
  double a = starts[best == 0 ? 0 : best - 1];
  double b = starts[std::min(best + 1, starts.size() - 1)];
  const double g = 0.5 * (std::sqrt(5.0) - 1.0);
  double c = b - g * (b - a), d = a + g * (b - a);
  double fc = p.loglik(c), fd = p.loglik(d);
  for (int i = 0; i < 100 && b - a > 1e-14 * (1.0 + std::abs(a)); ++i) {
    if (fc > fd) {
      b = d; d = c; fd = fc;
      c = b - g * (b - a); fc = p.loglik(c);
    } else {
      a = c; c = d; fc = fd;
      d = a + g * (b - a); fd = p.loglik(d);
    }
  }
  double theta = 0.5 * (a + b);
  if (p.loglik(theta) < best_ll) theta = starts[best];
  GpdParams out = p.params(theta);
  out.xi = std::clamp(out.xi, xi_min, xi_max);
  return out;
}

TailFitResult fit_gpd_tail(std::span<const double> values, const TailFitOptions& options) {
  if (!(options.percentile > 0.0 && options.percentile < 100.0)) {
    throw ConfigError("GPD percentile must be in (0, 100)");
  }
  std::vector<double> finite;
  for (double v : values) if (std::isfinite(v)) finite.push_back(v);
  TailFitResult result;
  if (finite.empty()) {
    result.warning = "tail disabled: no finite risk scores";
    return result;
  }
  result.u = quantile(finite, options.percentile / 100.0);
  std::vector<double> exceedances;
  for (double v : finite) if (v > result.u) exceedances.push_back(v - result.u);
  result.n_exceedances = exceedances.size();
  if (exceedances.size() < options.min_exceedances) {
    result.warning = "tail disabled: " + std::to_string(exceedances.size()) +
                     " exceedances above u, need " + std::to_string(options.min_exceedances);
    return result;
  }
  const GpdParams p = fit_gpd(exceedances, options.xi_min, options.xi_max);
  result.model = TailModel{result.u, p.xi, p.beta, exceedances.size(), options.percentile};
  return result;
}

double tail_exceedance_prob(double m, const TailModel& tail) {
  if (!(m >= tail.u)) throw DomainError("tail probability needs M >= u");
  const double y = m - tail.u;
  double p;
  if (std::abs(tail.xi) < kXiZero) {
    p = std::exp(-y / tail.beta);
  } else {
    const double t = tail.xi * y / tail.beta;
    if (!(t > -1.0)) return 0.0;
    p = std::exp(-std::log1p(t) / tail.xi);
  }
  return std::clamp(p, 0.0, 1.0);
}

}  // namespace avpareto::metrics
