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

// Follower response delay: cross-correlation estimate and an additive
// smoothing model that fills and de-noises the raw estimates.

#ifndef AVPARETO_DELAY_HPP
#define AVPARETO_DELAY_HPP

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "avpareto/common.hpp"

namespace avpareto::metrics {

struct XcorrOptions {
  double dt = kDefaultDt;
  double max_lag = 3.0;       // seconds
  double min_variance = 1e-8;  // per series, (m/s^2)^2
};

struct DelayEstimate {
  int lag = 0;        // samples
  double tau = 0.0;   // seconds
  double correlation = 0.0;
};

/// Lag in [0, max_lag] maximizing the Pearson correlation of follower[i + k]
/// against leader[i]. Both series start at the same time; the follower may
/// extend past the leader window so every lag sees the full window, otherwise
/// the overlap shrinks with the lag. Ties go to the smaller lag. Empty when
/// either series is (near) constant over the window or the follower is
/// shorter than the leader.
std::optional<DelayEstimate> estimate_delay_xcorr(std::span<const double> a_leader,
                                                  std::span<const double> a_follower,
                                                  const XcorrOptions& options = {});

struct DelayObservation {
  double v_leader = 0.0;
  double v_follower = 0.0;
  double distance = 0.0;
  double a_leader = 0.0;
  std::string lane;
  std::string follower_type;
  std::optional<double> tau_raw;
};

/// Penalized cubic B-spline term over one continuous input.
struct SmoothTerm {
  double lo = 0.0;
  double hi = 0.0;
  double lambda = 1.0;
  Eigen::VectorXd column_means;
  Eigen::VectorXd coef;

  bool active() const { return coef.size() > 0; }
  Eigen::VectorXd basis(double x) const;  // centered
};

struct DelayModel {
  static constexpr int kBasisSize = 10;
  static constexpr double kMaxTau = 3.0;

  double intercept = 0.0;
  std::array<SmoothTerm, 4> terms;  // v_leader, v_follower, distance, a_leader
  std::vector<std::string> lane_levels;  // first level is the baseline
  Eigen::VectorXd lane_coef;
  std::vector<std::string> type_levels;
  Eigen::VectorXd type_coef;
  double pseudo_r2 = 0.0;
  std::size_t n_obs = 0;

  /// Unclamped additive prediction.
  double predict_raw(const DelayObservation& o) const;
  /// Prediction clamped to [0, kMaxTau].
  double predict(const DelayObservation& o) const;
};

struct DelayRefineOptions {
  std::size_t min_observations = 200;
  double outlier_mads = 3.0;
  /// Residuals below this never count as outliers (s); raw delays are
  /// quantized to the sampling interval, so a near-zero MAD is common.
  double outlier_floor = kDefaultDt;
};

struct DelayRefinement {
  std::optional<DelayModel> model;  // empty when refinement was skipped
  std::vector<std::optional<double>> tau;  // one per input record
  std::vector<bool> replaced;
  std::string warning;
};

/// Fit the additive model on records with a raw delay; smoothing parameters
/// per term by generalized cross-validation. Throws FitError below
/// `min_observations`.
DelayModel fit_delay_model(std::span<const DelayObservation> records,
                           const DelayRefineOptions& options = {});

/// Replace missing raw delays, and raw delays further than `outlier_mads`
/// median absolute deviations of the residuals from the model, by the
/// clamped model prediction.
DelayRefinement apply_delay_model(std::span<const DelayObservation> records, const DelayModel& model,
                                  const DelayRefineOptions& options = {});

/// Fit, flag outliers, refit on the inliers, then apply_delay_model. Falls
/// back to the raw delays, with a warning, when there is too little data.
DelayRefinement refine_delay(std::span<const DelayObservation> records,
                             const DelayRefineOptions& options = {});

}  // namespace avpareto::metrics

#endif  // AVPARETO_DELAY_HPP
