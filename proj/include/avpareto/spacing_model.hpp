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

// Context-conditioned lognormal spacing model and the surrogate risk score
// derived from its survival function.

#ifndef AVPARETO_SPACING_MODEL_HPP
#define AVPARETO_SPACING_MODEL_HPP

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "avpareto/common.hpp"

namespace avpareto::metrics {

enum class LaneContext { same, adjacent, crossing, other };
std::string_view to_string(LaneContext c);
LaneContext parse_lane_context(std::string_view text);

/// Interaction descriptor X. `s` is carried for bookkeeping but is never an
/// input of the regressor, which predicts the distribution of s itself.
struct InteractionFeatures {
  double s = 0.0;
  double rho = 0.0;  // degrees
  double rel_speed = 0.0;
  double ego_speed = 0.0;
  AgentType agent_type = AgentType::other;
  LaneContext lane_context = LaneContext::other;
  std::string dataset_context;
};

struct LognormalParams {
  double mu = 0.0;     // mean of ln s
  double sigma = 1.0;  // std of ln s
};

/// Maps X to a standardized numeric vector: ego speed, relative speed,
/// cos/sin of the bearing, then one-hot agent type, lane context and dataset.
struct FeatureEncoder {
  Eigen::Vector4d mean = Eigen::Vector4d::Zero();
  Eigen::Vector4d scale = Eigen::Vector4d::Ones();
  std::vector<std::string> datasets;

  static FeatureEncoder fit(std::span<const InteractionFeatures> xs);
  Eigen::Index dimension() const;
  Eigen::VectorXd encode(const InteractionFeatures& x) const;
};

enum class RegressorKind { mlp, linear };

/// Two hidden tanh layers plus a linear skip from the input; output
/// (mu, softplus -> sigma).
struct MlpWeights {
  Eigen::MatrixXd w1, w2, w3, skip;
  Eigen::VectorXd b1, b2, b3;
  double sigma_scale = 1.0;  // ln-spacing std of the training targets
};

/// mu = w_mu . [1, phi], ln sigma = w_ls . [1, phi]
struct LinearWeights {
  Eigen::VectorXd w_mu;
  Eigen::VectorXd w_log_sigma;
};

struct SpacingFitOptions {
  RegressorKind kind = RegressorKind::mlp;
  int hidden = 32;
  int epochs = 60;
  int batch_size = 256;
  double learning_rate = 0.005;
  double weight_decay = 1.0;
  double holdout_fraction = 0.2;
  int residual_bins = 5;
  std::size_t min_pairs = 500;
  std::uint64_t seed = 7;
};

struct SpacingSample {
  InteractionFeatures x;
  double spacing = 0.0;
};

struct SpacingModel {
  RegressorKind kind = RegressorKind::linear;
  FeatureEncoder encoder;
  LinearWeights linear;
  MlpWeights mlp;
  /// Upper edges of the predicted-sigma bins (last bin is open) and the
  /// multiplicative sigma correction for each bin.
  std::vector<double> bin_edges;
  std::vector<double> bin_multipliers;
  double mae = 0.0;  // held-out, meters, median prediction exp(mu)
  std::size_t n_train = 0;
  std::size_t n_holdout = 0;

  /// Raw regressor output before the residual correction.
  LognormalParams predict_raw(const InteractionFeatures& x) const;
  LognormalParams predict(const InteractionFeatures& x) const;
  /// P(S > s_star | X) under the corrected lognormal.
  double survival(double s_star, const InteractionFeatures& x) const;
};

/// Fit by minimum lognormal negative log-likelihood on 80% of the samples;
/// the held-out remainder calibrates the sigma correction and the MAE.
/// Throws FitError below `min_pairs`, on non-positive spacings or when every
/// spacing is identical.
SpacingModel fit_spacing_model(std::span<const SpacingSample> samples,
                               const SpacingFitOptions& options = {});

/// Survival probability of a lognormal at s_star.
double lognormal_survival(double s_star, const LognormalParams& p);

struct RiskScore {
  double value = 0.0;
  bool clamped = false;  // survival probability was clamped away from 0 or 1
};

/// M = log10(ln 0.5 / ln P). Positive when the observed spacing is tighter
/// than the conditional median.
RiskScore risk_from_survival(double survival_probability);
RiskScore risk_score(double s_star, const InteractionFeatures& x, const SpacingModel& model);

}  // namespace avpareto::metrics

#endif  // AVPARETO_SPACING_MODEL_HPP
