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

#include "avpareto/spacing_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>

namespace avpareto::metrics {

namespace {

constexpr double kMinSigma = 1e-4;
// E[ln chi^2_1] = digamma(1/2) + ln 2.
constexpr double kLogChiSquareMean = -1.2703628454614782;
constexpr double kSurvivalFloor = 1e-12;
constexpr double kBinPrior = 100.0;

double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }
double softplus_inverse(double y) { return y > 30.0 ? y : std::log(std::expm1(y)); }
double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

Eigen::VectorXd with_intercept(const Eigen::VectorXd& phi) {
  Eigen::VectorXd out(phi.size() + 1);
  out(0) = 1.0;
  out.tail(phi.size()) = phi;
  return out;
}

// Ridge-stabilized least squares with an unpenalized intercept column 0.
Eigen::VectorXd least_squares(const Eigen::MatrixXd& design, const Eigen::VectorXd& target) {
  Eigen::MatrixXd gram = design.transpose() * design;
  const double ridge = 1e-8 * static_cast<double>(design.rows());
  for (Eigen::Index i = 1; i < gram.rows(); ++i) gram(i, i) += ridge;
  return gram.ldlt().solve(design.transpose() * target);
}

LinearWeights fit_linear(const Eigen::MatrixXd& phi, const Eigen::VectorXd& y) {
  Eigen::MatrixXd design(phi.rows(), phi.cols() + 1);
  design.col(0).setOnes();
  design.rightCols(phi.cols()) = phi;
  LinearWeights w;
  w.w_mu = least_squares(design, y);
  Eigen::VectorXd resid = y - design * w.w_mu;
  Eigen::VectorXd log_sq(resid.size());
  for (Eigen::Index i = 0; i < resid.size(); ++i) {
    log_sq(i) = std::log(std::max(resid(i) * resid(i), 1e-12));
  }
  // Start: ln r^2 = 2 ln sigma + ln chi^2_1, shifted by the chi-square log-mean.
  w.w_log_sigma = 0.5 * least_squares(design, log_sq);
  w.w_log_sigma(0) -= 0.5 * kLogChiSquareMean;

  // Then alternate weighted least squares for mu with Fisher scoring for
  // ln sigma until the negative log-likelihood stops improving.
  Eigen::VectorXd eta = design * w.w_log_sigma;
  double prev = std::numeric_limits<double>::infinity();
  for (int iter = 0; iter < 100; ++iter) {
    const Eigen::VectorXd inv_var = (-2.0 * eta.array()).exp().matrix();
    Eigen::MatrixXd gram = design.transpose() * inv_var.asDiagonal() * design;
    for (Eigen::Index i = 1; i < gram.rows(); ++i) gram(i, i) += 1e-8 * static_cast<double>(design.rows());
    w.w_mu = gram.ldlt().solve(design.transpose() * inv_var.asDiagonal() * y);
    resid = y - design * w.w_mu;
    const Eigen::VectorXd working =
        eta + 0.5 * (resid.array().square() * inv_var.array() - 1.0).matrix();
    w.w_log_sigma = least_squares(design, working);
    eta = (design * w.w_log_sigma).cwiseMax(-20.0).cwiseMin(20.0);
    const double nll = eta.sum() + 0.5 * (resid.array().square() * (-2.0 * eta.array()).exp()).sum();
    if (prev - nll < 1e-10 * std::abs(nll)) break;
    prev = nll;
  }
  return w;
}

struct MlpTarget {
  double mean = 0.0;
  double scale = 1.0;
};

// Standardized-target network. Stored weights map encoded features to the
// standardized (mu, pre-softplus sigma) and are rescaled on output.
struct Mlp {
  MlpWeights w;
  MlpTarget target;
};

void mlp_forward(const MlpWeights& w, const Eigen::MatrixXd& x, Eigen::MatrixXd& h1,
                 Eigen::MatrixXd& h2, Eigen::MatrixXd& out) {
  h1 = ((w.w1 * x).colwise() + w.b1).array().tanh().matrix();
  h2 = ((w.w2 * h1).colwise() + w.b2).array().tanh().matrix();
  out = (w.w3 * h2 + w.skip * x).colwise() + w.b3;
}

struct Adam {
  double lr = 1e-3, beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  long step = 0;
  std::vector<Eigen::MatrixXd> m, v;

  void update(std::vector<Eigen::MatrixXd*>& params, const std::vector<Eigen::MatrixXd>& grads) {
    if (m.empty()) {
      for (auto* p : params) {
        m.push_back(Eigen::MatrixXd::Zero(p->rows(), p->cols()));
        v.push_back(Eigen::MatrixXd::Zero(p->rows(), p->cols()));
      }
    }
    ++step;
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
    for (std::size_t i = 0; i < params.size(); ++i) {
      m[i] = beta1 * m[i] + (1.0 - beta1) * grads[i];
      v[i] = beta2 * v[i] + (1.0 - beta2) * grads[i].cwiseProduct(grads[i]);
      *params[i] -= (lr * (m[i] / c1).array() / ((v[i] / c2).array().sqrt() + eps)).matrix();
    }
  }
};

Mlp fit_mlp(const Eigen::MatrixXd& phi, const Eigen::VectorXd& y, const SpacingFitOptions& opt) {
  const Eigen::Index n = phi.rows();
  const Eigen::Index d = phi.cols();
  const Eigen::Index h = opt.hidden;
  Mlp net;
  net.target.mean = y.mean();
  net.target.scale = std::sqrt((y.array() - net.target.mean).square().mean());
  const Eigen::VectorXd ys = (y.array() - net.target.mean) / net.target.scale;

  std::mt19937_64 rng(opt.seed);
  auto glorot = [&rng](Eigen::Index rows, Eigen::Index cols) {
    const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
    std::uniform_real_distribution<double> u(-limit, limit);
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index c = 0; c < cols; ++c)
      for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = u(rng);
    return m;
  };
  MlpWeights& w = net.w;
  w.w1 = glorot(h, d);
  w.w2 = glorot(h, h);
  w.w3 = 0.1 * glorot(2, h);
  w.skip = Eigen::MatrixXd::Zero(2, d);
  w.b1 = Eigen::VectorXd::Zero(h);
  w.b2 = Eigen::VectorXd::Zero(h);
  w.b3 = Eigen::VectorXd::Zero(2);
  w.b3(1) = softplus_inverse(1.0);

  // Eigen vectors are matrices with one column; the optimizer works on both.
  Eigen::MatrixXd b1 = w.b1, b2 = w.b2, b3 = w.b3;
  std::vector<Eigen::MatrixXd*> params{&w.w1, &b1, &w.w2, &b2, &w.w3, &b3, &w.skip};
  Adam adam;
  adam.lr = opt.learning_rate;

  const Eigen::MatrixXd xt = phi.transpose();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  const Eigen::Index batch = std::max<Eigen::Index>(1, std::min<Eigen::Index>(opt.batch_size, n));
  Eigen::MatrixXd h1, h2, out;
  for (int epoch = 0; epoch < opt.epochs; ++epoch) {
    // Cosine decay to a small floor so the last epochs settle.
    const double progress = static_cast<double>(epoch) / std::max(1, opt.epochs - 1);
    adam.lr = opt.learning_rate * (0.02 + 0.98 * 0.5 * (1.0 + std::cos(std::numbers::pi * progress)));
    std::shuffle(order.begin(), order.end(), rng);
    for (Eigen::Index start = 0; start < n; start += batch) {
      const Eigen::Index m = std::min(batch, n - start);
      Eigen::MatrixXd xb(d, m);
      Eigen::VectorXd yb(m);
      for (Eigen::Index j = 0; j < m; ++j) {
        xb.col(j) = xt.col(order[static_cast<std::size_t>(start + j)]);
        yb(j) = ys(order[static_cast<std::size_t>(start + j)]);
      }
      w.b1 = b1;
      w.b2 = b2;
      w.b3 = b3;
      mlp_forward(w, xb, h1, h2, out);
      // Per-sample loss ln sigma + (y - mu)^2 / (2 sigma^2).
      Eigen::MatrixXd dout(2, m);
      for (Eigen::Index j = 0; j < m; ++j) {
        const double mu = out(0, j);
        const double sigma = softplus(out(1, j)) + kMinSigma;
        const double r = yb(j) - mu;
        dout(0, j) = -r / (sigma * sigma);
        dout(1, j) = (1.0 / sigma - r * r / (sigma * sigma * sigma)) * sigmoid(out(1, j));
      }
      dout /= static_cast<double>(m);
      const Eigen::MatrixXd g_w3 = dout * h2.transpose();
      const Eigen::MatrixXd g_skip = dout * xb.transpose();
      const Eigen::MatrixXd g_b3 = dout.rowwise().sum();
      const Eigen::MatrixXd d2 = ((w.w3.transpose() * dout).array() * (1.0 - h2.array().square())).matrix();
      const Eigen::MatrixXd g_w2 = d2 * h1.transpose();
      const Eigen::MatrixXd g_b2 = d2.rowwise().sum();
      const Eigen::MatrixXd d1 = ((w.w2.transpose() * d2).array() * (1.0 - h1.array().square())).matrix();
      const Eigen::MatrixXd g_w1 = d1 * xb.transpose();
      const Eigen::MatrixXd g_b1 = d1.rowwise().sum();
      adam.update(params, {g_w1, g_b1, g_w2, g_b2, g_w3, g_b3, g_skip});
      // Decoupled weight decay on the hidden-path matrices only.
      const double shrink = 1.0 - adam.lr * opt.weight_decay;
      w.w1 *= shrink;
      w.w2 *= shrink;
      w.w3 *= shrink;
    }
  }
  w.b1 = b1;
  w.b2 = b2;
  w.b3 = b3;
  // Fold the target standardization into the mu row; the sigma row stays in
  // standardized units and is rescaled by sigma_scale on prediction.
  w.w3.row(0) *= net.target.scale;
  w.skip.row(0) *= net.target.scale;
  w.b3(0) = w.b3(0) * net.target.scale + net.target.mean;
  return net;
}

}  // namespace

std::string_view to_string(LaneContext c) {
  switch (c) {
    case LaneContext::same: return "same";
    case LaneContext::adjacent: return "adjacent";
    case LaneContext::crossing: return "crossing";
    case LaneContext::other: break;
  }
  return "other";
}

LaneContext parse_lane_context(std::string_view text) {
  if (text == "same") return LaneContext::same;
  if (text == "adjacent") return LaneContext::adjacent;
  if (text == "crossing") return LaneContext::crossing;
  return LaneContext::other;
}

FeatureEncoder FeatureEncoder::fit(std::span<const InteractionFeatures> xs) {
  FeatureEncoder enc;
  if (xs.empty()) return enc;
  Eigen::Vector4d sum = Eigen::Vector4d::Zero(), sq = Eigen::Vector4d::Zero();
  for (const auto& x : xs) {
    const double r = x.rho * std::numbers::pi / 180.0;
    Eigen::Vector4d v(x.ego_speed, x.rel_speed, std::cos(r), std::sin(r));
    sum += v;
    sq += v.cwiseProduct(v);
    if (std::find(enc.datasets.begin(), enc.datasets.end(), x.dataset_context) == enc.datasets.end()) {
      enc.datasets.push_back(x.dataset_context);
    }
  }
  std::sort(enc.datasets.begin(), enc.datasets.end());
  const double n = static_cast<double>(xs.size());
  enc.mean = sum / n;
  for (int i = 0; i < 4; ++i) {
    const double var = sq(i) / n - enc.mean(i) * enc.mean(i);
    enc.scale(i) = var > 1e-12 ? std::sqrt(var) : 1.0;
  }
  // A single dataset carries no information; drop it from the encoding.
  if (enc.datasets.size() == 1) enc.datasets.clear();
  return enc;
}

Eigen::Index FeatureEncoder::dimension() const {
  return 4 + kAgentTypeCount + 4 + static_cast<Eigen::Index>(datasets.size());
}

Eigen::VectorXd FeatureEncoder::encode(const InteractionFeatures& x) const {
  Eigen::VectorXd phi = Eigen::VectorXd::Zero(dimension());
  const double r = x.rho * std::numbers::pi / 180.0;
  Eigen::Vector4d v(x.ego_speed, x.rel_speed, std::cos(r), std::sin(r));
  phi.head<4>() = (v - mean).cwiseQuotient(scale);
  phi(4 + static_cast<Eigen::Index>(x.agent_type)) = 1.0;
  phi(4 + kAgentTypeCount + static_cast<Eigen::Index>(x.lane_context)) = 1.0;
  const auto it = std::find(datasets.begin(), datasets.end(), x.dataset_context);
  if (it != datasets.end()) phi(4 + kAgentTypeCount + 4 + (it - datasets.begin())) = 1.0;
  return phi;
}

LognormalParams SpacingModel::predict_raw(const InteractionFeatures& x) const {
  const Eigen::VectorXd phi = encoder.encode(x);
  LognormalParams p;
  if (kind == RegressorKind::linear) {
    const Eigen::VectorXd z = with_intercept(phi);
    p.mu = linear.w_mu.dot(z);
    p.sigma = std::exp(std::clamp(linear.w_log_sigma.dot(z), -20.0, 20.0));
  } else {
    Eigen::MatrixXd h1, h2, out;
    mlp_forward(mlp, phi, h1, h2, out);
    p.mu = out(0, 0);
    p.sigma = (softplus(out(1, 0)) + kMinSigma) * mlp.sigma_scale;
  }
  p.sigma = std::max(p.sigma, kMinSigma);
  return p;
}

LognormalParams SpacingModel::predict(const InteractionFeatures& x) const {
  LognormalParams p = predict_raw(x);
  if (!bin_multipliers.empty()) {
    const auto bin = static_cast<std::size_t>(
        std::upper_bound(bin_edges.begin(), bin_edges.end(), p.sigma) - bin_edges.begin());
    p.sigma *= bin_multipliers[std::min(bin, bin_multipliers.size() - 1)];
  }
  return p;
}

double lognormal_survival(double s_star, const LognormalParams& p) {
  if (!(s_star > 0.0)) return 1.0;
  const double z = (std::log(s_star) - p.mu) / p.sigma;
  return 0.5 * std::erfc(z / std::numbers::sqrt2);
}

double SpacingModel::survival(double s_star, const InteractionFeatures& x) const {
  return lognormal_survival(s_star, predict(x));
}

SpacingModel fit_spacing_model(std::span<const SpacingSample> samples,
                               const SpacingFitOptions& options) {
  if (samples.size() < options.min_pairs) {
    throw FitError("spacing model needs at least " + std::to_string(options.min_pairs) +
                   " pairs, got " + std::to_string(samples.size()));
  }
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto& s : samples) {
    if (!(s.spacing > 0.0) || !std::isfinite(s.spacing)) {
      throw FitError("spacing model requires positive finite spacings");
    }
    lo = std::min(lo, s.spacing);
    hi = std::max(hi, s.spacing);
  }
  if (hi - lo <= 1e-12 * hi) throw FitError("degenerate spacing data: all spacings equal");

  // Deterministic train / held-out split.
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(options.seed ^ 0x5a17u);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_hold = static_cast<std::size_t>(
      std::floor(options.holdout_fraction * static_cast<double>(samples.size())));
  const std::size_t n_train = samples.size() - n_hold;

  std::vector<InteractionFeatures> train_x;
  train_x.reserve(n_train);
  for (std::size_t i = 0; i < n_train; ++i) train_x.push_back(samples[order[i]].x);

  SpacingModel model;
  model.kind = options.kind;
  model.encoder = FeatureEncoder::fit(train_x);
  model.n_train = n_train;
  model.n_holdout = n_hold;

  Eigen::MatrixXd phi(static_cast<Eigen::Index>(n_train), model.encoder.dimension());
  Eigen::VectorXd y(static_cast<Eigen::Index>(n_train));
  for (std::size_t i = 0; i < n_train; ++i) {
    phi.row(static_cast<Eigen::Index>(i)) = model.encoder.encode(train_x[i]).transpose();
    y(static_cast<Eigen::Index>(i)) = std::log(samples[order[i]].spacing);
  }

  if (options.kind == RegressorKind::linear) {
    model.linear = fit_linear(phi, y);
  } else {
    Mlp net = fit_mlp(phi, y, options);
    model.mlp = std::move(net.w);
    model.mlp.sigma_scale = net.target.scale;
  }

  // Residual correction and MAE on the held-out part.
  std::vector<double> sig, z2;
  double abs_err = 0.0;
  for (std::size_t i = n_train; i < samples.size(); ++i) {
    const auto& smp = samples[order[i]];
    const LognormalParams p = model.predict_raw(smp.x);
    const double z = (std::log(smp.spacing) - p.mu) / p.sigma;
    sig.push_back(p.sigma);
    z2.push_back(z * z);
    abs_err += std::abs(std::exp(p.mu) - smp.spacing);
  }
  model.mae = n_hold ? abs_err / static_cast<double>(n_hold) : 0.0;

  const int bins = std::max(1, options.residual_bins);
  if (n_hold >= static_cast<std::size_t>(2 * bins)) {
    for (int b = 1; b < bins; ++b) model.bin_edges.push_back(quantile(sig, static_cast<double>(b) / bins));
    std::vector<double> acc(static_cast<std::size_t>(bins), 0.0);
    std::vector<std::size_t> cnt(static_cast<std::size_t>(bins), 0);
    for (std::size_t i = 0; i < sig.size(); ++i) {
      const auto bin = static_cast<std::size_t>(
          std::upper_bound(model.bin_edges.begin(), model.bin_edges.end(), sig[i]) - model.bin_edges.begin());
      acc[bin] += z2[i];
      ++cnt[bin];
    }
    for (int b = 0; b < bins; ++b) {
      const auto i = static_cast<std::size_t>(b);
      // Shrink toward 1 with a fixed number of pseudo-residuals so small
      // bins do not inject sampling noise into sigma.
      const double m = std::sqrt((acc[i] + kBinPrior) / (static_cast<double>(cnt[i]) + kBinPrior));
      model.bin_multipliers.push_back(std::clamp(m, 0.25, 4.0));
    }
  }
  return model;
}

RiskScore risk_from_survival(double p) {
  RiskScore r;
  if (!(p >= kSurvivalFloor)) {
    p = kSurvivalFloor;
    r.clamped = true;
  } else if (p > 1.0 - kSurvivalFloor) {
    p = 1.0 - kSurvivalFloor;
    r.clamped = true;
  }
  r.value = std::log10(std::log(0.5) / std::log(p));
  return r;
}

RiskScore risk_score(double s_star, const InteractionFeatures& x, const SpacingModel& model) {
  if (!(s_star > 0.0)) throw DomainError("risk score needs a positive spacing");
  return risk_from_survival(model.survival(s_star, x));
}

}  // namespace avpareto::metrics
