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

// Peaks-over-threshold tail of the risk score: generalized Pareto fit and
// exceedance probabilities.

#ifndef AVPARETO_TAIL_HPP
#define AVPARETO_TAIL_HPP

#include <cstddef>
#include <optional>
#include <span>
#include <string>

namespace avpareto::metrics {

struct GpdParams {
  double xi = 0.0;    // shape
  double beta = 1.0;  // scale
};

struct TailModel {
  double u = 1.85;  // threshold
  double xi = 0.0;
  double beta = 1.0;
  std::size_t n_exceedances = 0;
  double percentile = 97.0;
};

struct TailFitOptions {
  double percentile = 97.0;
  std::size_t min_exceedances = 50;
  double xi_min = -0.5;
  double xi_max = 1.0;
};

struct TailFitResult {
  std::optional<TailModel> model;  // empty when the tail is disabled
  double u = 0.0;
  std::size_t n_exceedances = 0;
  std::string warning;
};

/// Negative log-likelihood of GPD exceedances y > 0.
double gpd_negative_log_likelihood(std::span<const double> exceedances, const GpdParams& p);

/// Maximum likelihood on positive exceedances with shape bounded to
/// [xi_min, xi_max]. Uses the profile likelihood in theta = xi / beta, for
/// which the shape estimate is mean(ln(1 + theta y)).
GpdParams fit_gpd(std::span<const double> exceedances, double xi_min = -0.5, double xi_max = 1.0);

/// Threshold at the empirical percentile, then fit_gpd on M - u for M > u.
/// Fewer than `min_exceedances` disables the tail with a warning.
TailFitResult fit_gpd_tail(std::span<const double> values, const TailFitOptions& options = {});

/// P(M' > m) for m >= u; exponential limit at xi == 0, zero past the finite
/// endpoint when xi < 0. Throws DomainError for m < u.
double tail_exceedance_prob(double m, const TailModel& tail);

}  // namespace avpareto::metrics

#endif  // AVPARETO_TAIL_HPP
