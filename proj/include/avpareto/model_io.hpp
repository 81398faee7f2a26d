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

// Versioned text serialization of fitted models.
//
// The file is a JSON object:
//   format   "avpareto-models"
//   version  1
//   spacing  null or {kind, encoder{mean[4], scale[4], datasets[]},
//            linear{w_mu[], w_log_sigma[]} or mlp{w1, b1, w2, b2, w3, b3, skip,
//            sigma_scale}, bin_edges[], bin_multipliers[], mae, n_train,
//            n_holdout}
//   tail     null or {u, xi, beta, n_exceedances, percentile}
//   delay    null or {intercept, terms[4]{lo, hi, lambda, column_means[],
//            coef[]}, lane_levels[], lane_coef[], type_levels[], type_coef[],
//            pseudo_r2, n_obs}
// Matrices are row-major arrays of rows. Doubles are written in shortest
// round-trip form, so a load reproduces every prediction bit for bit.

#ifndef AVPARETO_MODEL_IO_HPP
#define AVPARETO_MODEL_IO_HPP

#include <filesystem>
#include <string>
#include <string_view>

#include "avpareto/metrics.hpp"

namespace avpareto::metrics {

inline constexpr int kModelFormatVersion = 1;

std::string serialize_models(const ModelBundle& models);
/// Throws SchemaError on malformed input or an unknown version.
ModelBundle deserialize_models(std::string_view text);

void save_models(const std::filesystem::path& path, const ModelBundle& models);
ModelBundle load_models(const std::filesystem::path& path);

}  // namespace avpareto::metrics

#endif  // AVPARETO_MODEL_IO_HPP
