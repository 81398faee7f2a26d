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


#include "avpareto/model_io.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"

namespace avpareto::metrics {

namespace {

using nlohmann::json;

json vec(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

json mat(const Eigen::MatrixXd& m) {
  json a = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    a.push_back(std::move(row));
  }
  return a;
}

Eigen::VectorXd to_vec(const json& a) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(a.size()));
  for (std::size_t i = 0; i < a.size(); ++i) v(static_cast<Eigen::Index>(i)) = a[i].get<double>();
  return v;
}

Eigen::MatrixXd to_mat(const json& a) {
  const auto rows = static_cast<Eigen::Index>(a.size());
  const auto cols = rows ? static_cast<Eigen::Index>(a[0].size()) : 0;
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const json& row = a[static_cast<std::size_t>(r)];
    if (static_cast<Eigen::Index>(row.size()) != cols) throw SchemaError("ragged matrix in model file");
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = row[static_cast<std::size_t>(c)].get<double>();
  }
  return m;
}

json spacing_json(const SpacingModel& m) {
  json j;
  j["kind"] = m.kind == RegressorKind::mlp ? "mlp" : "linear";
  j["encoder"] = {{"mean", vec(m.encoder.mean)},
                  {"scale", vec(m.encoder.scale)},
                  {"datasets", m.encoder.datasets}};
  if (m.kind == RegressorKind::linear) {
    j["linear"] = {{"w_mu", vec(m.linear.w_mu)}, {"w_log_sigma", vec(m.linear.w_log_sigma)}};
  } else {
    j["mlp"] = {{"w1", mat(m.mlp.w1)}, {"b1", vec(m.mlp.b1)}, {"w2", mat(m.mlp.w2)},
                {"b2", vec(m.mlp.b2)}, {"w3", mat(m.mlp.w3)}, {"b3", vec(m.mlp.b3)},
                {"skip", mat(m.mlp.skip)}, {"sigma_scale", m.mlp.sigma_scale}};
  }
  j["bin_edges"] = m.bin_edges;
  j["bin_multipliers"] = m.bin_multipliers;
  j["mae"] = m.mae;
  j["n_train"] = m.n_train;
  j["n_holdout"] = m.n_holdout;
  return j;
}

SpacingModel spacing_from(const json& j) {
  SpacingModel m;
  const std::string kind = j.at("kind").get<std::string>();
  if (kind != "mlp" && kind != "linear") throw SchemaError("unknown spacing regressor '" + kind + "'");
  m.kind = kind == "mlp" ? RegressorKind::mlp : RegressorKind::linear;
  const json& e = j.at("encoder");
  const Eigen::VectorXd mean = to_vec(e.at("mean")), scale = to_vec(e.at("scale"));
  if (mean.size() != 4 || scale.size() != 4) throw SchemaError("spacing encoder needs 4 means and scales");
  m.encoder.mean = mean;
  m.encoder.scale = scale;
  m.encoder.datasets = e.at("datasets").get<std::vector<std::string>>();
  if (m.kind == RegressorKind::linear) {
    m.linear.w_mu = to_vec(j.at("linear").at("w_mu"));
    m.linear.w_log_sigma = to_vec(j.at("linear").at("w_log_sigma"));
  } else {
    const json& n = j.at("mlp");
    m.mlp.w1 = to_mat(n.at("w1"));
    m.mlp.b1 = to_vec(n.at("b1"));
    m.mlp.w2 = to_mat(n.at("w2"));
    m.mlp.b2 = to_vec(n.at("b2"));
    m.mlp.w3 = to_mat(n.at("w3"));
    m.mlp.b3 = to_vec(n.at("b3"));
    m.mlp.skip = to_mat(n.at("skip"));
    m.mlp.sigma_scale = n.at("sigma_scale").get<double>();
  }
  m.bin_edges = j.at("bin_edges").get<std::vector<double>>();
  m.bin_multipliers = j.at("bin_multipliers").get<std::vector<double>>();
  m.mae = j.at("mae").get<double>();
  m.n_train = j.at("n_train").get<std::size_t>();
  m.n_holdout = j.at("n_holdout").get<std::size_t>();
  return m;
}

json delay_json(const DelayModel& m) {
  json terms = json::array();
  for (const auto& t : m.terms) {
    terms.push_back({{"lo", t.lo}, {"hi", t.hi}, {"lambda", t.lambda},
                     {"column_means", vec(t.column_means)}, {"coef", vec(t.coef)}});
  }
  return {{"intercept", m.intercept}, {"terms", terms}, {"lane_levels", m.lane_levels},
          {"lane_coef", vec(m.lane_coef)}, {"type_levels", m.type_levels},
          {"type_coef", vec(m.type_coef)}, {"pseudo_r2", m.pseudo_r2}, {"n_obs", m.n_obs}};
}

DelayModel delay_from(const json& j) {
  DelayModel m;
  m.intercept = j.at("intercept").get<double>();
  const json& terms = j.at("terms");
  if (terms.size() != m.terms.size()) throw SchemaError("delay model needs 4 terms");
  for (std::size_t k = 0; k < m.terms.size(); ++k) {
    auto& t = m.terms[k];
    t.lo = terms[k].at("lo").get<double>();
    t.hi = terms[k].at("hi").get<double>();
    t.lambda = terms[k].at("lambda").get<double>();
    t.column_means = to_vec(terms[k].at("column_means"));
    t.coef = to_vec(terms[k].at("coef"));
  }
  m.lane_levels = j.at("lane_levels").get<std::vector<std::string>>();
  m.lane_coef = to_vec(j.at("lane_coef"));
  m.type_levels = j.at("type_levels").get<std::vector<std::string>>();
  m.type_coef = to_vec(j.at("type_coef"));
  m.pseudo_r2 = j.at("pseudo_r2").get<double>();
  m.n_obs = j.at("n_obs").get<std::size_t>();
  return m;
}

}  // namespace

std::string serialize_models(const ModelBundle& models) {
  json j;
  j["format"] = "avpareto-models";
  j["version"] = kModelFormatVersion;
  j["spacing"] = models.spacing ? spacing_json(*models.spacing) : json(nullptr);
  if (models.tail) {
    const auto& t = *models.tail;
    j["tail"] = {{"u", t.u}, {"xi", t.xi}, {"beta", t.beta},
                 {"n_exceedances", t.n_exceedances}, {"percentile", t.percentile}};
  } else {
    j["tail"] = nullptr;
  }
  j["delay"] = models.delay ? delay_json(*models.delay) : json(nullptr);
  return j.dump(1) + "\n";
}

ModelBundle deserialize_models(std::string_view text) {
  try {
    const json j = json::parse(text);
    if (j.at("format").get<std::string>() != "avpareto-models") throw SchemaError("not a model file");
    const int version = j.at("version").get<int>();
    if (version != kModelFormatVersion) {
      throw SchemaError("unsupported model file version " + std::to_string(version));
    }
    ModelBundle b;
    if (!j.at("spacing").is_null()) b.spacing = spacing_from(j.at("spacing"));
    if (!j.at("tail").is_null()) {
      const json& t = j.at("tail");
      b.tail = TailModel{t.at("u").get<double>(), t.at("xi").get<double>(), t.at("beta").get<double>(),
                         t.at("n_exceedances").get<std::size_t>(), t.at("percentile").get<double>()};
    }
    if (!j.at("delay").is_null()) b.delay = delay_from(j.at("delay"));
    return b;
  } catch (const json::exception& e) {
    throw SchemaError(std::string("malformed model file: ") + e.what());
  }
}

void save_models(const std::filesystem::path& path, const ModelBundle& models) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << serialize_models(models);
}

ModelBundle load_models(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SchemaError("cannot read model file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return deserialize_models(ss.str());
}

}  // namespace avpareto::metrics
