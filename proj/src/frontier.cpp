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

#include "avpareto/frontier.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <set>

#include "avpareto/common.hpp"
#include "avpareto/parallel.hpp"
#include "json.hpp"

namespace avpareto::frontier {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kJitter = 1e-10;

double sq(double v) { return v * v; }

Point mean_of(std::span<const Point> pts, const std::vector<std::size_t>& idx) {
  Point m{};
  for (std::size_t i : idx)
    for (int k = 0; k < 3; ++k) m[k] += pts[i][k];
  for (auto& v : m) v /= static_cast<double>(idx.size());
  return m;
}

Point medians_of(const std::vector<Point>& hs) {
  Point m{};
  if (hs.empty()) return m;
  for (int k = 0; k < 3; ++k) {
    std::vector<double> col;
    col.reserve(hs.size());
    for (const auto& h : hs) col.push_back(h[k]);
    m[k] = median(col);
  }
  return m;
}

double rbf(const std::array<double, 2>& a, const std::array<double, 2>& b, const KernelParams& k) {
  return k.signal_var *
         std::exp(-0.5 * (sq((a[0] - b[0]) / k.length[0]) + sq((a[1] - b[1]) / k.length[1])));
}

struct Problem {
  const std::vector<std::array<double, 2>>& x;
  Eigen::VectorXd yc;  // centered targets
  std::array<double, 4> lo, hi;  // log bounds

  KernelParams params(const std::array<double, 4>& t, double mean) const {
    std::array<double, 4> c;
    for (int i = 0; i < 4; ++i) c[i] = std::clamp(t[i], lo[i], hi[i]);
    return {{std::exp(c[0]), std::exp(c[1])}, std::exp(c[2]), std::exp(c[3]), mean};
  }

  double lml(const KernelParams& k) const {
    const auto n = static_cast<Eigen::Index>(x.size());
    Eigen::MatrixXd K(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j <= i; ++j) K(i, j) = K(j, i) = rbf(x[i], x[j], k);
      K(i, i) += k.noise_var + kJitter;
    }
    Eigen::LLT<Eigen::MatrixXd> llt(K);
    if (llt.info() != Eigen::Success) return -kInf;
    const Eigen::VectorXd a = llt.solve(yc);
    const Eigen::MatrixXd& L = llt.matrixLLT();
    double logdet = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) logdet += std::log(L(i, i));
    const double v = -0.5 * yc.dot(a) - logdet - 0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi);
    return std::isfinite(v) ? v : -kInf;
  }
};

// Nelder-Mead maximization in the clamped box.
std::array<double, 4> nelder_mead(const Problem& p, std::array<double, 4> start, double mean, double& best) {
  using V = std::array<double, 4>;
  auto f = [&](const V& t) {
    V c;
    for (int i = 0; i < 4; ++i) c[i] = std::clamp(t[i], p.lo[i], p.hi[i]);
    return -p.lml(p.params(c, mean));
  };
  std::array<V, 5> s;
  std::array<double, 5> fv;
  s[0] = start;
  for (int i = 0; i < 4; ++i) {
    s[i + 1] = start;
    const double step = 0.1 * (p.hi[i] - p.lo[i]);
    s[i + 1][i] += (start[i] + step <= p.hi[i]) ? step : -step;
  }
  for (int i = 0; i < 5; ++i) fv[i] = f(s[i]);

  for (int iter = 0; iter < 400; ++iter) {
    std::array<int, 5> order{0, 1, 2, 3, 4};
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return fv[a] < fv[b]; });
    std::array<V, 5> s2;
    std::array<double, 5> f2;
    for (int i = 0; i < 5; ++i) {
      s2[i] = s[order[i]];
      f2[i] = fv[order[i]];
    }
    s = s2;
    fv = f2;
    if (std::abs(fv[4] - fv[0]) < 1e-9 * (1.0 + std::abs(fv[0]))) break;

    V c{};
    for (int i = 0; i < 4; ++i)
      for (int d = 0; d < 4; ++d) c[d] += s[i][d] / 4.0;
    auto along = [&](double t) {
      V r;
      for (int d = 0; d < 4; ++d) r[d] = std::clamp(c[d] + t * (s[4][d] - c[d]), p.lo[d], p.hi[d]);
      return r;
    };
    const V xr = along(-1.0);
    const double fr = f(xr);
    if (fr < fv[0]) {
      const V xe = along(-2.0);
      const double fe = f(xe);
      if (fe < fr) { s[4] = xe; fv[4] = fe; } else { s[4] = xr; fv[4] = fr; }
    } else if (fr < fv[3]) {
      s[4] = xr;
      fv[4] = fr;
    } else {
      const V xc = fr < fv[4] ? along(-0.5) : along(0.5);
      const double fc = f(xc);
      if (fc < std::min(fr, fv[4])) {
        s[4] = xc;
        fv[4] = fc;
      } else {
        for (int i = 1; i < 5; ++i) {
          for (int d = 0; d < 4; ++d) s[i][d] = s[0][d] + 0.5 * (s[i][d] - s[0][d]);
          fv[i] = f(s[i]);
        }
      }
    }
  }
  const int b = static_cast<int>(std::min_element(fv.begin(), fv.end()) - fv.begin());
  best = -fv[b];
  return s[b];
}

double dot(const Point& a, const Point& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
Point sub(const Point& a, const Point& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
Point cross(const Point& a, const Point& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}

}  // namespace

std::string_view to_string(Axis a) {
  switch (a) {
    case Axis::S: return "S";
    case Axis::E: return "E";
    case Axis::I: break;
  }
  return "I";
}

Axis parse_axis(std::string_view text) {
  if (text == "S") return Axis::S;
  if (text == "E") return Axis::E;
  if (text == "I") return Axis::I;
  throw ConfigError("unknown objective axis '" + std::string(text) + "' (expected S, E or I)");
}

bool dominates(const Point& a, const Point& b) {
  bool strict = false;
  for (int k = 0; k < 3; ++k) {
    if (a[k] < b[k]) return false;
    if (a[k] > b[k]) strict = true;
  }
  return strict;
}

ParetoResult pareto_set(std::span<const Point> points, int workers) {
  if (points.empty()) throw DomainError("Pareto set of an empty sample");
  const std::size_t n = points.size();
  // Candidate dominators in decreasing coordinate sum: a dominator never has
  // a smaller sum, so each scan stops at the first smaller one.
  std::vector<double> sum(n);
  for (std::size_t i = 0; i < n; ++i) sum[i] = points[i][0] + points[i][1] + points[i][2];
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return sum[a] > sum[b]; });

  std::vector<char> optimal(n, 1);
  parallel_for(n, workers, [&](std::size_t i) {
    for (std::size_t j : order) {
      if (sum[j] < sum[i]) break;
      if (dominates(points[j], points[i])) {
        optimal[i] = 0;
        return;
      }
    }
  });

  ParetoResult r;
  r.n = n;
  r.is_pareto.assign(n, false);
  std::vector<std::size_t> dominated;
  for (std::size_t i = 0; i < n; ++i) {
    r.is_pareto[i] = optimal[i] != 0;
    (optimal[i] ? r.indices : dominated).push_back(i);
  }
  r.fraction = static_cast<double>(r.indices.size()) / static_cast<double>(n);
  r.mean_pareto = mean_of(points, r.indices);
  if (!dominated.empty()) r.mean_dominated = mean_of(points, dominated);
  return r;
}

void FrontierOptions::validate() const {
  if (lattice < 2) throw ConfigError("frontier lattice needs at least 2 points per axis");
  if (grid < 2) throw ConfigError("frontier hyperparameter grid needs at least 2 points");
  if (starts < 1) throw ConfigError("frontier needs at least one local start");
  if (!(length_min > 0 && length_min < length_max) || !(signal_min > 0 && signal_min < signal_max) ||
      !(noise_min > 0 && noise_min < noise_max)) {
    throw ConfigError("frontier kernel bounds must satisfy 0 < min < max");
  }
}

std::pair<double, double> FrontierModel::predict(double u, double v) const {
  const auto n = static_cast<Eigen::Index>(x.size());
  Eigen::VectorXd ks(n);
  const std::array<double, 2> q{u, v};
  for (Eigen::Index i = 0; i < n; ++i) ks(i) = rbf(x[i], q, kernel);
  const double mean = kernel.mean + ks.dot(alpha_);
  const Eigen::VectorXd w = chol_.triangularView<Eigen::Lower>().solve(ks);
  const double var = std::max(0.0, kernel.signal_var - w.squaredNorm());
  return {mean, std::sqrt(var)};
}

Point FrontierModel::surface_point(std::size_t cell) const {
  const auto& c = lattice.at(cell);
  Point p{};
  p[static_cast<int>(inputs[0])] = c.u;
  p[static_cast<int>(inputs[1])] = c.v;
  p[static_cast<int>(dependent)] = c.mean;
  return p;
}

void FrontierModel::condition() {
  const auto n = static_cast<Eigen::Index>(x.size());
  Eigen::MatrixXd K(n, n);
  Eigen::VectorXd yc(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j <= i; ++j) K(i, j) = K(j, i) = rbf(x[i], x[j], kernel);
    K(i, i) += kernel.noise_var + kJitter;
    yc(i) = y[i] - kernel.mean;
  }
  Eigen::LLT<Eigen::MatrixXd> llt(K);
  if (llt.info() != Eigen::Success) throw FitError("frontier kernel matrix is not positive definite");
  chol_ = llt.matrixL();
  alpha_ = llt.solve(yc);
}

FrontierModel fit_frontier(std::span<const Point> pareto_points, const FrontierOptions& options) {
  options.validate();
  if (pareto_points.size() < options.min_points) {
    throw FitError("frontier fit needs at least " + std::to_string(options.min_points) + " Pareto points, got " +
                   std::to_string(pareto_points.size()));
  }
  FrontierModel m;
  m.dependent = options.dependent;
  int a = 0;
  for (int k = 0; k < 3; ++k) {
    if (k != static_cast<int>(options.dependent)) m.inputs[a++] = static_cast<Axis>(k);
  }
  for (const auto& p : pareto_points) {
    m.x.push_back({p[static_cast<int>(m.inputs[0])], p[static_cast<int>(m.inputs[1])]});
    m.y.push_back(p[static_cast<int>(m.dependent)]);
  }
  for (int d = 0; d < 2; ++d) {
    const auto [lo, hi] = std::minmax_element(m.x.begin(), m.x.end(),
                                              [d](const auto& p, const auto& q) { return p[d] < q[d]; });
    if (!((*hi)[d] > (*lo)[d])) {
      throw FitError("frontier input axis " + std::string(to_string(m.inputs[d])) + " has no spread");
    }
  }
  const double mean = std::accumulate(m.y.begin(), m.y.end(), 0.0) / static_cast<double>(m.y.size());

  Problem prob{m.x, Eigen::VectorXd(static_cast<Eigen::Index>(m.y.size())), {}, {}};
  for (std::size_t i = 0; i < m.y.size(); ++i) prob.yc(static_cast<Eigen::Index>(i)) = m.y[i] - mean;
  prob.lo = {std::log(options.length_min), std::log(options.length_min), std::log(options.signal_min),
             std::log(options.noise_min)};
  prob.hi = {std::log(options.length_max), std::log(options.length_max), std::log(options.signal_max),
             std::log(options.noise_max)};

  // Coarse grid.
  std::vector<std::pair<double, std::array<double, 4>>> scored;
  const int g = options.grid;
  std::array<int, 4> idx{};
  for (;;) {
    std::array<double, 4> t;
    for (int d = 0; d < 4; ++d) t[d] = prob.lo[d] + (prob.hi[d] - prob.lo[d]) * idx[d] / (g - 1);
    scored.push_back({prob.lml(prob.params(t, mean)), t});
    int d = 0;
    while (d < 4 && ++idx[d] == g) idx[d++] = 0;
    if (d == 4) break;
  }
  std::stable_sort(scored.begin(), scored.end(), [](const auto& p, const auto& q) { return p.first > q.first; });
  if (!std::isfinite(scored.front().first)) throw FitError("frontier likelihood is not finite on the grid");

  double best = scored.front().first;
  std::array<double, 4> best_t = scored.front().second;
  const int starts = std::min<int>(options.starts, static_cast<int>(scored.size()));
  for (int s = 0; s < starts; ++s) {
    double v;
    const auto t = nelder_mead(prob, scored[s].second, mean, v);
    if (v > best) {
      best = v;
      best_t = t;
    }
  }
  m.kernel = prob.params(best_t, mean);
  m.log_marginal_likelihood = best;
  m.condition();

  double sse = 0.0;
  for (std::size_t i = 0; i < m.x.size(); ++i) sse += sq(m.predict(m.x[i][0], m.x[i][1]).first - m.y[i]);
  m.train_rmse = std::sqrt(sse / static_cast<double>(m.x.size()));

  const int r = options.lattice;
  m.resolution = r;
  m.lattice.resize(static_cast<std::size_t>(r) * r);
  for (int i = 0; i < r; ++i) {
    for (int j = 0; j < r; ++j) {
      const double u = static_cast<double>(i) / (r - 1), v = static_cast<double>(j) / (r - 1);
      const auto [mu, sd] = m.predict(u, v);
      m.lattice[static_cast<std::size_t>(i) * r + j] = {u, v, mu, sd};
    }
  }
  m.overshoot.resolution = r;
  std::size_t over = 0;
  double acc = 0.0;
  for (const auto& c : m.lattice) {
    if (c.mean > 1.0) {
      ++over;
      acc += c.mean - 1.0;
      m.overshoot.max = std::max(m.overshoot.max, c.mean - 1.0);
    }
  }
  if (over) m.overshoot.mean = acc / static_cast<double>(over);
  m.overshoot.fraction = static_cast<double>(over) / static_cast<double>(m.lattice.size());
  return m;
}

Point headroom(const Point& x, const FrontierModel& model) {
  if (model.lattice.empty()) throw DomainError("frontier model has no lattice");
  std::size_t best = 0;
  double best_d = kInf;
  for (std::size_t c = 0; c < model.lattice.size(); ++c) {
    const Point f = model.surface_point(c);
    const double d = sq(f[0] - x[0]) + sq(f[1] - x[1]) + sq(f[2] - x[2]);
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  const Point f = model.surface_point(best);
  return {std::max(0.0, f[0] - x[0]), std::max(0.0, f[1] - x[1]), std::max(0.0, f[2] - x[2])};
}

HeadroomReport headroom(std::span<const Point> xs, const FrontierModel& model, int workers) {
  HeadroomReport r;
  r.headroom.resize(xs.size());
  parallel_for(xs.size(), workers, [&](std::size_t i) { r.headroom[i] = headroom(xs[i], model); });
  r.medians = medians_of(r.headroom);
  return r;
}

HeadroomReport headroom_to_set(std::span<const Point> xs, std::span<const Point> pareto, int workers) {
  if (pareto.empty()) throw DomainError("headroom against an empty Pareto set");
  HeadroomReport r;
  r.headroom.resize(xs.size());
  parallel_for(xs.size(), workers, [&](std::size_t i) {
    const Point& x = xs[i];
    std::size_t best = 0;
    double best_d = kInf;
    for (std::size_t j = 0; j < pareto.size(); ++j) {
      const double d = sq(pareto[j][0] - x[0]) + sq(pareto[j][1] - x[1]) + sq(pareto[j][2] - x[2]);
      if (d < best_d) {
        best_d = d;
        best = j;
      }
    }
    const Point& f = pareto[best];
    r.headroom[i] = {std::max(0.0, f[0] - x[0]), std::max(0.0, f[1] - x[1]), std::max(0.0, f[2] - x[2])};
  });
  r.medians = medians_of(r.headroom);
  return r;
}

HullResult convex_hull_frontier(std::span<const Point> pts, Axis dependent) {
  HullResult out;
  const std::size_t n = pts.size();
  if (n < 4) {
    out.degenerate = true;
    return out;
  }
  double scale = 0.0;
  for (const auto& p : pts)
    for (int k = 0; k < 3; ++k) scale = std::max(scale, std::abs(p[k] - pts[0][k]));
  const double eps = 1e-10 * std::max(scale, 1e-300);

  // Initial simplex: farthest point from p0, then from the line, then from
  // the plane.
  std::size_t i0 = 0, i1 = 0, i2 = 0, i3 = 0;
  double best = 0.0;
  for (std::size_t i = 1; i < n; ++i) {
    const Point d = sub(pts[i], pts[i0]);
    if (dot(d, d) > best) { best = dot(d, d); i1 = i; }
  }
  if (std::sqrt(best) <= eps) {
    out.degenerate = true;
    return out;
  }
  best = 0.0;
  const Point e1 = sub(pts[i1], pts[i0]);
  for (std::size_t i = 0; i < n; ++i) {
    const Point c = cross(e1, sub(pts[i], pts[i0]));
    if (dot(c, c) > best) { best = dot(c, c); i2 = i; }
  }
  if (std::sqrt(best) / std::sqrt(dot(e1, e1)) <= eps) {
    out.degenerate = true;
    return out;
  }
  Point nrm = cross(e1, sub(pts[i2], pts[i0]));
  const double nlen = std::sqrt(dot(nrm, nrm));
  best = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double h = std::abs(dot(nrm, sub(pts[i], pts[i0]))) / nlen;
    if (h > best) { best = h; i3 = i; }
  }
  if (best <= eps) {
    out.degenerate = true;
    return out;
  }

  Point centroid{};
  for (std::size_t i : {i0, i1, i2, i3})
    for (int k = 0; k < 3; ++k) centroid[k] += pts[i][k] / 4.0;

  struct F {
    std::array<std::size_t, 3> v;
    Point normal;  // unit outward
    double offset;
    bool alive = true;
  };
  std::vector<F> faces;
  auto make = [&](std::size_t a, std::size_t b, std::size_t c) {
    Point nn = cross(sub(pts[b], pts[a]), sub(pts[c], pts[a]));
    if (dot(nn, sub(centroid, pts[a])) > 0.0) {
      std::swap(b, c);
      nn = {-nn[0], -nn[1], -nn[2]};
    }
    const double len = std::sqrt(dot(nn, nn));
    for (auto& v : nn) v /= len;
    faces.push_back({{a, b, c}, nn, dot(nn, pts[a]), true});
  };
  make(i0, i1, i2);
  make(i0, i1, i3);
  make(i0, i2, i3);
  make(i1, i2, i3);

  for (std::size_t p = 0; p < n; ++p) {
    if (p == i0 || p == i1 || p == i2 || p == i3) continue;
    std::vector<std::size_t> visible;
    for (std::size_t f = 0; f < faces.size(); ++f) {
      if (faces[f].alive && dot(faces[f].normal, pts[p]) - faces[f].offset > eps) visible.push_back(f);
    }
    if (visible.empty()) continue;
    std::set<std::pair<std::size_t, std::size_t>> edges;
    for (std::size_t f : visible) {
      const auto& v = faces[f].v;
      for (int e = 0; e < 3; ++e) edges.insert({v[e], v[(e + 1) % 3]});
    }
    std::vector<std::pair<std::size_t, std::size_t>> horizon;
    for (const auto& e : edges) {
      if (!edges.count({e.second, e.first})) horizon.push_back(e);
    }
    for (std::size_t f : visible) faces[f].alive = false;
    for (const auto& [a, b] : horizon) make(a, b, p);
  }

  const int dep = static_cast<int>(dependent);
  for (const auto& f : faces) {
    if (!f.alive) continue;
    Facet facet{f.v, f.normal, f.normal[dep] > 1e-9};
    if (facet.upper) out.envelope.push_back(out.facets.size());
    out.facets.push_back(facet);
  }
  return out;
}

Summary pareto_report(const ParetoResult& result, const FrontierModel* model, const HeadroomReport* headrooms,
                      std::string notice) {
  Summary s;
  s.n = result.n;
  s.n_pareto = result.indices.size();
  s.fraction = result.fraction;
  s.mean_pareto = result.mean_pareto;
  s.mean_dominated = result.mean_dominated;
  if (headrooms) s.median_headroom = headrooms->medians;
  if (model) {
    s.kernel = model->kernel;
    s.overshoot = model->overshoot;
    s.train_rmse = model->train_rmse;
    s.dependent = model->dependent;
  }
  s.frontier_notice = std::move(notice);
  return s;
}

std::string summary_to_json(const Summary& s) {
  using nlohmann::json;
  auto triple = [](const Point& p) { return json{{"S", p[0]}, {"E", p[1]}, {"I", p[2]}}; };
  json j;
  j["n"] = s.n;
  j["n_pareto"] = s.n_pareto;
  j["pareto_fraction"] = s.fraction;
  j["mean_pareto"] = triple(s.mean_pareto);
  j["mean_dominated"] = s.mean_dominated ? triple(*s.mean_dominated) : json(nullptr);
  j["median_headroom"] = s.median_headroom ? triple(*s.median_headroom) : json(nullptr);
  if (s.kernel) {
    j["frontier"] = {
        {"dependent_axis", std::string(to_string(*s.dependent))},
        {"length_scales", {s.kernel->length[0], s.kernel->length[1]}},
        {"signal_variance", s.kernel->signal_var},
        {"noise_variance", s.kernel->noise_var},
        {"prior_mean", s.kernel->mean},
        {"train_rmse", *s.train_rmse},
        {"overshoot",
         {{"max", s.overshoot->max},
          {"mean", s.overshoot->mean},
          {"fraction", s.overshoot->fraction},
          {"resolution", s.overshoot->resolution}}},
    };
  } else {
    j["frontier"] = nullptr;
  }
  if (!s.frontier_notice.empty()) j["frontier_notice"] = s.frontier_notice;
  return j.dump(2) + "\n";
}

Table pareto_table(const ParetoResult& result) {
  Table t;
  t.header = {"row", "is_pareto"};
  for (std::size_t i = 0; i < result.n; ++i) t.rows.push_back({std::to_string(i), result.is_pareto[i] ? "1" : "0"});
  return t;
}

Table lattice_table(const FrontierModel& model) {
  Table t;
  const std::string dep(to_string(model.dependent));
  t.header = {std::string(to_string(model.inputs[0])), std::string(to_string(model.inputs[1])), dep + "_pred",
              dep + "_plot", dep + "_std"};
  for (const auto& c : model.lattice) {
    t.rows.push_back({format_double(c.u), format_double(c.v), format_double(c.mean),
                      format_double(std::clamp(c.mean, 0.0, 1.0)), format_double(c.std)});
  }
  return t;
}

Table hull_table(const HullResult& hull, std::span<const std::size_t> row_of) {
  Table t;
  t.header = {"row_a", "row_b", "row_c", "nx", "ny", "nz", "upper"};
  for (const auto& f : hull.facets) {
    std::vector<std::string> r;
    for (std::size_t v : f.v) r.push_back(std::to_string(row_of.empty() ? v : row_of[v]));
    for (double c : f.normal) r.push_back(format_double(c));
    r.push_back(f.upper ? "1" : "0");
    t.rows.push_back(std::move(r));
  }
  return t;
}

}  // namespace avpareto::frontier
