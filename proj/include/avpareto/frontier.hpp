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

// Pareto-optimal set, GPR frontier surface, headroom and convex hull.

#ifndef AVPARETO_FRONTIER_HPP
#define AVPARETO_FRONTIER_HPP

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "avpareto/table.hpp"

namespace avpareto::frontier {

/// (S, E, I); higher is better on every axis.
using Point = std::array<double, 3>;

enum class Axis { S = 0, E = 1, I = 2 };
std::string_view to_string(Axis a);
Axis parse_axis(std::string_view text);

/// a >= b componentwise and a != b.
bool dominates(const Point& a, const Point& b);

struct ParetoResult {
  std::vector<std::size_t> indices;  // ascending
  std::vector<bool> is_pareto;
  std::size_t n = 0;
  double fraction = 0.0;
  Point mean_pareto{};
  std::optional<Point> mean_dominated;  // empty when every point is optimal
};

/// Exact non-dominated subset. Equal points never dominate each other, so
/// duplicates of an optimal point are all kept. Throws DomainError on empty
/// input.
ParetoResult pareto_set(std::span<const Point> points, int workers = 1);

struct KernelParams {
  std::array<double, 2> length{1.0, 1.0};
  double signal_var = 1.0;
  double noise_var = 1e-4;
  double mean = 0.0;  // constant prior mean
};

struct FrontierOptions {
  Axis dependent = Axis::I;
  int lattice = 50;
  double length_min = 0.02;
  double length_max = 10.0;
  double signal_min = 1e-6;
  double signal_max = 10.0;
  double noise_min = 1e-8;
  double noise_max = 0.1;
  int grid = 5;    // coarse grid points per hyperparameter
  int starts = 3;  // local refinements from the best grid points
  std::size_t min_points = 5;

  void validate() const;
};

struct Overshoot {
  double max = 0.0;       // largest prediction minus 1, or 0
  double mean = 0.0;      // mean of (prediction - 1) over cells above 1, or 0
  double fraction = 0.0;  // share of lattice cells above 1
  int resolution = 0;     // lattice points per axis
};

struct LatticeCell {
  double u = 0.0;  // first input axis
  double v = 0.0;  // second input axis
  double mean = 0.0;
  double std = 0.0;
};

class FrontierModel {
 public:
  Axis dependent = Axis::I;
  std::array<Axis, 2> inputs{Axis::S, Axis::E};
  KernelParams kernel;
  double log_marginal_likelihood = 0.0;
  std::vector<std::array<double, 2>> x;
  std::vector<double> y;
  std::vector<LatticeCell> lattice;  // row-major, u outer
  int resolution = 0;
  Overshoot overshoot;
  double train_rmse = 0.0;

  /// Posterior mean and latent standard deviation at (u, v).
  std::pair<double, double> predict(double u, double v) const;

  /// Lattice cell as a point in (S, E, I).
  Point surface_point(std::size_t cell) const;

  /// Builds the Cholesky factor and weights from x, y and kernel.
  void condition();

 private:
  Eigen::MatrixXd chol_;
  Eigen::VectorXd alpha_;
};

/// GPR with an anisotropic RBF kernel, white noise and a constant mean equal
/// to the target average. Hyperparameters maximize the log marginal
/// likelihood: geometric grid over the bounds, then Nelder-Mead in log space
/// from the best grid points. Throws FitError with fewer than min_points
/// points or an input axis without spread.
FrontierModel fit_frontier(std::span<const Point> pareto_points, const FrontierOptions& options = {});

struct HeadroomReport {
  std::vector<Point> headroom;  // per observation, each component >= 0
  Point medians{};
};

/// max(0, f - x) against the nearest lattice surface point f in (S, E, I).
Point headroom(const Point& x, const FrontierModel& model);
HeadroomReport headroom(std::span<const Point> xs, const FrontierModel& model, int workers = 1);

/// Same, with the nearest Pareto-optimal point as the reference.
HeadroomReport headroom_to_set(std::span<const Point> xs, std::span<const Point> pareto, int workers = 1);

struct Facet {
  std::array<std::size_t, 3> v{};  // indices into the input points
  Point normal{};                  // unit, outward
  bool upper = false;
};

struct HullResult {
  bool degenerate = false;
  std::vector<Facet> facets;
  std::vector<std::size_t> envelope;  // indices into facets; empty when degenerate
};

/// Incremental 3D convex hull. The envelope is the facets whose outward
/// normal points along +dependent. Fewer than 4 points or a coplanar set is
/// reported as degenerate.
HullResult convex_hull_frontier(std::span<const Point> points, Axis dependent = Axis::I);

struct Summary {
  std::size_t n = 0;
  std::size_t n_pareto = 0;
  double fraction = 0.0;
  Point mean_pareto{};
  std::optional<Point> mean_dominated;
  std::optional<Point> median_headroom;
  std::optional<KernelParams> kernel;
  std::optional<Overshoot> overshoot;
  std::optional<double> train_rmse;
  std::optional<Axis> dependent;
  std::string frontier_notice;  // why the surface is missing, if it is
};

Summary pareto_report(const ParetoResult& result, const FrontierModel* model,
                      const HeadroomReport* headrooms, std::string notice = {});
std::string summary_to_json(const Summary& s);

Table pareto_table(const ParetoResult& result);
/// Raw mean, mean clipped to [0, 1] for plotting, and latent std.
Table lattice_table(const FrontierModel& model);
/// Facet vertices are mapped through `row_of` (facet index space to row).
Table hull_table(const HullResult& hull, std::span<const std::size_t> row_of);

}  // namespace avpareto::frontier

#endif  // AVPARETO_FRONTIER_HPP
