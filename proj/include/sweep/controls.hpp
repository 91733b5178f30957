#pragma once

#include "sweep/control_set.hpp"
#include "sweep/core.hpp"

#include <algorithm>
#include <utility>
#include <vector>

namespace sweep {

/// A W^{1,2} control discretized as node values with piecewise-linear
/// interpolation; the derivative is the per-interval constant slope.
struct GridControl {
  Grid grid;
  std::vector<Vec> values;

  int cells() const { return static_cast<int>(grid.size()) - 1; }
  int dim() const { return values.empty() ? 0 : static_cast<int>(values.front().size()); }

  static GridControl from_function(const Grid& g, const std::function<Vec(double)>& fn) {
    GridControl u;
    u.grid = g;
    u.values.reserve(g.size());
    for (double t : g) u.values.push_back(fn(t));
    return u;
  }

  static GridControl constant(const Grid& g, const Vec& v) {
    GridControl u;
    u.grid = g;
    u.values.assign(g.size(), v);
    return u;
  }

  /// Index of the cell containing t (clamped to the horizon).
  int cell_of(double t) const {
    const auto it = std::upper_bound(grid.begin(), grid.end(), t);
    int i = static_cast<int>(it - grid.begin()) - 1;
    return std::clamp(i, 0, cells() - 1);
  }

  void eval(double t, Vec& out) const {
    const int i = cell_of(t);
    const double h = grid[static_cast<std::size_t>(i + 1)] - grid[static_cast<std::size_t>(i)];
    const double w = std::clamp((t - grid[static_cast<std::size_t>(i)]) / h, 0.0, 1.0);
    out = (1.0 - w) * values[static_cast<std::size_t>(i)] + w * values[static_cast<std::size_t>(i + 1)];
  }

  Vec eval(double t) const {
    Vec out;
    eval(t, out);
    return out;
  }

  /// ||u||_inf + ||du/dt||_2, the norm the localization is stated in.
  double w12_norm() const {
    double sup = 0.0;
    double d2 = 0.0;
    for (const auto& v : values) sup = std::max(sup, v.norm());
    for (int i = 0; i < cells(); ++i) {
      const double h = grid[static_cast<std::size_t>(i + 1)] - grid[static_cast<std::size_t>(i)];
      d2 += (values[static_cast<std::size_t>(i + 1)] - values[static_cast<std::size_t>(i)]).squaredNorm() / h;
    }
    return sup + std::sqrt(d2);
  }
};

/// The two localization seminorms: (sup_t ||u-v||, ||du/dt - dv/dt||_2).
inline std::pair<double, double> w12_distance(const GridControl& u, const GridControl& v) {
  require_same_grid(u.grid, v.grid);
  double sup = 0.0;
  double d2 = 0.0;
  for (std::size_t i = 0; i < u.values.size(); ++i) sup = std::max(sup, (u.values[i] - v.values[i]).norm());
  for (int i = 0; i < u.cells(); ++i) {
    const auto j = static_cast<std::size_t>(i);
    const double h = u.grid[j + 1] - u.grid[j];
    const Vec du = (u.values[j + 1] - u.values[j]) - (v.values[j + 1] - v.values[j]);
    d2 += du.squaredNorm() / h;
  }
  return {sup, std::sqrt(d2)};
}

/// Node-wise projection onto U(t) or onto U(t) ∩ B_delta(u_ref(t)).
inline GridControl project_pointwise(const GridControl& u, const ControlSet& U,
                                     const GridControl* trust_center = nullptr,
                                     double trust_radius = std::numeric_limits<double>::infinity()) {
  if (trust_center) require_same_grid(u.grid, trust_center->grid);
  GridControl out = u;
  for (std::size_t i = 0; i < u.values.size(); ++i) {
    const double t = u.grid[i];
    if (trust_center)
      out.values[i] = U.project_trust(t, u.values[i], trust_center->values[i], trust_radius);
    else
      out.values[i] = U.project(t, u.values[i]);
  }
  return out;
}

/// Running integral z(t_i) = sum_{j<i} h_j ||Du_j/h_j - Du_ref_j/h_j||^2; the
/// terminal value is the squared derivative-L2 distance.
inline std::vector<double> z_accumulator(const GridControl& u, const GridControl& u_ref) {
  require_same_grid(u.grid, u_ref.grid);
  std::vector<double> z(u.grid.size(), 0.0);
  for (int i = 0; i < u.cells(); ++i) {
    const auto j = static_cast<std::size_t>(i);
    const double h = u.grid[j + 1] - u.grid[j];
    const Vec d = ((u.values[j + 1] - u.values[j]) - (u_ref.values[j + 1] - u_ref.values[j])) / h;
    z[j + 1] = z[j] + h * d.squaredNorm();
  }
  return z;
}

}  // namespace sweep
