#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace sweep {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using Grid = std::vector<double>;
using Rng = std::mt19937_64;

// ---------------------------------------------------------------------------
// Error taxonomy. Every failure mode that callers are expected to branch on
// gets its own type; the CLI maps them to exit codes.
// ---------------------------------------------------------------------------

struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

#define SWEEP_DEFINE_ERROR(NAME)                                \
  struct NAME : Error {                                         \
    explicit NAME(const std::string& msg) : Error(#NAME ": " + msg) {} \
  }

SWEEP_DEFINE_ERROR(EmptySample);
SWEEP_DEFINE_ERROR(OutsideProxRadius);
SWEEP_DEFINE_ERROR(UnknownInstance);
SWEEP_DEFINE_ERROR(NoClosedForm);
SWEEP_DEFINE_ERROR(GammaTooSmall);
SWEEP_DEFINE_ERROR(ScheduleNotMonotone);
SWEEP_DEFINE_ERROR(GridMismatch);
SWEEP_DEFINE_ERROR(EmptyIntersection);
SWEEP_DEFINE_ERROR(NonFinite);
SWEEP_DEFINE_ERROR(BlowUp);
SWEEP_DEFINE_ERROR(LeftC);
SWEEP_DEFINE_ERROR(ZeroGradientOnBoundary);
SWEEP_DEFINE_ERROR(GInfinite);
SWEEP_DEFINE_ERROR(Stalled);
SWEEP_DEFINE_ERROR(UnmatchedAtom);
SWEEP_DEFINE_ERROR(NegativeLambda);
SWEEP_DEFINE_ERROR(EndpointInfeasible);
SWEEP_DEFINE_ERROR(UnsupportedSetKind);
SWEEP_DEFINE_ERROR(ParseError);
SWEEP_DEFINE_ERROR(ConfigError);

#undef SWEEP_DEFINE_ERROR

// ---------------------------------------------------------------------------
// Small numeric helpers shared across modules.
// ---------------------------------------------------------------------------

inline Grid uniform_grid(double t0, double t1, int n_cells) {
  if (!(t1 > t0) || n_cells < 1) throw ConfigError("uniform_grid: need t1 > t0 and n >= 1");
  Grid g(static_cast<std::size_t>(n_cells) + 1);
  for (int i = 0; i <= n_cells; ++i) g[static_cast<std::size_t>(i)] = t0 + (t1 - t0) * i / n_cells;
  g.back() = t1;
  return g;
}

inline void require_same_grid(const Grid& a, const Grid& b) {
  if (a.size() != b.size()) throw GridMismatch("grids differ in size");
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i] != b[i]) throw GridMismatch("grids differ at node " + std::to_string(i));
}

// exp(clamp(z, lo, hi)); the clamp is part of the map we differentiate, so the
// derivative indicator is reported alongside.
struct ClampedExp {
  double value = 0.0;
  bool in_band = true;  // false when a clamp is active (derivative w.r.t. z is 0)
};

inline ClampedExp clamped_exp(double z, double lo = -745.0, double hi = 50.0) {
  ClampedExp r;
  if (z < lo) {
    r.value = 0.0;  // exp(-745) underflows anyway
    r.in_band = false;
  } else if (z > hi) {
    r.value = std::exp(hi);
    r.in_band = false;
  } else {
    r.value = std::exp(z);
    r.in_band = true;
  }
  return r;
}

inline bool all_finite(const Vec& v) { return v.allFinite(); }

// Least-squares slope of log(y) against log(x). Used for grid-refinement fits.
inline double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw Error("loglog_slope: need >= 2 samples");
  const auto n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0.0) || !(y[i] > 0.0)) throw Error("loglog_slope: positive data required");
    const double lx = std::log(x[i]), ly = std::log(y[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  const double denom = n * sxx - sx * sx;
  if (denom == 0.0) throw Error("loglog_slope: degenerate abscissae");
  return (n * sxy - sx * sy) / denom;
}

inline double sup_norm(const std::vector<Vec>& a, const std::vector<Vec>& b) {
  if (a.size() != b.size()) throw GridMismatch("sup_norm: size mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, (a[i] - b[i]).norm());
  return m;
}

}  // namespace sweep
