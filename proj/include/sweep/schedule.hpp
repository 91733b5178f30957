#pragma once

#include "sweep/endpoint_set.hpp"
#include "sweep/geometry.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace sweep {

/// The penalty sequence (gamma_k, alpha_k, rho_k). By construction
/// gamma_k e^{-alpha_k gamma_k} = 2 M_bar / eta for every k, alpha_k and
/// rho_k = alpha_k / eta decrease strictly to 0, and gamma_k increases.
struct PenaltySchedule {
  std::vector<double> gammas;
  std::vector<double> alphas;
  std::vector<double> rhos;
  double M_bar = 0.0;
  double eta = 0.0;

  int count() const { return static_cast<int>(gammas.size()); }

  double gamma_floor() const { return 2.0 * M_bar / eta; }

  /// Relative defect of the defining identity gamma e^{-alpha gamma} = 2M/eta.
  double identity_residual(int k) const {
    const double target = gamma_floor();
    const double got = gammas.at(k) * std::exp(-alphas.at(k) * gammas.at(k));
    return std::abs(got - target) / target;
  }

  /// The psi-margin defining the shrunken set C(k) = {x in C : psi(x) <= -alpha_k}.
  double inner_set_margin(int k) const { return alphas.at(k); }
};

inline PenaltySchedule make_schedule(double M_bar, double eta, double gamma0, double growth,
                                     int count) {
  if (!(M_bar > 0.0) || !(eta > 0.0)) throw ConfigError("make_schedule: M_bar and eta must be positive");
  if (!(growth > 1.0)) throw ConfigError("make_schedule: growth must exceed 1");
  if (count < 1) throw ConfigError("make_schedule: count must be >= 1");
  const double floor = 2.0 * M_bar / eta;
  if (!(gamma0 > floor))
    throw GammaTooSmall("gamma0 = " + std::to_string(gamma0) + " must exceed 2*M_bar/eta = " +
                        std::to_string(floor));
  PenaltySchedule s;
  s.M_bar = M_bar;
  s.eta = eta;
  s.gammas.resize(static_cast<std::size_t>(count));
  s.alphas.resize(static_cast<std::size_t>(count));
  s.rhos.resize(static_cast<std::size_t>(count));
  for (int k = 0; k < count; ++k) {
    const double g = gamma0 * std::pow(growth, k);
    s.gammas[static_cast<std::size_t>(k)] = g;
    s.alphas[static_cast<std::size_t>(k)] = std::log(eta * g / (2.0 * M_bar)) / g;
    s.rhos[static_cast<std::size_t>(k)] = s.alphas[static_cast<std::size_t>(k)] / eta;
  }
  // For gamma0 barely above the floor and slow growth, ln(c*gamma)/gamma can
  // still be on its increasing branch; the sequence contract requires strict
  // decrease, so reject such configurations.
  for (int k = 0; k + 1 < count; ++k) {
    if (!(s.alphas[static_cast<std::size_t>(k + 1)] < s.alphas[static_cast<std::size_t>(k)]))
      throw ScheduleNotMonotone("alpha_k not strictly decreasing at k = " + std::to_string(k) +
                                "; raise gamma0 or growth");
  }
  return s;
}

/// The shifted starting point c_bar_k: boundary starts are moved a distance
/// rho_k along -grad psi into the interior; interior starts are unchanged.
inline Vec shift_initial_point(const LevelSetC& C, const Vec& x0, double rho_k) {
  const double p = C.psi(x0);
  if (p < -C.bdry_tol) return x0;  // interior branch
  Vec g = C.grad(x0);
  const double gn = g.norm();
  if (gn < 2.0 * C.eta)
    throw ZeroGradientOnBoundary("shift_initial_point: ||grad psi|| below 2*eta at x0");
  return x0 - (rho_k / gn) * g;
}

/// Stage initial set C0(k): for boundary starts the whole localized set is
/// translated inward by rho_k along the unit gradient at x_bar(0).
inline StageEndpointSet stage_initial_set(const LevelSetC& C, const EndpointSet& C0,
                                          const Vec& x_bar_0, double delta0, double rho_k) {
  StageEndpointSet s;
  s.base = C0;
  s.ball_center = x_bar_0;
  s.ball_radius = delta0;
  s.C = nullptr;
  Vec shift = Vec::Zero(x_bar_0.size());
  if (C.psi(x_bar_0) >= -C.bdry_tol) {
    Vec g = C.grad(x_bar_0);
    const double gn = g.norm();
    if (gn < 2.0 * C.eta)
      throw ZeroGradientOnBoundary("stage_initial_set: ||grad psi|| below 2*eta at x_bar(0)");
    shift = -(rho_k / gn) * g;
  }
  s.translate = shift;
  return s;
}

/// Stage terminal set C1(k) = [ (C1 ∩ B_{delta0}(x_bar_1)) - x_bar_1 + x_gamma_1 ] ∩ C.
inline StageEndpointSet shifted_terminal_set(const LevelSetC& C, const EndpointSet& C1,
                                             const Vec& x_bar_1, const Vec& x_gamma_1,
                                             double delta0) {
  StageEndpointSet s;
  s.base = C1;
  s.ball_center = x_bar_1;
  s.ball_radius = delta0;
  s.translate = x_gamma_1 - x_bar_1;
  s.C = &C;
  return s;
}

}  // namespace sweep
