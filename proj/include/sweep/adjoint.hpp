#pragma once

#include "sweep/dynamics.hpp"

#include <vector>

namespace sweep {

namespace detail {

struct AdjointScratch {
  Vec u_t, gpsi, k1, k2, k3, k4, pa;
  Mat zeta, theta, hpsi;
};

// Right-hand side of the penalized adjoint system:
//   pdot = -(d f_Phi/dx)^T p + gamma e^{gamma psi} Hpsi p
//          + gamma^2 e^{gamma psi} grad psi <grad psi, p>.
inline void adjoint_rhs(const ProblemInstance& inst, double gamma, double t, const Vec& x,
                        const Vec& u, const Vec& p, Vec& out, AdjointScratch& ws) {
  const auto& C = *inst.geometry;
  inst.df_dx(t, x, u, ws.zeta);
  if (inst.phi_ext_hess) {
    inst.phi_ext_hess(x, ws.theta);
    ws.zeta -= ws.theta;  // Jacobian of f_Phi
  }
  const double E = gamma * clamped_exp(gamma * C.psi(x)).value;
  C.grad_psi(x, ws.gpsi);
  C.hess_psi(x, ws.hpsi);
  out = -ws.zeta.transpose() * p + E * (ws.hpsi * p) + (gamma * E * ws.gpsi.dot(p)) * ws.gpsi;
  if (!out.allFinite()) throw BlowUp("adjoint_rhs produced non-finite values");
}

}  // namespace detail

/// Backward integration of the penalized adjoint system along a stored
/// trajectory, from p(t_b) = p_terminal. States between nodes interpolate
/// linearly; the substep size follows the penalty stiffness scale.
inline std::vector<Vec> adjoint_integrate_penalized(const ProblemInstance& inst,
                                                    const Trajectory& traj, const GridControl& u,
                                                    double gamma, const Vec& p_terminal,
                                                    double cfl = 1.2) {
  const auto& C = *inst.geometry;
  require_same_grid(traj.grid, u.grid);
  const int N = traj.cells();
  std::vector<Vec> p_nodes(traj.grid.size());
  p_nodes[static_cast<std::size_t>(N)] = p_terminal;

  detail::AdjointScratch ws;
  Vec p = p_terminal;
  Vec x_t(inst.n);

  auto state_at = [&](int cell, double t, Vec& out) {
    const double t0 = traj.grid[static_cast<std::size_t>(cell)];
    const double h = traj.grid[static_cast<std::size_t>(cell) + 1] - t0;
    const double w = std::clamp((t - t0) / h, 0.0, 1.0);
    out = (1.0 - w) * traj.states[static_cast<std::size_t>(cell)] +
          w * traj.states[static_cast<std::size_t>(cell) + 1];
  };

  const double hess_bound = 2.0 * C.m_psi;
  Mat J(inst.n, inst.n);
  inst.df_dx(traj.grid.front(), traj.states.front(), u.values.front(), J);
  const double lf = 1.5 * J.norm() + 1.0;

  for (int i = N - 1; i >= 0; --i) {
    const double t_lo = traj.grid[static_cast<std::size_t>(i)];
    double t = traj.grid[static_cast<std::size_t>(i) + 1];
    while (t > t_lo + 1e-15 * (traj.grid.back() - traj.grid.front())) {
      state_at(i, t, x_t);
      const double E = gamma * clamped_exp(gamma * C.psi(x_t)).value;
      C.grad_psi(x_t, ws.gpsi);
      const double rate = E * (gamma * ws.gpsi.squaredNorm() + hess_bound) + lf;
      const double h = std::min(t - t_lo, cfl / rate);

      auto eval = [&](double tau, const Vec& pp, Vec& out) {
        state_at(i, tau, x_t);
        u.eval(tau, ws.u_t);
        detail::adjoint_rhs(inst, gamma, tau, x_t, ws.u_t, pp, out, ws);
      };
      eval(t, p, ws.k1);
      ws.pa = p - (0.5 * h) * ws.k1;
      eval(t - 0.5 * h, ws.pa, ws.k2);
      ws.pa = p - (0.5 * h) * ws.k2;
      eval(t - 0.5 * h, ws.pa, ws.k3);
      ws.pa = p - h * ws.k3;
      eval(t - h, ws.pa, ws.k4);
      p -= (h / 6.0) * (ws.k1 + 2.0 * ws.k2 + 2.0 * ws.k3 + ws.k4);
      if (!p.allFinite()) throw BlowUp("adjoint integration diverged near t = " + std::to_string(t));
      t -= h;
    }
    p_nodes[static_cast<std::size_t>(i)] = p;
  }
  return p_nodes;
}

}  // namespace sweep
