#pragma once

#include "sweep/controls.hpp"
#include "sweep/instance.hpp"

#include <cmath>
#include <optional>
#include <vector>

namespace sweep {

/// A discretized trajectory of the penalized or limiting dynamic: node states,
/// right-sided node velocities (last = left) and the multiplier track xi.
struct Trajectory {
  Grid grid;
  std::vector<Vec> states;
  std::vector<Vec> velocities;
  std::vector<double> xi;

  int cells() const { return static_cast<int>(grid.size()) - 1; }
};

struct IntegrationStats {
  double max_psi = -std::numeric_limits<double>::infinity();
  double max_xi = 0.0;
  double max_speed = 0.0;
  long total_substeps = 0;
};

/// Accepted substeps of one forward integration. Replaying them freezes the
/// step-size control, which makes the discrete map smooth in (x0, u) — the
/// property the adjoint gradient and its finite-difference oracle rely on.
struct StepTrace {
  std::vector<double> ts;       // substep start times
  std::vector<double> hs;       // substep sizes
  std::vector<Vec> xs;          // substep start states
  std::vector<int> cell_begin;  // substep index range of grid cell i: [cell_begin[i], cell_begin[i+1])
};

struct PenaltyRhsScratch {
  Vec fx, gpsi, phig;
};

/// Right-hand side of the penalized system: f_Phi(t,x,u) - gamma e^{gamma psi(x)} grad psi(x).
/// The exponent is clamped; transient excursions with psi(x) > 0 stay finite.
inline void penalty_rhs(const ProblemInstance& inst, double t, const Vec& x, const Vec& u,
                        double gamma, Vec& out, PenaltyRhsScratch& ws, double* xi_out = nullptr) {
  const auto& C = *inst.geometry;
  inst.f(t, x, u, ws.fx);
  if (inst.phi_ext_grad) {
    inst.phi_ext_grad(x, ws.phig);
    ws.fx -= ws.phig;
  }
  const double psi = C.psi(x);
  const double E = gamma * clamped_exp(gamma * psi).value;  // = xi_gamma at x
  C.grad_psi(x, ws.gpsi);
  out = ws.fx - E * ws.gpsi;
  if (xi_out) *xi_out = E;
  if (!out.allFinite()) throw NonFinite("penalty_rhs produced a non-finite velocity");
}

inline Vec penalty_rhs(const ProblemInstance& inst, double t, const Vec& x, const Vec& u,
                       double gamma) {
  Vec out(inst.n);
  PenaltyRhsScratch ws;
  penalty_rhs(inst, t, x, u, gamma, out, ws);
  return out;
}

struct IntegrateOptions {
  bool record_trace = false;
  double cfl = 1.5;              // fraction of the explicit RK4 stability limit
  double penalty_change = 1.10;  // max factor the penalty term may change per step
  int max_halvings = 80;
};

struct IntegrationResult {
  Trajectory traj;
  IntegrationStats stats;
  std::optional<StepTrace> trace;
};

namespace detail {

struct Rk4Scratch {
  Vec k1, k2, k3, k4, xa, u_tmp;
  PenaltyRhsScratch rhs;
};

// One classical RK4 step of the penalized system; control values interpolate
// linearly inside the given grid cell.
inline void rk4_step(const ProblemInstance& inst, double gamma, double t, double h, const Vec& x,
                     const GridControl& u, int cell, Vec& x_out, Rk4Scratch& ws) {
  const double t0 = u.grid[static_cast<std::size_t>(cell)];
  const double hc = u.grid[static_cast<std::size_t>(cell) + 1] - t0;
  const Vec& ua = u.values[static_cast<std::size_t>(cell)];
  const Vec& ub = u.values[static_cast<std::size_t>(cell) + 1];
  auto u_at = [&](double tau, Vec& out) {
    const double w = std::clamp((tau - t0) / hc, 0.0, 1.0);
    out = (1.0 - w) * ua + w * ub;
  };
  u_at(t, ws.u_tmp);
  penalty_rhs(inst, t, x, ws.u_tmp, gamma, ws.k1, ws.rhs);
  ws.xa = x + (0.5 * h) * ws.k1;
  u_at(t + 0.5 * h, ws.u_tmp);
  penalty_rhs(inst, t + 0.5 * h, ws.xa, ws.u_tmp, gamma, ws.k2, ws.rhs);
  ws.xa = x + (0.5 * h) * ws.k2;
  penalty_rhs(inst, t + 0.5 * h, ws.xa, ws.u_tmp, gamma, ws.k3, ws.rhs);
  ws.xa = x + h * ws.k3;
  u_at(t + h, ws.u_tmp);
  penalty_rhs(inst, t + h, ws.xa, ws.u_tmp, gamma, ws.k4, ws.rhs);
  x_out = x + (h / 6.0) * (ws.k1 + 2.0 * ws.k2 + 2.0 * ws.k3 + ws.k4);
}

}  // namespace detail

/// Integrates the penalized system forward over the output grid with adaptive
/// internal substeps. The step size tracks the explicit stability limit of the
/// penalty stiffness and is halved until the penalty magnitude changes by less
/// than the configured factor across the step.
inline IntegrationResult integrate_penalized(const ProblemInstance& inst, const Vec& x0,
                                             const GridControl& u, double gamma, const Grid& grid,
                                             const IntegrateOptions& opts = {}) {
  const auto& C = *inst.geometry;
  const int N = static_cast<int>(grid.size()) - 1;
  if (N < 1) throw ConfigError("integrate_penalized: empty grid");
  require_same_grid(grid, u.grid);
  if (C.psi(x0) > C.bdry_tol)
    throw LeftC("initial state has psi = " + std::to_string(C.psi(x0)) + " > band");

  IntegrationResult res;
  res.traj.grid = grid;
  res.traj.states.reserve(grid.size());
  res.traj.velocities.reserve(grid.size());
  res.traj.xi.reserve(grid.size());
  if (opts.record_trace) {
    res.trace.emplace();
    res.trace->cell_begin.assign(static_cast<std::size_t>(N) + 1, 0);
  }

  detail::Rk4Scratch ws;
  Vec x = x0;
  Vec x_new(inst.n);
  Vec g(inst.n);

  // Crude local Lipschitz scale of the unpenalized field, for the step bound.
  Mat J(inst.n, inst.n);
  inst.df_dx(grid.front(), x0, u.values.front(), J);
  const double lf = 1.5 * J.norm() + 1.0;
  const double hess_bound = 2.0 * C.m_psi;
  const double pen_floor = 1e-3 * (inst.M_bar + 1.0);
  const double h_min = 1e-14 * (grid.back() - grid.front());

  auto penalty_size = [&](const Vec& xx, double& E_out, double& psi_out) {
    psi_out = C.psi(xx);
    E_out = gamma * clamped_exp(gamma * psi_out).value;
    C.grad_psi(xx, g);
    return E_out * g.norm();
  };

  auto record_node = [&](int i, double t) {
    res.traj.states.push_back(x);
    u.eval(t, ws.u_tmp);
    Vec v(inst.n);
    double xi_val = 0.0;
    penalty_rhs(inst, t, x, ws.u_tmp, gamma, v, ws.rhs, &xi_val);
    res.traj.velocities.push_back(v);
    res.traj.xi.push_back(xi_val);
    res.stats.max_psi = std::max(res.stats.max_psi, C.psi(x));
    res.stats.max_xi = std::max(res.stats.max_xi, xi_val);
    res.stats.max_speed = std::max(res.stats.max_speed, v.norm());
    (void)i;
  };

  record_node(0, grid.front());

  for (int i = 0; i < N; ++i) {
    if (res.trace) res.trace->cell_begin[static_cast<std::size_t>(i)] = static_cast<int>(res.trace->ts.size());
    double t = grid[static_cast<std::size_t>(i)];
    const double t_end = grid[static_cast<std::size_t>(i) + 1];
    int psi_rejects = 0;
    while (t < t_end - 1e-15 * (grid.back() - grid.front())) {
      double E = 0.0, psi_here = 0.0;
      const double pen_old = penalty_size(x, E, psi_here);
      const double g2 = g.squaredNorm();
      const double rate = E * (gamma * g2 + hess_bound) + lf;
      double h = std::min(t_end - t, opts.cfl / rate);
      // When drifting toward the boundary, a full step may cross several
      // e-folds of the exponential: the values saturate harmlessly but the
      // step Jacobian scales with the stage-point stiffness. Cap h against
      // the stiffness at the predicted end-of-step state (fixed point), and
      // never close more than half the remaining gap to psi = 0 at once.
      {
        u.eval(t, ws.u_tmp);
        inst.eval_f_phi(t, x, ws.u_tmp, ws.k1);
        const double psidot = g.dot(ws.k1) - E * g2;
        if (psidot > 0.0 && psi_here < 0.0) {
          h = std::min(h, (0.5 * (-psi_here) + 0.05 / gamma) / psidot);
          for (int pass = 0; pass < 8; ++pass) {
            const double psi_end = std::min(psi_here + h * psidot, 0.0);
            const double E_end = gamma * clamped_exp(gamma * psi_end).value;
            const double h_new = std::min(h, opts.cfl / (E_end * (gamma * g2 + hess_bound) + lf));
            if (h_new >= 0.95 * h) break;
            h = h_new;
          }
        }
      }
      bool accepted = false;
      for (int attempt = 0; attempt <= opts.max_halvings; ++attempt) {
        try {
          detail::rk4_step(inst, gamma, t, h, x, u, i, x_new, ws);
        } catch (const NonFinite&) {
          h *= 0.5;  // an intermediate stage overflowed; retry smaller
          continue;
        }
        if (!x_new.allFinite()) {
          h *= 0.5;
          continue;
        }
        const double psi_new = C.psi(x_new);
        if (psi_new > C.bdry_tol) {
          if (h <= h_min && ++psi_rejects > 16)
            throw LeftC("psi persistently above the boundary band near t = " + std::to_string(t));
          h *= 0.5;
          continue;
        }
        double E_new = 0.0, psi_new_dummy = 0.0;
        const double pen_new = penalty_size(x_new, E_new, psi_new_dummy);
        if (std::max(pen_old, pen_new) > pen_floor) {
          const double lo = std::min(pen_old, pen_new) + 1e-300;
          const double hi = std::max(pen_old, pen_new);
          if (hi / lo > opts.penalty_change && h > h_min) {
            h *= 0.5;
            continue;
          }
        }
        accepted = true;
        break;
      }
      if (!accepted) throw BlowUp("step control failed near t = " + std::to_string(t));
      if (res.trace) {
        res.trace->ts.push_back(t);
        res.trace->hs.push_back(h);
        res.trace->xs.push_back(x);
      }
      ++res.stats.total_substeps;
      if (res.stats.total_substeps > 200'000'000L) throw BlowUp("substep budget exhausted");
      x = x_new;
      t += h;
    }
    record_node(i + 1, t_end);
  }
  if (res.trace) res.trace->cell_begin[static_cast<std::size_t>(N)] = static_cast<int>(res.trace->ts.size());
  return res;
}

/// Replays a recorded step sequence with (possibly perturbed) inputs and
/// returns the terminal state plus node states. Used by the gradient check:
/// with frozen steps the discrete map is differentiable.
inline std::vector<Vec> replay_with_trace(const ProblemInstance& inst, const Vec& x0,
                                          const GridControl& u, double gamma,
                                          const StepTrace& trace, const Grid& grid) {
  detail::Rk4Scratch ws;
  Vec x = x0;
  Vec x_new(inst.n);
  std::vector<Vec> nodes;
  nodes.reserve(grid.size());
  nodes.push_back(x);
  const int N = static_cast<int>(grid.size()) - 1;
  for (int i = 0; i < N; ++i) {
    for (int s = trace.cell_begin[static_cast<std::size_t>(i)];
         s < trace.cell_begin[static_cast<std::size_t>(i) + 1]; ++s) {
      detail::rk4_step(inst, gamma, trace.ts[static_cast<std::size_t>(s)],
                       trace.hs[static_cast<std::size_t>(s)], x, u, i, x_new, ws);
      x = x_new;
    }
    nodes.push_back(x);
  }
  return nodes;
}

/// Recovers the sweeping multiplier from a trajectory: zero off the boundary
/// band, ||xdot - f_Phi|| / ||grad psi|| on it.
inline std::vector<double> reconstruct_xi(const ProblemInstance& inst, const Trajectory& traj,
                                          const GridControl& u, double band = -1.0) {
  const auto& C = *inst.geometry;
  if (band < 0.0) band = C.bdry_tol;
  require_same_grid(traj.grid, u.grid);
  std::vector<double> xi(traj.grid.size(), 0.0);
  Vec fphi(inst.n), g(inst.n), u_t(inst.m);
  for (std::size_t i = 0; i < traj.grid.size(); ++i) {
    const Vec& x = traj.states[i];
    if (C.classify_with_band(x, band) == Region::DeepInterior) {
      xi[i] = 0.0;
      continue;
    }
    u.eval(traj.grid[i], u_t);
    inst.eval_f_phi(traj.grid[i], x, u_t, fphi);
    C.grad_psi(x, g);
    const double gn = g.norm();
    if (gn < 1e-12)
      throw ZeroGradientOnBoundary("reconstruct_xi: ||grad psi|| = 0 at a boundary node");
    xi[i] = (traj.velocities[i] - fphi).norm() / gn;
  }
  return xi;
}

/// Classical catching-up oracle: x_{i+1} = proj_C(x_i + h f_Phi). Independent
/// of the penalty path; used for cross-validation.
inline Trajectory integrate_catching_up(const ProblemInstance& inst, const Vec& x0,
                                        const GridControl& u, const Grid& grid) {
  const auto& C = *inst.geometry;
  require_same_grid(grid, u.grid);
  const int N = static_cast<int>(grid.size()) - 1;
  double h_max = 0.0;
  for (int i = 0; i < N; ++i)
    h_max = std::max(h_max, grid[static_cast<std::size_t>(i) + 1] - grid[static_cast<std::size_t>(i)]);
  if (!(h_max * inst.M_bar < C.eta / (2.0 * C.m_psi)))
    throw OutsideProxRadius("catching-up step too large: h*M_bar = " +
                            std::to_string(h_max * inst.M_bar) + " >= eta/(2 m_psi) = " +
                            std::to_string(C.eta / (2.0 * C.m_psi)));
  if (C.psi(x0) > C.bdry_tol) throw LeftC("catching-up: x0 outside C");

  Trajectory traj;
  traj.grid = grid;
  traj.states.reserve(grid.size());
  Vec x = x0;
  Vec fphi(inst.n), u_t(inst.m);
  traj.states.push_back(x);
  for (int i = 0; i < N; ++i) {
    const double t = grid[static_cast<std::size_t>(i)];
    const double h = grid[static_cast<std::size_t>(i) + 1] - t;
    u.eval(t, u_t);
    inst.eval_f_phi(t, x, u_t, fphi);
    x = project_onto_C(C, Vec(x + h * fphi));
    traj.states.push_back(x);
  }
  traj.velocities.resize(grid.size());
  for (int i = 0; i < N; ++i) {
    const double h = grid[static_cast<std::size_t>(i) + 1] - grid[static_cast<std::size_t>(i)];
    traj.velocities[static_cast<std::size_t>(i)] =
        (traj.states[static_cast<std::size_t>(i) + 1] - traj.states[static_cast<std::size_t>(i)]) / h;
  }
  traj.velocities[static_cast<std::size_t>(N)] = traj.velocities[static_cast<std::size_t>(N) - 1];
  traj.xi = reconstruct_xi(inst, traj, u);
  return traj;
}

/// The three Lemma-grade path bounds, checked against a trajectory.
struct TrajectoryBounds {
  double max_psi = -std::numeric_limits<double>::infinity();
  double max_xi = 0.0;
  double max_speed = 0.0;
  double xi_bound = 0.0;
  double speed_bound = 0.0;
  double psi_band = 0.0;
  bool ok = false;
};

inline TrajectoryBounds check_trajectory_bounds(const ProblemInstance& inst, const Trajectory& traj,
                                                double tol_psi = 1e-8, double tol_xi = 1e-8,
                                                double tol_speed = 1e-6) {
  const auto& C = *inst.geometry;
  TrajectoryBounds b;
  b.psi_band = tol_psi;
  b.xi_bound = 2.0 * inst.M_bar / C.eta;
  b.speed_bound = inst.M_bar + 2.0 * inst.M_bar * C.m_psi_bar / C.eta;
  for (std::size_t i = 0; i < traj.grid.size(); ++i) {
    b.max_psi = std::max(b.max_psi, C.psi(traj.states[i]));
    b.max_xi = std::max(b.max_xi, traj.xi[i]);
    b.max_speed = std::max(b.max_speed, traj.velocities[i].norm());
  }
  b.ok = b.max_psi <= tol_psi && b.max_xi <= b.xi_bound + tol_xi &&
         b.max_speed <= b.speed_bound + tol_speed;
  return b;
}

}  // namespace sweep
