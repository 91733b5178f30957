#pragma once

#include "sweep/adjoint.hpp"
#include "sweep/certificate.hpp"
#include "sweep/dynamics.hpp"
#include "sweep/schedule.hpp"

#include <optional>
#include <utility>
#include <vector>

namespace sweep {

/// Anchors of the stage objective: the reference control and initial state the
/// proximal terms are centered on. In verification mode these are the known
/// minimizer; in discovery mode they bootstrap from the previous stage.
struct StageRefs {
  GridControl u_ref;
  Vec x0_ref;
};

double cost_J(const ProblemInstance& inst, const Trajectory& x, double z_terminal,
              const GridControl& u, const StageRefs& refs);

inline double cost_J(const ProblemInstance& inst, const Trajectory& x, double z_terminal,
                     const GridControl& u, const StageRefs& refs) {
  const double gval = inst.g(x.states.front(), x.states.back());
  if (!std::isfinite(gval)) throw GInfinite("endpoint pair outside dom g");
  return gval + 0.5 * ((u.values.front() - refs.u_ref.values.front()).squaredNorm() + z_terminal +
                       (x.states.front() - refs.x0_ref).squaredNorm());
}

struct StageProblem {
  const ProblemInstance* inst = nullptr;
  double gamma = 0.0;
  StageRefs refs;
  StageEndpointSet C1k;
  std::optional<StageEndpointSet> C0k;  // absent: x0 is frozen
  Vec x0_fixed;
  double mu = 10.0;
  bool enforce_trust = false;
  double delta = std::numeric_limits<double>::infinity();
};

struct StageEval {
  double cost = 0.0;    // the stage objective J
  double merit = 0.0;   // J + mu * d^2(x(1), C1(k))
  double g_value = 0.0;
  double z_terminal = 0.0;
  double endpoint_dist = 0.0;
  IntegrationResult fwd;
};

inline StageEval stage_evaluate(const StageProblem& sp, const Vec& x0, const GridControl& u,
                                bool record_trace) {
  StageEval ev;
  IntegrateOptions opts;
  opts.record_trace = record_trace;
  ev.fwd = integrate_penalized(*sp.inst, x0, u, sp.gamma, u.grid, opts);
  ev.z_terminal = z_accumulator(u, sp.refs.u_ref).back();
  ev.g_value = sp.inst->g(ev.fwd.traj.states.front(), ev.fwd.traj.states.back());
  ev.cost = cost_J(*sp.inst, ev.fwd.traj, ev.z_terminal, u, sp.refs);
  ev.endpoint_dist = sp.C1k.distance(ev.fwd.traj.states.back());
  ev.merit = ev.cost + sp.mu * ev.endpoint_dist * ev.endpoint_dist;
  return ev;
}

struct StageGradient {
  Vec d_x0;
  std::vector<Vec> d_u;
};

namespace detail {

struct JtScratch {
  Mat zeta, theta, hpsi, omega;
  Vec gpsi;
};

// J_x^T v and J_u^T v of the penalized field F = f - grad Phi - gamma e^{gamma psi} grad psi.
// The clamp on the exponent is part of the map: a saturated clamp zeroes the
// rank-one term's derivative.
inline void penalized_jt(const ProblemInstance& inst, double gamma, double t, const Vec& x,
                         const Vec& u, const Vec& v, Vec& jtx, Vec& jtu, JtScratch& ws) {
  const auto& C = *inst.geometry;
  inst.df_dx(t, x, u, ws.zeta);
  jtx = ws.zeta.transpose() * v;
  if (inst.phi_ext_hess) {
    inst.phi_ext_hess(x, ws.theta);
    jtx -= ws.theta * v;
  }
  const auto ce = clamped_exp(gamma * C.psi(x));
  const double E = gamma * ce.value;
  if (E != 0.0) {
    C.grad_psi(x, ws.gpsi);
    C.hess_psi(x, ws.hpsi);
    jtx -= E * (ws.hpsi * v);
    if (ce.in_band) jtx -= (gamma * E * ws.gpsi.dot(v)) * ws.gpsi;
  }
  inst.df_du(t, x, u, ws.omega);
  jtu = ws.omega.transpose() * v;
}

}  // namespace detail

/// Exact gradient of the discretized stage objective: the backward sweep
/// reverses the recorded RK4 substeps, the derivative-tracking term
/// contributes the slope mismatches, and the u(0)/x(0) proximal terms add
/// their linear parts.
inline StageGradient stage_gradient(const StageProblem& sp, const Vec& x0, const GridControl& u,
                                    const StageEval& ev) {
  const ProblemInstance& inst = *sp.inst;
  const StepTrace& trace = *ev.fwd.trace;
  const Grid& grid = u.grid;
  const int N = static_cast<int>(grid.size()) - 1;

  StageGradient gr;
  gr.d_u.assign(grid.size(), Vec::Zero(inst.m));

  // terminal seed: d(merit)/d(x_N)
  Vec g0(inst.n), g1(inst.n);
  inst.dg(ev.fwd.traj.states.front(), ev.fwd.traj.states.back(), g0, g1);
  Vec lam = g1;
  {
    const Vec xN = ev.fwd.traj.states.back();
    lam += 2.0 * sp.mu * (xN - sp.C1k.project(xN));
  }

  detail::JtScratch jt;
  Vec k1(inst.n), k2(inst.n), k3(inst.n);
  Vec x2s(inst.n), x3s(inst.n), x4s(inst.n);
  Vec dk1(inst.n), dk2(inst.n), dk3(inst.n), dk4(inst.n), dxs(inst.n);
  Vec ax(inst.n), au(inst.m), u_tmp(inst.m);
  PenaltyRhsScratch rhs_ws;

  for (int c = N - 1; c >= 0; --c) {
    const auto ci = static_cast<std::size_t>(c);
    const double t0 = grid[ci];
    const double hc = grid[ci + 1] - t0;
    const Vec& ua = u.values[ci];
    const Vec& ub = u.values[ci + 1];
    auto u_at = [&](double tau, Vec& out, double& w) {
      w = std::clamp((tau - t0) / hc, 0.0, 1.0);
      out = (1.0 - w) * ua + w * ub;
    };
    auto scatter = [&](double w, const Vec& du) {
      gr.d_u[ci] += (1.0 - w) * du;
      gr.d_u[ci + 1] += w * du;
    };
    for (int s = trace.cell_begin[ci + 1] - 1; s >= trace.cell_begin[ci]; --s) {
      const auto si = static_cast<std::size_t>(s);
      const double t = trace.ts[si];
      const double h = trace.hs[si];
      const Vec& xs = trace.xs[si];

      double w1, w23, w4;
      u_at(t, u_tmp, w1);
      penalty_rhs(inst, t, xs, u_tmp, sp.gamma, k1, rhs_ws);
      x2s = xs + (0.5 * h) * k1;
      u_at(t + 0.5 * h, u_tmp, w23);
      penalty_rhs(inst, t + 0.5 * h, x2s, u_tmp, sp.gamma, k2, rhs_ws);
      x3s = xs + (0.5 * h) * k2;
      penalty_rhs(inst, t + 0.5 * h, x3s, u_tmp, sp.gamma, k3, rhs_ws);
      x4s = xs + h * k3;

      dk1 = (h / 6.0) * lam;
      dk2 = (h / 3.0) * lam;
      dk3 = (h / 3.0) * lam;
      dk4 = (h / 6.0) * lam;
      dxs = lam;

      double w;
      // stage 4 at (t + h, x4s)
      u_at(t + h, u_tmp, w4);
      detail::penalized_jt(inst, sp.gamma, t + h, x4s, u_tmp, dk4, ax, au, jt);
      dxs += ax;
      dk3 += h * ax;
      scatter(w4, au);
      // stage 3 at (t + h/2, x3s)
      u_at(t + 0.5 * h, u_tmp, w);
      detail::penalized_jt(inst, sp.gamma, t + 0.5 * h, x3s, u_tmp, dk3, ax, au, jt);
      dxs += ax;
      dk2 += (0.5 * h) * ax;
      scatter(w23, au);
      // stage 2 at (t + h/2, x2s)
      detail::penalized_jt(inst, sp.gamma, t + 0.5 * h, x2s, u_tmp, dk2, ax, au, jt);
      dxs += ax;
      dk1 += (0.5 * h) * ax;
      scatter(w23, au);
      // stage 1 at (t, xs)
      u_at(t, u_tmp, w);
      detail::penalized_jt(inst, sp.gamma, t, xs, u_tmp, dk1, ax, au, jt);
      dxs += ax;
      scatter(w1, au);

      lam = dxs;
    }
  }

  // proximal and derivative-tracking terms
  gr.d_x0 = lam + g0 + (x0 - sp.refs.x0_ref);
  gr.d_u[0] += u.values.front() - sp.refs.u_ref.values.front();
  for (int c = 0; c < N; ++c) {
    const auto ci = static_cast<std::size_t>(c);
    const double h = grid[ci + 1] - grid[ci];
    const Vec slope_diff = ((u.values[ci + 1] - u.values[ci]) -
                            (sp.refs.u_ref.values[ci + 1] - sp.refs.u_ref.values[ci])) /
                           h;
    gr.d_u[ci + 1] += slope_diff;
    gr.d_u[ci] -= slope_diff;
  }
  return gr;
}

// ---------------------------------------------------------------------------
// Stage solver: projected gradient with Barzilai-Borwein steps and an Armijo
// acceptance test on the merit, plus escalation of the terminal penalty.
// ---------------------------------------------------------------------------

struct SolveOptions {
  int max_iters = 300;
  double stage_tol = 1e-6;
  double mu0 = 10.0;
  double mu_growth = 10.0;
  int max_escalations = 6;
  double endpoint_tol = 1e-4;
  double armijo_c = 1e-4;
  int max_backtracks = 40;
  int merit_window = 1;  // 1 = monotone Armijo; >1 = nonmonotone acceptance for BB steps
  double progress_rtol = 1e-9;  // stop after several accepted steps below this relative decrease
  std::function<void(int iter, double merit, double pg)> on_iterate;  // after each accepted step
};

struct PenalizedSolveState {
  double gamma = 0.0;
  GridControl control;
  Vec x0;
  Trajectory trajectory;
  double z_terminal = 0.0;
  double cost = 0.0;     // stage objective J
  double g_value = 0.0;
  double grad_norm = 0.0;
  int iterations = 0;
  double mu_final = 0.0;
  double endpoint_dist = 0.0;
  IntegrationStats stats;
};

namespace detail {

inline GridControl project_control(const StageProblem& sp, const GridControl& u) {
  if (sp.enforce_trust) return project_pointwise(u, sp.inst->U, &sp.refs.u_ref, sp.delta);
  return project_pointwise(u, sp.inst->U);
}

inline double pg_norm(const StageProblem& sp, const Vec& x0, const GridControl& u,
                      const StageGradient& gr) {
  GridControl trial = u;
  for (std::size_t i = 0; i < u.values.size(); ++i) trial.values[i] -= gr.d_u[i];
  trial = project_control(sp, trial);
  double nrm = 0.0;
  for (std::size_t i = 0; i < u.values.size(); ++i)
    nrm = std::max(nrm, (trial.values[i] - u.values[i]).lpNorm<Eigen::Infinity>());
  if (sp.C0k) {
    const Vec x_trial = sp.C0k->project(x0 - gr.d_x0);
    nrm = std::max(nrm, (x_trial - x0).lpNorm<Eigen::Infinity>());
  }
  return nrm;
}

}  // namespace detail

inline PenalizedSolveState solve_stage(const ProblemInstance& inst, double gamma,
                                       const Vec& x0_init, const GridControl& u_init,
                                       StageProblem sp, const SolveOptions& opts) {
  sp.inst = &inst;
  sp.gamma = gamma;
  sp.mu = opts.mu0;

  GridControl u = detail::project_control(sp, u_init);
  Vec x0 = sp.C0k ? sp.C0k->project(x0_init) : sp.x0_fixed;

  PenalizedSolveState out;
  out.gamma = gamma;

  int total_iters = 0;
  StageEval ev = stage_evaluate(sp, x0, u, true);

  for (int esc = 0; esc <= opts.max_escalations; ++esc) {
    ev.merit = ev.cost + sp.mu * ev.endpoint_dist * ev.endpoint_dist;
    double step = 1.0;
    GridControl u_prev_accept = u;
    Vec x0_prev = x0;
    StageGradient gr_prev;
    bool have_prev = false;
    bool stalled = false;
    std::vector<double> merit_window(1, ev.merit);  // nonmonotone window for BB steps
    int noise_steps = 0;  // accepted steps with merit decrease below FP noise

    for (int it = 0; it < opts.max_iters; ++it, ++total_iters) {
      StageGradient gr = stage_gradient(sp, x0, u, ev);
      out.grad_norm = detail::pg_norm(sp, x0, u, gr);
      if (out.grad_norm <= opts.stage_tol) break;
      if (have_prev) {
        // BB1 step from the last accepted move
        double num = 0.0, den = 0.0;
        for (std::size_t i = 0; i < u.values.size(); ++i) {
          const Vec dz = u.values[i] - u_prev_accept.values[i];
          const Vec dg = gr.d_u[i] - gr_prev.d_u[i];
          num += dz.squaredNorm();
          den += dz.dot(dg);
        }
        if (sp.C0k) {
          const Vec dz = x0 - x0_prev;
          num += dz.squaredNorm();
          den += dz.dot(gr.d_x0 - gr_prev.d_x0);
        }
        if (den > 1e-16 && num > 0.0) step = std::clamp(num / den, 1e-8, 1e4);
      }
      u_prev_accept = u;
      x0_prev = x0;
      gr_prev = gr;

      bool accepted = false;
      double s = step;
      const double merit_ref = *std::max_element(merit_window.begin(), merit_window.end());
      for (int bt = 0; bt <= opts.max_backtracks; ++bt) {
        GridControl u_try = u;
        for (std::size_t i = 0; i < u.values.size(); ++i) u_try.values[i] -= s * gr.d_u[i];
        u_try = detail::project_control(sp, u_try);
        Vec x0_try = sp.C0k ? sp.C0k->project(Vec(x0 - s * gr.d_x0)) : x0;
        double move2 = 0.0;
        for (std::size_t i = 0; i < u.values.size(); ++i)
          move2 += (u_try.values[i] - u.values[i]).squaredNorm();
        move2 += (x0_try - x0).squaredNorm();
        if (move2 == 0.0) break;  // projection killed the step entirely
        StageEval ev_try;
        bool feasible = true;
        try {
          ev_try = stage_evaluate(sp, x0_try, u_try, true);
        } catch (const GInfinite&) {
          feasible = false;
        } catch (const LeftC&) {
          feasible = false;
        } catch (const NonFinite&) {
          feasible = false;
        } catch (const BlowUp&) {
          feasible = false;
        }
        if (feasible && ev_try.merit <= merit_ref - (opts.armijo_c / s) * move2) {
          const double decrease = ev.merit - ev_try.merit;
          u = std::move(u_try);
          x0 = std::move(x0_try);
          ev = std::move(ev_try);
          accepted = true;
          have_prev = true;
          merit_window.push_back(ev.merit);
          if (merit_window.size() > static_cast<std::size_t>(std::max(1, opts.merit_window)))
            merit_window.erase(merit_window.begin());
          noise_steps = (decrease <= opts.progress_rtol * (1.0 + std::abs(ev.merit))) ? noise_steps + 1 : 0;
          break;
        }
        s *= 0.5;
      }
      if (!accepted) {
        stalled = true;  // no descent at this mu; escalation may re-enable it
        break;
      }
      if (opts.on_iterate) opts.on_iterate(total_iters, ev.merit, out.grad_norm);
      if (noise_steps >= 5) break;  // progress stalled at noise level: converged
    }

    if (ev.endpoint_dist <= opts.endpoint_tol) break;
    if (esc == opts.max_escalations)
      throw Stalled("terminal set unreached at gamma = " + std::to_string(gamma) + ", distance " +
                    std::to_string(ev.endpoint_dist) +
                    (stalled ? " (no descent direction left)" : ""));
    sp.mu *= opts.mu_growth;
  }

  out.control = u;
  out.x0 = x0;
  out.trajectory = ev.fwd.traj;
  out.z_terminal = ev.z_terminal;
  out.cost = ev.cost;
  out.g_value = ev.g_value;
  out.iterations = total_iters;
  out.mu_final = sp.mu;
  out.endpoint_dist = ev.endpoint_dist;
  out.stats = ev.fwd.stats;
  return out;
}

// ---------------------------------------------------------------------------
// Continuation over the penalty schedule
// ---------------------------------------------------------------------------

struct ContinuationRefs {
  GridControl u_ref;  // the reference control u_bar on the output grid
  Vec x_bar_0;
  Vec x_bar_1;
};

struct ContinuationOptions {
  SolveOptions solve;
  double delta0 = 0.5;
  double stage_tol_early = 1e-4;  // relaxed tolerance for the coarse stages
  bool enforce_trust = true;
  double warm_start_offset = 0.5;  // initial control = proj(u_ref + offset)
};

struct ConvergenceRow {
  int k = 0;
  double gamma = 0.0;
  double cost = 0.0;
  double du_sup = 0.0;
  double dx_sup = 0.0;
  double grad_norm = 0.0;
};

struct ContinuationResult {
  std::vector<PenalizedSolveState> stages;
  std::vector<ConvergenceRow> table;
  Candidate candidate;
  double mu_last = 0.0;
};

/// Assembles the certificate candidate from a solved stage: the multiplier
/// track from the exponential, the adjoint from backward integration of the
/// penalized adjoint system seeded by the transversality condition (terminal
/// penalty gradient standing in for the normal-cone element), lambda from the
/// nontriviality normalization, and the measure recovered from the adjoint
/// residuals.
inline Candidate assemble_candidate(const ProblemInstance& inst, const PenalizedSolveState& st,
                                    const StageEndpointSet& C1k, double mu) {
  Candidate cand;
  cand.grid = st.trajectory.grid;
  cand.x = st.trajectory.states;
  cand.u = st.control;
  cand.xi = st.trajectory.xi;

  Vec g0(inst.n), g1(inst.n);
  inst.dg(st.trajectory.states.front(), st.trajectory.states.back(), g0, g1);
  const Vec xN = st.trajectory.states.back();
  const Vec cone_element = 2.0 * mu * (xN - C1k.project(xN));
  const Vec p_term_hat = -g1 - cone_element;

  std::vector<Vec> p_hat =
      adjoint_integrate_penalized(inst, st.trajectory, st.control, st.gamma, p_term_hat);

  const double scale = 1.0 / (p_hat.back().norm() + 1.0);  // stage lambda = 1 before normalizing
  cand.lambda = scale;
  cand.p.grid = cand.grid;
  cand.p.values.resize(p_hat.size());
  for (std::size_t i = 0; i < p_hat.size(); ++i) cand.p.values[i] = scale * p_hat[i];

  const DerivativeBundle bundle = build_bundle(inst, cand.grid, cand.x, cand.u.values);
  cand.nu = recover_measure(inst, cand.grid, cand.x, cand.xi, cand.p, bundle);
  return cand;
}

/// Runs the gamma-continuation: each stage warm-starts from the previous one,
/// shifted stage endpoint sets follow the schedule, and the final stage is
/// turned into a certificate candidate.
inline ContinuationResult continuation_solve(const ProblemInstance& inst,
                                             const PenaltySchedule& schedule, const Grid& grid,
                                             std::optional<ContinuationRefs> refs,
                                             const ContinuationOptions& copts = {}) {
  const auto& C = *inst.geometry;
  const bool verification = refs.has_value();

  ContinuationRefs work_refs;
  if (verification) {
    work_refs = *refs;
  } else {
    // discovery bootstrap: anchor on a C0 witness and the projected zero control
    Vec witness;
    switch (inst.C0.kind) {
      case EndpointSet::Kind::Singleton: witness = inst.C0.point; break;
      case EndpointSet::Kind::HalfLineRay: witness = inst.C0.origin; break;
      default: witness = inst.C0.project(Vec::Zero(inst.n)); break;
    }
    work_refs.x_bar_0 = witness;
    work_refs.x_bar_1 = Vec::Zero(inst.n);
    work_refs.u_ref = project_pointwise(GridControl::constant(grid, Vec::Zero(inst.m)), inst.U);
  }

  ContinuationResult res;
  GridControl u_warm = work_refs.u_ref;
  {
    // start the first stage away from the anchor so the solve is not seeded
    // with its own answer
    for (auto& v : u_warm.values) v.array() += copts.warm_start_offset;
  }

  const bool c0_singleton = inst.C0.kind == EndpointSet::Kind::Singleton;
  GridControl u_prev = u_warm;
  std::vector<Vec> x_prev;
  double mu_last = 0.0;

  for (int k = 0; k < schedule.count(); ++k) {
    const double gamma = schedule.gammas[static_cast<std::size_t>(k)];
    const double rho_k = schedule.rhos[static_cast<std::size_t>(k)];
    const Vec c_bar = shift_initial_point(C, work_refs.x_bar_0, rho_k);

    StageProblem sp;
    sp.refs.u_ref = work_refs.u_ref;
    sp.refs.x0_ref = work_refs.x_bar_0;
    sp.enforce_trust = verification && copts.enforce_trust;
    sp.delta = inst.delta;
    if (c0_singleton) {
      sp.x0_fixed = c_bar;
    } else {
      sp.C0k = stage_initial_set(C, inst.C0, work_refs.x_bar_0, copts.delta0, rho_k);
    }

    if (verification) {
      const auto ref_flow = integrate_penalized(inst, c_bar, work_refs.u_ref, gamma, grid);
      sp.C1k = shifted_terminal_set(C, inst.C1, work_refs.x_bar_1, ref_flow.traj.states.back(),
                                    copts.delta0);
    } else {
      StageEndpointSet c1k;
      c1k.base = inst.C1;
      c1k.translate = Vec::Zero(inst.n);
      c1k.C = &C;
      sp.C1k = c1k;
    }

    SolveOptions sopts = copts.solve;
    if (k + 1 < schedule.count()) sopts.stage_tol = std::max(copts.solve.stage_tol, copts.stage_tol_early);

    PenalizedSolveState st;
    try {
      st = solve_stage(inst, gamma, c_bar, u_warm, sp, sopts);
    } catch (Stalled& e) {
      throw Stalled("stage " + std::to_string(k) + ": " + e.what());
    }
    mu_last = st.mu_final;

    ConvergenceRow row;
    row.k = k;
    row.gamma = gamma;
    row.cost = st.cost;
    row.grad_norm = st.grad_norm;
    if (k > 0) {
      row.du_sup = w12_distance(st.control, u_prev).first;
      row.dx_sup = sup_norm(st.trajectory.states, x_prev);
    }
    res.table.push_back(row);

    u_prev = st.control;
    x_prev = st.trajectory.states;
    u_warm = st.control;
    if (!verification) {
      work_refs.u_ref = st.control;  // bootstrap the anchors forward
    }
    res.stages.push_back(std::move(st));
  }

  // rebuild the final stage's terminal set for the candidate assembly
  const auto& last = res.stages.back();
  StageEndpointSet C1k_last;
  if (verification) {
    const auto ref_flow = integrate_penalized(
        inst, shift_initial_point(C, work_refs.x_bar_0, schedule.rhos.back()), work_refs.u_ref,
        schedule.gammas.back(), grid);
    C1k_last = shifted_terminal_set(C, inst.C1, work_refs.x_bar_1, ref_flow.traj.states.back(),
                                    copts.delta0);
  } else {
    C1k_last.base = inst.C1;
    C1k_last.translate = Vec::Zero(inst.n);
    C1k_last.C = &C;
  }
  res.candidate = assemble_candidate(inst, last, C1k_last, mu_last);
  res.mu_last = mu_last;
  return res;
}

}  // namespace sweep
