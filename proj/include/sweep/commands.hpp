#pragma once

#include "sweep/config.hpp"
#include "sweep/csvio.hpp"
#include "sweep/json_io.hpp"
#include "sweep/optimizer.hpp"

#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>

namespace sweep::cmd {

namespace fs = std::filesystem;

struct Exit {
  static constexpr int ok = 0;
  static constexpr int certificate_fail = 1;
  static constexpr int integration_fail = 2;
  static constexpr int config_violation = 3;
  static constexpr int optimizer_stall = 4;
  static constexpr int io_error = 5;
};

inline ProblemInstance load_instance(const RunConfig& cfg) {
  const std::string name = cfg.get_string("instance", "annulus_example");
  return builtin(name, cfg.prefixed_doubles("instance."));
}

inline Grid make_grid(const RunConfig& cfg, const ProblemInstance& inst) {
  const int n = cfg.get_positive_int("grid.n", 2000);
  return uniform_grid(inst.t_a, inst.t_b, n);
}

inline PenaltySchedule load_schedule(const RunConfig& cfg, const ProblemInstance& inst) {
  const double eta = inst.geometry->eta;
  const double gamma0 = cfg.get_positive("schedule.gamma0", 4.0 * inst.M_bar / eta);
  const double growth = cfg.get_positive("schedule.growth", 3.0);
  const int count = cfg.get_positive_int("schedule.count", 8);
  return make_schedule(inst.M_bar, eta, gamma0, growth, count);
}

inline SolveOptions load_solve_options(const RunConfig& cfg, const ProblemInstance& inst) {
  SolveOptions o;
  o.max_iters = cfg.get_positive_int("optimizer.max_iters", 250);
  o.stage_tol = cfg.get_positive("optimizer.stage_tol", 2e-6);
  o.mu0 = cfg.get_positive("optimizer.mu0", 10.0);
  o.mu_growth = cfg.get_positive("optimizer.mu_growth", 10.0);
  o.max_escalations = cfg.get_positive_int("optimizer.max_escalations", 6);
  // endpoint tolerance scales with the diameter of C
  Rng rng(cfg.seed());
  double max_norm = 0.0;
  for (int i = 0; i < 200; ++i) max_norm = std::max(max_norm, inst.sampler.in_set(rng).norm());
  o.endpoint_tol = cfg.get_positive("optimizer.endpoint_tol_factor", 1e-4) * 2.0 * max_norm;
  return o;
}

/// Reference control on the grid: the closed form when the instance has one,
/// otherwise the projected zero control.
inline GridControl reference_control(const ProblemInstance& inst, const Grid& grid) {
  if (has_closed_form(inst.name)) {
    const auto cf = closed_form_solution(inst.name);
    return GridControl::from_function(grid, cf.u);
  }
  return project_pointwise(GridControl::constant(grid, Vec::Zero(inst.m)), inst.U);
}

inline Vec default_x0(const ProblemInstance& inst) {
  switch (inst.C0.kind) {
    case EndpointSet::Kind::Singleton: return inst.C0.point;
    case EndpointSet::Kind::HalfLineRay: return inst.C0.origin;
    default: return inst.C0.project(Vec::Zero(inst.n));
  }
}

inline std::optional<Vec> parse_vector(const RunConfig& cfg, const std::string& key, int n) {
  if (!cfg.has(key)) return std::nullopt;
  std::stringstream ss(cfg.get_string(key, ""));
  Vec v(n);
  std::string cell;
  for (int i = 0; i < n; ++i) {
    if (!std::getline(ss, cell, ',')) throw ConfigError(key + ": expected " + std::to_string(n) + " components");
    v(i) = detail::parse_double(cell, key);
  }
  return v;
}

/// alpha and rho for a single gamma, via the schedule identity.
inline std::pair<double, double> alpha_rho_for(const ProblemInstance& inst, double gamma) {
  const double eta = inst.geometry->eta;
  const double alpha = std::log(eta * gamma / (2.0 * inst.M_bar)) / gamma;
  return {alpha, alpha / eta};
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

inline int cmd_simulate(const RunConfig& cfg, const fs::path& out_dir,
                        const std::string& control_file = "") {
  const ProblemInstance inst = load_instance(cfg);
  const Grid grid = make_grid(cfg, inst);
  const double gamma = cfg.get_positive("gamma", 1e4);
  if (!(gamma > 2.0 * inst.M_bar / inst.geometry->eta))
    throw GammaTooSmall("simulate: gamma = " + std::to_string(gamma) + " <= 2*M_bar/eta = " +
                        std::to_string(2.0 * inst.M_bar / inst.geometry->eta));

  GridControl u = control_file.empty()
                      ? reference_control(inst, grid)
                      : GridControl{};
  if (!control_file.empty()) {
    const GridControl raw = read_control_csv(control_file, inst.m);
    u = GridControl::from_function(grid, [&raw](double t) { return raw.eval(t); });
  }

  Vec x0;
  if (auto v = parse_vector(cfg, "x0", inst.n)) {
    x0 = *v;
  } else {
    const auto [alpha, rho] = alpha_rho_for(inst, gamma);
    x0 = shift_initial_point(*inst.geometry, default_x0(inst), rho);
  }

  const auto res = integrate_penalized(inst, x0, u, gamma, grid);
  atomic_write(out_dir / "trajectory.csv", trajectory_csv(res.traj, u));

  const auto bounds = check_trajectory_bounds(inst, res.traj);
  std::ostringstream sum;
  sum << "max_psi=" << fmt_sig(bounds.max_psi) << "\nmax_xi=" << fmt_sig(bounds.max_xi)
      << "\nmax_speed=" << fmt_sig(bounds.max_speed) << "\nxi_bound=" << fmt_sig(bounds.xi_bound)
      << "\nspeed_bound=" << fmt_sig(bounds.speed_bound)
      << "\nbounds_ok=" << (bounds.ok ? "1" : "0") << "\n";
  atomic_write(out_dir / "summary.txt", sum.str());
  std::cout << sum.str();
  return Exit::ok;
}

// ---------------------------------------------------------------------------
// optimize
// ---------------------------------------------------------------------------

inline int cmd_optimize(const RunConfig& cfg, const fs::path& out_dir) {
  const ProblemInstance inst = load_instance(cfg);
  const Grid grid = make_grid(cfg, inst);
  const PenaltySchedule schedule = load_schedule(cfg, inst);

  ContinuationOptions copts;
  copts.solve = load_solve_options(cfg, inst);
  copts.delta0 = cfg.get_positive("delta0", std::min(inst.delta, 0.5));
  copts.warm_start_offset = cfg.get_double("optimizer.warm_start_offset", 0.5);
  copts.stage_tol_early = cfg.get_positive("optimizer.stage_tol_early", 1e-4);

  std::string refs_mode = cfg.get_string("refs", has_closed_form(inst.name) ? "analytic" : "self");
  std::optional<ContinuationRefs> refs;
  if (refs_mode == "analytic") {
    if (!has_closed_form(inst.name))
      throw ConfigError("refs=analytic but instance has no closed form");
    const auto cf = closed_form_solution(inst.name);
    ContinuationRefs r;
    r.u_ref = GridControl::from_function(grid, cf.u);
    r.x_bar_0 = cf.x(inst.t_a);
    r.x_bar_1 = cf.x(inst.t_b);
    refs = r;
  } else if (refs_mode != "self") {
    throw ConfigError("refs must be 'analytic' or 'self'");
  }

  const ContinuationResult res = continuation_solve(inst, schedule, grid, refs, copts);

  for (std::size_t k = 0; k < res.stages.size(); ++k) {
    const auto& st = res.stages[k];
    atomic_write(out_dir / ("stage_" + std::to_string(k) + "_trajectory.csv"),
                 trajectory_csv(st.trajectory, st.control));
    atomic_write(out_dir / ("stage_" + std::to_string(k) + "_control.csv"), control_csv(st.control));
  }
  std::vector<std::vector<double>> rows;
  for (const auto& r : res.table)
    rows.push_back({static_cast<double>(r.k), r.gamma, r.cost, r.du_sup, r.dx_sup, r.grad_norm});
  atomic_write(out_dir / "continuation.csv", table_csv("k,gamma,cost,du_sup,dx_sup,grad_norm", rows));

  const auto& last = res.stages.back();
  atomic_write(out_dir / "candidate_trajectory.csv", trajectory_csv(last.trajectory, last.control));
  atomic_write(out_dir / "candidate_control.csv", control_csv(last.control));
  atomic_write(out_dir / "candidate_multipliers.json", multipliers_to_json(res.candidate).dump(2) + "\n");

  std::cout << "stages=" << res.stages.size() << " gamma_last=" << fmt_sig(last.gamma)
            << " cost=" << fmt_sig(last.cost) << " g=" << fmt_sig(last.g_value)
            << " z1=" << fmt_sig(last.z_terminal) << " grad_norm=" << fmt_sig(last.grad_norm)
            << " endpoint_dist=" << fmt_sig(last.endpoint_dist) << "\n";
  return Exit::ok;
}

// ---------------------------------------------------------------------------
// certify
// ---------------------------------------------------------------------------

/// The closed-form candidate sampled on the grid.
inline Candidate analytic_candidate(const ProblemInstance& inst, const Grid& grid) {
  const auto cf = closed_form_solution(inst.name);
  Candidate cand;
  cand.grid = grid;
  cand.u.grid = grid;
  for (double t : grid) {
    cand.x.push_back(cf.x(t));
    cand.u.values.push_back(cf.u(t));
    cand.xi.push_back(cf.xi(t));
  }
  cand.lambda = cf.lambda;
  cand.p.grid = grid;
  for (std::size_t i = 0; i + 1 < grid.size(); ++i) cand.p.values.push_back(cf.p(grid[i]));
  cand.p.values.push_back(cf.p_terminal);
  const Vec jump = cf.p_terminal - cf.p(grid.back());
  if (jump.norm() > 0.0) cand.p.atoms.emplace_back(grid.back(), jump);
  cand.nu = SignedMeasure::zero(grid);
  cand.nu.atoms = cf.nu_atoms;
  return cand;
}

inline Candidate read_candidate(const ProblemInstance& inst, const fs::path& dir) {
  const auto tf = read_trajectory_csv(dir / "candidate_trajectory.csv", inst.n, inst.m);
  Candidate cand;
  cand.grid = tf.grid;
  cand.x = tf.states;
  cand.u.grid = tf.grid;
  cand.u.values = tf.controls;
  cand.xi = tf.xi;
  multipliers_from_json(read_json_file(dir / "candidate_multipliers.json"), cand);
  require_same_grid(cand.grid, cand.p.grid);
  return cand;
}

inline CertificateTolerances certify_tolerances(const RunConfig& cfg, const ProblemInstance& inst,
                                                bool analytic) {
  CertificateTolerances tols;
  if (analytic) {
    tols = CertificateTolerances::analytic();
  } else {
    const PenaltySchedule schedule = load_schedule(cfg, inst);
    tols = CertificateTolerances::continuation(1.0, schedule.alphas.back());
  }
  if (cfg.has("certify.tol")) {
    const double t = cfg.get_positive("certify.tol", 1e-4);
    tols.nontriviality = tols.admissibility = tols.adjoint = tols.slackness_a = tols.slackness_b =
        tols.transversality = tols.weak_max = tols.support = t;
  }
  if (cfg.has("certify.band")) tols.boundary_band = cfg.get_positive("certify.band", 1e-8);
  if (cfg.has("certify.skip_head")) tols.skip_head_nodes = cfg.get_int("certify.skip_head", 0);
  if (cfg.has("certify.endpoint_tol"))
    tols.endpoint_tol = cfg.get_positive("certify.endpoint_tol", 1e-6);
  return tols;
}

inline int cmd_certify(const RunConfig& cfg, const fs::path& out_dir, bool analytic,
                       const fs::path& candidate_dir = {}) {
  const ProblemInstance inst = load_instance(cfg);
  Candidate cand;
  if (analytic) {
    cand = analytic_candidate(inst, make_grid(cfg, inst));
    // persist the candidate files so they can be inspected or perturbed
    Trajectory traj;
    traj.grid = cand.grid;
    traj.states = cand.x;
    traj.velocities.assign(cand.grid.size(), Vec::Zero(inst.n));
    traj.xi = cand.xi;
    atomic_write(out_dir / "candidate_trajectory.csv", trajectory_csv(traj, cand.u));
    atomic_write(out_dir / "candidate_control.csv", control_csv(cand.u));
    atomic_write(out_dir / "candidate_multipliers.json", multipliers_to_json(cand).dump(2) + "\n");
  } else {
    cand = read_candidate(inst, candidate_dir);
  }

  const CertificateTolerances tols = certify_tolerances(cfg, inst, analytic);
  const CertificateReport rep = certify(inst, cand, tols);
  atomic_write(out_dir / "certificate.json", certificate_to_json(rep).dump(2) + "\n");

  auto line = [](const char* name, const CheckResult& c) {
    std::cout << name << ": residual=" << fmt_sig(c.residual) << " tol=" << fmt_sig(c.tolerance)
              << " " << (c.pass ? "PASS" : "FAIL") << "\n";
  };
  line("nontriviality", rep.nontriviality);
  line("admissibility", rep.admissibility);
  line("adjoint", rep.adjoint);
  line("slackness_a", rep.slackness_a);
  line("slackness_b", rep.slackness_b);
  line("transversality", rep.transversality);
  line("weak_max", rep.weak_max);
  line("support", rep.support);
  std::cout << "overall: " << (rep.overall_pass() ? "PASS" : "FAIL") << "\n";
  return rep.overall_pass() ? Exit::ok : Exit::certificate_fail;
}

// ---------------------------------------------------------------------------
// sweep: fixed reference control across the whole schedule
// ---------------------------------------------------------------------------

inline int cmd_sweep(const RunConfig& cfg, const fs::path& out_dir) {
  const ProblemInstance inst = load_instance(cfg);
  const Grid grid = make_grid(cfg, inst);
  const PenaltySchedule schedule = load_schedule(cfg, inst);
  const GridControl u_ref = reference_control(inst, grid);

  std::optional<ClosedFormSolution> cf;
  if (has_closed_form(inst.name)) cf = closed_form_solution(inst.name);
  const Vec x_bar_0 = cf ? cf->x(inst.t_a) : default_x0(inst);

  auto trapz = [&grid](const std::function<double(double)>& f) {
    double acc = 0.0;
    for (std::size_t i = 0; i + 1 < grid.size(); ++i)
      acc += 0.5 * (grid[i + 1] - grid[i]) * (f(grid[i]) + f(grid[i + 1]));
    return acc;
  };

  std::vector<std::vector<double>> rows;
  int first_margin_ok = -1;
  for (int k = 0; k < schedule.count(); ++k) {
    const double gamma = schedule.gammas[static_cast<std::size_t>(k)];
    const Vec c_bar = shift_initial_point(*inst.geometry, x_bar_0, schedule.rhos[static_cast<std::size_t>(k)]);
    if (first_margin_ok < 0 &&
        inst.geometry->psi(c_bar) <= -schedule.inner_set_margin(k))
      first_margin_ok = k;
    const auto res = integrate_penalized(inst, c_bar, u_ref, gamma, grid);

    double sup_err = std::numeric_limits<double>::quiet_NaN();
    double w1 = std::numeric_limits<double>::quiet_NaN();
    double wt = w1, wt2 = w1;
    if (cf) {
      sup_err = 0.0;
      for (std::size_t i = 0; i < grid.size(); ++i)
        sup_err = std::max(sup_err, (res.traj.states[i] - cf->x(grid[i])).norm());
      auto weak_err = [&](const std::function<double(double)>& h) {
        double num = 0.0;
        for (std::size_t i = 0; i + 1 < grid.size(); ++i) {
          const double fa = (res.traj.xi[i] - cf->xi(grid[i])) * h(grid[i]);
          const double fb = (res.traj.xi[i + 1] - cf->xi(grid[i + 1])) * h(grid[i + 1]);
          num += 0.5 * (grid[i + 1] - grid[i]) * (fa + fb);
        }
        const double den = trapz([&](double t) { return std::abs(h(t)); });
        return std::abs(num) / den;
      };
      w1 = weak_err([](double) { return 1.0; });
      wt = weak_err([](double t) { return t; });
      wt2 = weak_err([](double t) { return t * t; });
    }
    rows.push_back({gamma, sup_err, w1, wt, wt2, res.stats.max_psi, res.stats.max_xi});
  }
  atomic_write(out_dir / "sweep.csv",
               table_csv("gamma,sup_err_x,xi_weak_err_1,xi_weak_err_t,xi_weak_err_t2,max_psi,max_xi",
                         rows));
  std::cout << "first k with psi(c_bar_k) <= -alpha_k: " << first_margin_ok << "\n";
  std::cout << "final sup_err_x=" << fmt_sig(rows.back()[1]) << " xi_weak_err_1=" << fmt_sig(rows.back()[2])
            << "\n";
  return Exit::ok;
}

// ---------------------------------------------------------------------------
// oracle-compare: penalty vs catching-up cross-validation
// ---------------------------------------------------------------------------

inline int cmd_oracle_compare(const RunConfig& cfg, const fs::path& out_dir) {
  const ProblemInstance inst = load_instance(cfg);
  const double gamma = cfg.get_positive("gamma", 1e4);
  std::vector<int> ns;
  {
    std::stringstream ss(cfg.get_string("oracle.ns", "500,1000,2000,4000"));
    std::string cell;
    while (std::getline(ss, cell, ',')) ns.push_back(static_cast<int>(detail::parse_double(cell, "oracle.ns")));
    if (ns.empty()) throw ConfigError("oracle.ns: empty list");
  }
  std::optional<ClosedFormSolution> cf;
  if (has_closed_form(inst.name)) cf = closed_form_solution(inst.name);

  std::vector<std::vector<double>> rows;
  std::vector<double> fit_n, fit_err;
  for (int N : ns) {
    const Grid grid = uniform_grid(inst.t_a, inst.t_b, N);
    const GridControl u = reference_control(inst, grid);
    const auto [alpha, rho] = alpha_rho_for(inst, gamma);
    const Vec x0_pen = shift_initial_point(*inst.geometry, cf ? cf->x(inst.t_a) : default_x0(inst), rho);
    const Vec x0_cu = cf ? cf->x(inst.t_a) : default_x0(inst);

    const auto pen = integrate_penalized(inst, x0_pen, u, gamma, grid);
    const auto cu = integrate_catching_up(inst, x0_cu, u, grid);

    const double d_pen_cu = sup_norm(pen.traj.states, cu.states);
    double d_cu_ref = std::numeric_limits<double>::quiet_NaN();
    double d_pen_ref = d_cu_ref;
    if (cf) {
      d_cu_ref = 0.0;
      d_pen_ref = 0.0;
      for (std::size_t i = 0; i < grid.size(); ++i) {
        const Vec xr = cf->x(grid[i]);
        d_cu_ref = std::max(d_cu_ref, (cu.states[i] - xr).norm());
        d_pen_ref = std::max(d_pen_ref, (pen.traj.states[i] - xr).norm());
      }
    }
    rows.push_back({static_cast<double>(N), (inst.t_b - inst.t_a) / N, d_pen_cu, d_cu_ref, d_pen_ref});
    fit_n.push_back(static_cast<double>(N));
    fit_err.push_back(cf ? d_cu_ref : d_pen_cu);
  }
  double slope = std::numeric_limits<double>::quiet_NaN();
  if (fit_n.size() >= 2) slope = -loglog_slope(fit_n, fit_err);  // error ~ h ~ 1/N
  atomic_write(out_dir / "comparison.csv",
               table_csv("n,h,sup_pen_cu,sup_cu_ref,sup_pen_ref", rows));
  std::cout << "refinement_slope=" << fmt_sig(slope) << "\n";
  std::cout << "final sup_pen_cu=" << fmt_sig(rows.back()[2]) << "\n";
  return Exit::ok;
}

}  // namespace sweep::cmd
