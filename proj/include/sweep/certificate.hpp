#pragma once

#include "sweep/controls.hpp"
#include "sweep/dynamics.hpp"
#include "sweep/instance.hpp"

#include <algorithm>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace sweep {

// ---------------------------------------------------------------------------
// Candidate multiplier types
// ---------------------------------------------------------------------------

/// Adjoint arc of bounded variation: right-continuous node values plus jump
/// atoms located on grid nodes. The value stored at an atom node includes the
/// jump; left limits are value minus jump.
struct BVPath {
  Grid grid;
  std::vector<Vec> values;
  std::vector<std::pair<double, Vec>> atoms;

  const Vec* jump_at(std::size_t node) const {
    for (const auto& [t, j] : atoms)
      if (t == grid[node]) return &j;
    return nullptr;
  }

  Vec left_limit(std::size_t node) const {
    if (const Vec* j = jump_at(node)) return values[node] - *j;
    return values[node];
  }

  int atom_node(double t) const {
    for (std::size_t i = 0; i < grid.size(); ++i)
      if (grid[i] == t) return static_cast<int>(i);
    return -1;
  }

  void validate() const {
    for (const auto& [t, j] : atoms) {
      if (atom_node(t) < 0)
        throw UnmatchedAtom("BVPath atom at t = " + std::to_string(t) + " is not a grid node");
      (void)j;
    }
  }
};

/// Finite signed Radon measure split into an absolutely continuous density on
/// the grid plus point atoms.
struct SignedMeasure {
  Grid grid;
  std::vector<double> density;
  std::vector<std::pair<double, double>> atoms;  // (time, mass)

  double atom_mass_at(double t) const {
    for (const auto& [tt, m] : atoms)
      if (tt == t) return m;
    return 0.0;
  }

  static SignedMeasure zero(const Grid& g) {
    SignedMeasure nu;
    nu.grid = g;
    nu.density.assign(g.size(), 0.0);
    return nu;
  }
};

/// Selections of the generalized derivatives along a candidate; classical
/// derivatives for the smooth instance classes supported here.
struct DerivativeBundle {
  std::vector<Mat> zeta;      // df/dx
  std::vector<Mat> omega;     // df/du
  std::vector<Mat> theta;     // hessian of the extension potential (zero for indicator)
  std::vector<Mat> vartheta;  // hessian of psi
};

inline DerivativeBundle build_bundle(const ProblemInstance& inst, const Grid& grid,
                                     const std::vector<Vec>& x, const std::vector<Vec>& u) {
  DerivativeBundle b;
  const std::size_t n = grid.size();
  b.zeta.resize(n);
  b.omega.resize(n);
  b.theta.resize(n);
  b.vartheta.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    inst.df_dx(grid[i], x[i], u[i], b.zeta[i]);
    inst.df_du(grid[i], x[i], u[i], b.omega[i]);
    if (inst.phi_ext_hess)
      inst.phi_ext_hess(x[i], b.theta[i]);
    else
      b.theta[i] = Mat::Zero(inst.n, inst.n);
    inst.geometry->hess_psi(x[i], b.vartheta[i]);
  }
  return b;
}

/// A complete candidate for the necessary conditions.
struct Candidate {
  Grid grid;
  std::vector<Vec> x;
  GridControl u;
  std::vector<double> xi;
  BVPath p;
  double lambda = 0.0;
  SignedMeasure nu;
};

// ---------------------------------------------------------------------------
// Individual checks
// ---------------------------------------------------------------------------

inline double check_nontriviality(const BVPath& p, double lambda) {
  if (lambda < 0.0) throw NegativeLambda("lambda = " + std::to_string(lambda));
  return std::abs(p.values.back().norm() + lambda - 1.0);
}

/// Max over nodes of ||xdot - f + grad Phi + xi grad psi|| with finite
/// difference velocities (second order, one-sided at the ends), combined with
/// the positive part of max psi. `skip_head` drops leading nodes that sit in
/// the penalty relaxation layer of shifted starts.
inline double check_admissibility(const ProblemInstance& inst, const Grid& grid,
                                  const std::vector<Vec>& x, const std::vector<Vec>& u_nodes,
                                  const std::vector<double>& xi, int skip_head = 0) {
  const auto& C = *inst.geometry;
  const int N = static_cast<int>(grid.size()) - 1;
  if (N < 2) throw GridMismatch("check_admissibility: need at least 3 nodes");
  Vec fphi(inst.n), g(inst.n), xdot(inst.n);
  double ode_res = 0.0;
  double max_psi = -std::numeric_limits<double>::infinity();
  for (int i = 0; i <= N; ++i) {
    max_psi = std::max(max_psi, C.psi(x[static_cast<std::size_t>(i)]));
    if (i < skip_head) continue;
    const auto k = static_cast<std::size_t>(i);
    if (i == 0) {
      const double h = grid[1] - grid[0];
      xdot = (-3.0 * x[0] + 4.0 * x[1] - x[2]) / (2.0 * h);
    } else if (i == N) {
      const double h = grid[k] - grid[k - 1];
      xdot = (3.0 * x[k] - 4.0 * x[k - 1] + x[k - 2]) / (2.0 * h);
    } else {
      const double h2 = grid[k + 1] - grid[k - 1];
      xdot = (x[k + 1] - x[k - 1]) / h2;
    }
    inst.eval_f_phi(grid[k], x[k], u_nodes[k], fphi);
    C.grad_psi(x[k], g);
    ode_res = std::max(ode_res, (xdot - fphi + xi[k] * g).norm());
  }
  return std::max(ode_res, std::max(0.0, max_psi));
}

/// Measure-form adjoint equation tested cellwise (per-unit-time residual
/// density) plus exact atom matching; returns the max over both families.
inline double check_adjoint(const ProblemInstance& inst, const Grid& grid,
                            const std::vector<Vec>& x, const std::vector<double>& xi,
                            const BVPath& p, const SignedMeasure& nu,
                            const DerivativeBundle& bundle) {
  p.validate();
  require_same_grid(grid, p.grid);
  require_same_grid(grid, nu.grid);
  for (const auto& [t, m] : nu.atoms) {
    if (p.atom_node(t) < 0)
      throw UnmatchedAtom("measure atom at t = " + std::to_string(t) + " is not a grid node");
    (void)m;
  }
  const int N = static_cast<int>(grid.size()) - 1;
  Vec g(inst.n);

  auto integrand = [&](std::size_t i, Vec& w) {
    const Vec pl = p.left_limit(i);
    w = (bundle.theta[i] - bundle.zeta[i].transpose()) * pl + xi[i] * (bundle.vartheta[i] * pl);
  };

  double res = 0.0;
  Vec wi(inst.n), wj(inst.n), gi(inst.n), gj(inst.n);
  for (int c = 0; c < N; ++c) {
    const auto i = static_cast<std::size_t>(c);
    const double h = grid[i + 1] - grid[i];
    Vec dp = p.values[i + 1] - p.values[i];
    if (const Vec* j = p.jump_at(i + 1)) dp -= *j;  // absolutely continuous part
    integrand(i, wi);
    integrand(i + 1, wj);
    inst.geometry->grad_psi(x[i], gi);
    inst.geometry->grad_psi(x[i + 1], gj);
    const Vec predicted =
        (h / 2.0) * (wi + wj) + (h / 2.0) * (nu.density[i] * gi + nu.density[i + 1] * gj);
    res = std::max(res, (dp - predicted).norm() / h);
  }
  // atoms: jump_p(tau) = grad psi(x(tau)) * nu({tau})
  for (const auto& [t, jump] : p.atoms) {
    const int node = p.atom_node(t);
    inst.geometry->grad_psi(x[static_cast<std::size_t>(node)], g);
    res = std::max(res, (jump - nu.atom_mass_at(t) * g).norm());
  }
  for (const auto& [t, m] : nu.atoms) {
    if (!p.jump_at(static_cast<std::size_t>(p.atom_node(t)))) {
      inst.geometry->grad_psi(x[static_cast<std::size_t>(p.atom_node(t))], g);
      res = std::max(res, std::abs(m) * g.norm());
    }
  }
  return res;
}

/// (a) xi vanishes off the boundary band; (b) xi <grad psi, p> = 0. Both are
/// almost-everywhere statements: atom instants enter through left limits.
inline std::pair<double, double> check_slackness(const ProblemInstance& inst, const Grid& grid,
                                                 const std::vector<Vec>& x,
                                                 const std::vector<double>& xi, const BVPath& p,
                                                 double band) {
  const auto& C = *inst.geometry;
  double res_a = 0.0, res_b = 0.0;
  Vec g(inst.n);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (C.classify_with_band(x[i], band) == Region::DeepInterior) res_a = std::max(res_a, xi[i]);
    C.grad_psi(x[i], g);
    res_b = std::max(res_b, std::abs(xi[i] * g.dot(p.left_limit(i))));
  }
  return {res_a, res_b};
}

/// Distance of (p(t_a), -p(t_b)) - lambda grad g to the product of endpoint
/// normal cones, evaluated by cone projection per set kind.
inline double check_transversality(const ProblemInstance& inst, const Grid& grid,
                                   const std::vector<Vec>& x, const BVPath& p, double lambda,
                                   double endpoint_tol) {
  const Vec& x0 = x.front();
  const Vec& x1 = x.back();
  const double d0 = (x0 - inst.C0.project(x0)).norm();
  const double d1 = (x1 - inst.C1.project(x1)).norm();
  if (d0 > endpoint_tol || d1 > endpoint_tol)
    throw EndpointInfeasible("endpoint distances (" + std::to_string(d0) + ", " +
                             std::to_string(d1) + ") exceed tolerance " +
                             std::to_string(endpoint_tol));
  Vec g0(inst.n), g1(inst.n);
  inst.dg(x0, x1, g0, g1);
  const Vec v0 = p.values.front() - lambda * g0;
  const Vec v1 = -p.values.back() - lambda * g1;
  const double r0 = inst.C0.normal_cone_distance(v0, inst.C0.project(x0), endpoint_tol);
  const double r1 = inst.C1.normal_cone_distance(v1, inst.C1.project(x1), endpoint_tol);
  (void)grid;
  return std::hypot(r0, r1);
}

/// Weak maximization: for convex U(t) the support gap
/// max_{u in U(t)} <omega^T p, u> - <omega^T p, u_bar(t)>, maximized over
/// nodes; prox-regular sets use the quadratically corrected objective.
inline double check_weak_max(const ProblemInstance& inst, const Grid& grid, const GridControl& u,
                             const BVPath& p, const DerivativeBundle& bundle,
                             std::uint64_t seed = 7777) {
  Rng rng(seed);
  double res = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const Vec q = bundle.omega[i].transpose() * p.left_limit(i);
    const double at_ubar = q.dot(u.values[i]);
    double best;
    if (inst.U.kind == ControlSet::Kind::ProxRegular) {
      best = inst.U.corrected_max(grid[i], q, u.values[i], rng);
    } else {
      best = inst.U.support_max(grid[i], q).first;
    }
    res = std::max(res, std::max(0.0, best - at_ubar));
  }
  return res;
}

/// Mass of nu lying outside the boundary band; zero for admissible measures.
inline double check_support(const ProblemInstance& inst, const Grid& grid,
                            const std::vector<Vec>& x, const SignedMeasure& nu, double band) {
  const auto& C = *inst.geometry;
  double res = 0.0;
  for (std::size_t i = 0; i + 1 < grid.size(); ++i) {
    const double h = grid[i + 1] - grid[i];
    const bool out_i = C.classify_with_band(x[i], band) == Region::DeepInterior;
    const bool out_j = C.classify_with_band(x[i + 1], band) == Region::DeepInterior;
    if (out_i && out_j) res += (h / 2.0) * (std::abs(nu.density[i]) + std::abs(nu.density[i + 1]));
  }
  for (const auto& [t, m] : nu.atoms) {
    // locate node
    for (std::size_t i = 0; i < grid.size(); ++i)
      if (grid[i] == t && C.classify_with_band(x[i], band) == Region::DeepInterior)
        res += std::abs(m);
  }
  return res;
}

// ---------------------------------------------------------------------------
// Aggregation
// ---------------------------------------------------------------------------

struct CheckResult {
  double residual = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

struct CertificateTolerances {
  double nontriviality = 1e-4;
  double admissibility = 1e-4;
  double adjoint = 1e-4;
  double slackness_a = 1e-4;
  double slackness_b = 1e-4;
  double transversality = 1e-4;
  double weak_max = 1e-4;
  double support = 1e-4;
  double boundary_band = -1.0;  // < 0: use the geometry's band
  double endpoint_tol = 1e-6;
  int skip_head_nodes = 0;

  static CertificateTolerances analytic() { return {}; }

  /// Approximate candidates inherit O(1/gamma + h) residuals; the band is the
  /// penalty equilibrium shell and the first nodes sit in the start-up layer.
  static CertificateTolerances continuation(double p_sup, double alpha_last) {
    CertificateTolerances t;
    const double tol = 0.05 * (1.0 + p_sup);
    t.nontriviality = tol;
    t.admissibility = tol;
    t.adjoint = tol;
    t.slackness_a = tol;
    t.slackness_b = tol;
    t.transversality = tol;
    t.weak_max = tol;
    t.support = tol;
    t.boundary_band = 2.0 * alpha_last;
    t.endpoint_tol = 0.05;
    t.skip_head_nodes = 2;
    return t;
  }
};

struct CertificateReport {
  CheckResult nontriviality, admissibility, adjoint, slackness_a, slackness_b, transversality,
      weak_max, support;
  double lambda = 0.0;
  Vec p_terminal;
  std::vector<std::pair<double, double>> nu_atoms;
  CertificateTolerances tolerances;

  bool overall_pass() const {
    return nontriviality.pass && admissibility.pass && adjoint.pass && slackness_a.pass &&
           slackness_b.pass && transversality.pass && weak_max.pass && support.pass;
  }
};

inline CertificateReport certify(const ProblemInstance& inst, const Candidate& cand,
                                 const CertificateTolerances& tols = {}) {
  CertificateReport rep;
  rep.tolerances = tols;
  const double band = tols.boundary_band > 0.0 ? tols.boundary_band : inst.geometry->bdry_tol;

  std::vector<Vec> u_nodes = cand.u.values;
  const DerivativeBundle bundle = build_bundle(inst, cand.grid, cand.x, u_nodes);

  auto set = [](CheckResult& r, double residual, double tolerance) {
    r.residual = residual;
    r.tolerance = tolerance;
    r.pass = residual <= tolerance;
  };

  set(rep.nontriviality, check_nontriviality(cand.p, cand.lambda), tols.nontriviality);
  set(rep.admissibility,
      check_admissibility(inst, cand.grid, cand.x, u_nodes, cand.xi, tols.skip_head_nodes),
      tols.admissibility);
  set(rep.adjoint, check_adjoint(inst, cand.grid, cand.x, cand.xi, cand.p, cand.nu, bundle),
      tols.adjoint);
  const auto [sa, sb] = check_slackness(inst, cand.grid, cand.x, cand.xi, cand.p, band);
  set(rep.slackness_a, sa, tols.slackness_a);
  set(rep.slackness_b, sb, tols.slackness_b);
  set(rep.transversality,
      check_transversality(inst, cand.grid, cand.x, cand.p, cand.lambda, tols.endpoint_tol),
      tols.transversality);
  set(rep.weak_max, check_weak_max(inst, cand.grid, cand.u, cand.p, bundle), tols.weak_max);
  set(rep.support, check_support(inst, cand.grid, cand.x, cand.nu, band), tols.support);

  rep.lambda = cand.lambda;
  rep.p_terminal = cand.p.values.back();
  rep.nu_atoms = cand.nu.atoms;
  return rep;
}

// ---------------------------------------------------------------------------
// Measure recovery for approximate candidates
// ---------------------------------------------------------------------------

/// Splits the candidate adjoint's defect against the measure-free equation
/// into an absolutely continuous density (projection of the cell residuals
/// onto grad psi) and atoms fitted where a cell increment dwarfs its
/// neighbors. Returns the measure and installs matching jumps into p.
inline SignedMeasure recover_measure(const ProblemInstance& inst, const Grid& grid,
                                     const std::vector<Vec>& x, const std::vector<double>& xi,
                                     BVPath& p, const DerivativeBundle& bundle,
                                     double atom_factor = 5.0) {
  const int N = static_cast<int>(grid.size()) - 1;
  SignedMeasure nu = SignedMeasure::zero(grid);
  Vec g(inst.n);

  std::vector<Vec> excess(static_cast<std::size_t>(N));
  std::vector<double> predicted_norm(static_cast<std::size_t>(N));
  for (int c = 0; c < N; ++c) {
    const auto i = static_cast<std::size_t>(c);
    const double h = grid[i + 1] - grid[i];
    const Vec wi = (bundle.theta[i] - bundle.zeta[i].transpose()) * p.values[i] +
                   xi[i] * (bundle.vartheta[i] * p.values[i]);
    const Vec wj = (bundle.theta[i + 1] - bundle.zeta[i + 1].transpose()) * p.values[i + 1] +
                   xi[i + 1] * (bundle.vartheta[i + 1] * p.values[i + 1]);
    const Vec pred = (h / 2.0) * (wi + wj);
    excess[i] = (p.values[i + 1] - p.values[i]) - pred;
    predicted_norm[i] = pred.norm();
  }

  // scale of a typical cell increment
  std::vector<double> sorted = predicted_norm;
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> dp_norm(static_cast<std::size_t>(N));
  for (int c = 0; c < N; ++c)
    dp_norm[static_cast<std::size_t>(c)] =
        (p.values[static_cast<std::size_t>(c) + 1] - p.values[static_cast<std::size_t>(c)]).norm();
  std::sort(dp_norm.begin(), dp_norm.end());
  const double scale = std::max({sorted[sorted.size() / 2], dp_norm[dp_norm.size() / 2], 1e-14});

  std::vector<double> cell_density(static_cast<std::size_t>(N), 0.0);
  for (int c = 0; c < N; ++c) {
    const auto i = static_cast<std::size_t>(c);
    const double h = grid[i + 1] - grid[i];
    if (excess[i].norm() > atom_factor * scale) {
      // Fit an atom at the right node. The fit is iterated because the
      // trapezoid integrand must use the pre-jump (left limit) value there,
      // which itself depends on the fitted jump.
      inst.geometry->grad_psi(x[i + 1], g);
      double mass = excess[i].dot(g) / g.squaredNorm();
      for (int pass = 0; pass < 3; ++pass) {
        const Vec p_left = p.values[i + 1] - mass * g;
        const Vec wj = (bundle.theta[i + 1] - bundle.zeta[i + 1].transpose()) * p_left +
                       xi[i + 1] * (bundle.vartheta[i + 1] * p_left);
        const Vec wi = (bundle.theta[i] - bundle.zeta[i].transpose()) * p.values[i] +
                       xi[i] * (bundle.vartheta[i] * p.values[i]);
        const Vec e = (p.values[i + 1] - p.values[i]) - (h / 2.0) * (wi + wj);
        mass = e.dot(g) / g.squaredNorm();
      }
      nu.atoms.emplace_back(grid[i + 1], mass);
      p.atoms.emplace_back(grid[i + 1], Vec(mass * g));
    } else {
      const Vec xm = 0.5 * (x[i] + x[i + 1]);
      inst.geometry->grad_psi(xm, g);
      cell_density[i] = excess[i].dot(g) / (g.squaredNorm() * h);
    }
  }
  for (int i = 0; i <= N; ++i) {
    double acc = 0.0;
    int cnt = 0;
    if (i > 0) {
      acc += cell_density[static_cast<std::size_t>(i - 1)];
      ++cnt;
    }
    if (i < N) {
      acc += cell_density[static_cast<std::size_t>(i)];
      ++cnt;
    }
    nu.density[static_cast<std::size_t>(i)] = acc / cnt;
  }
  return nu;
}

}  // namespace sweep
