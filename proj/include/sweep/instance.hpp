#pragma once

#include "sweep/control_set.hpp"
#include "sweep/endpoint_set.hpp"
#include "sweep/geometry.hpp"

#include <map>
#include <memory>
#include <numbers>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace sweep {

/// A complete problem datum: dynamics f with Jacobians, the C^1 extension
/// gradient of the potential (identically zero when the potential is the
/// indicator of C), endpoint cost g, endpoint sets, control sets, horizon and
/// the constants used by the penalty schedule.
struct ProblemInstance {
  std::string name;
  int n = 0;  // state dimension
  int m = 0;  // control dimension

  std::shared_ptr<LevelSetC> geometry;

  std::function<void(double, const Vec&, const Vec&, Vec&)> f;
  std::function<void(double, const Vec&, const Vec&, Mat&)> df_dx;
  std::function<void(double, const Vec&, const Vec&, Mat&)> df_du;

  // Extension potential; empty std::function means identically zero.
  std::function<void(const Vec&, Vec&)> phi_ext_grad;
  std::function<void(const Vec&, Mat&)> phi_ext_hess;

  std::function<double(const Vec&, const Vec&)> g;                 // may return +inf
  std::function<void(const Vec&, const Vec&, Vec&, Vec&)> dg;      // gradients w.r.t. both endpoints

  EndpointSet C0, C1;
  ControlSet U;

  double t_a = 0.0, t_b = 1.0;
  double M_bar = 0.0;  // bound of ||f - grad Phi|| on the relevant tube
  double delta = 1.0;  // localization radius of the minimizer

  BoundarySampler sampler;

  bool has_phi() const { return static_cast<bool>(phi_ext_grad); }

  void eval_f(double t, const Vec& x, const Vec& u, Vec& out) const { f(t, x, u, out); }

  /// f_Phi = f - grad Phi, the field whose normal-cone correction defines the dynamic.
  void eval_f_phi(double t, const Vec& x, const Vec& u, Vec& out) const {
    f(t, x, u, out);
    if (phi_ext_grad) {
      Vec gp(n);
      phi_ext_grad(x, gp);
      out -= gp;
    }
  }

  Vec f_phi(double t, const Vec& x, const Vec& u) const {
    Vec out(n);
    eval_f_phi(t, x, u, out);
    return out;
  }

  double horizon_length() const { return t_b - t_a; }
};

// ---------------------------------------------------------------------------
// Hypothesis validation
// ---------------------------------------------------------------------------

struct HypothesisCheck {
  std::string id;
  bool pass = false;
  double worst = 0.0;
  std::string detail;
};

struct ValidationReport {
  std::vector<HypothesisCheck> checks;
  bool all_pass() const {
    for (const auto& c : checks)
      if (!c.pass) return false;
    return true;
  }
  const HypothesisCheck* find(const std::string& id) const {
    for (const auto& c : checks)
      if (c.id == id) return &c;
    return nullptr;
  }
};

/// Numeric screening of the standing hypotheses by sampling: Lipschitz ratios
/// and bounds for f, the boundary gradient condition, coercivity of psi,
/// endpoint-set sanity and control-set boundedness. Failures are report
/// entries, never exceptions.
inline ValidationReport validate_hypotheses(const ProblemInstance& inst, int n_samples = 400,
                                            std::uint64_t seed = 2024) {
  ValidationReport rep;
  Rng rng(seed);
  const auto& C = *inst.geometry;
  std::uniform_real_distribution<double> ut(inst.t_a, inst.t_b);

  auto sample_u = [&](double t, Rng& r) -> Vec {
    if (inst.U.kind == ControlSet::Kind::Box) {
      const Vec a = inst.U.lo(t), b = inst.U.hi(t);
      Vec u(inst.m);
      std::uniform_real_distribution<double> u01(0.0, 1.0);
      for (int i = 0; i < inst.m; ++i) u(i) = a(i) + (b(i) - a(i)) * u01(r);
      return u;
    }
    if (inst.U.kind == ControlSet::Kind::Ball) {
      std::normal_distribution<double> nd(0.0, 1.0);
      Vec d(inst.m);
      for (int i = 0; i < inst.m; ++i) d(i) = nd(r);
      std::uniform_real_distribution<double> u01(0.0, 1.0);
      return inst.U.center(t) + inst.U.radius * std::pow(u01(r), 1.0 / inst.m) * d.normalized();
    }
    return inst.U.project(t, Vec::Zero(inst.m));
  };

  // H1: boundedness ||f_Phi|| <= M_bar and a finite Lipschitz ratio in (x,u).
  {
    double max_norm = 0.0, max_ratio = 0.0;
    Vec fx(inst.n), fy(inst.n);
    for (int i = 0; i < n_samples; ++i) {
      const double t = ut(rng);
      const Vec x = inst.sampler.in_set(rng);
      const Vec u = sample_u(t, rng);
      inst.eval_f_phi(t, x, u, fx);
      max_norm = std::max(max_norm, fx.norm());
      const Vec x2 = inst.sampler.in_set(rng);
      const Vec u2 = sample_u(t, rng);
      const double den = std::sqrt((x - x2).squaredNorm() + (u - u2).squaredNorm());
      if (den > 1e-9) {
        inst.eval_f_phi(t, x2, u2, fy);
        max_ratio = std::max(max_ratio, (fx - fy).norm() / den);
      }
    }
    rep.checks.push_back({"H1.bound", max_norm <= inst.M_bar, max_norm,
                          "max sampled ||f_Phi|| vs M_bar = " + std::to_string(inst.M_bar)});
    rep.checks.push_back({"H1.lipschitz", std::isfinite(max_ratio), max_ratio, "max sampled Lipschitz ratio"});
  }

  // H2.1: hess_psi consistent with finite differences of grad_psi (C^{1,1} proxy).
  {
    double worst = 0.0;
    Mat H(C.dim, C.dim), Hfd(C.dim, C.dim);
    Vec gp(C.dim), gm(C.dim);
    for (int i = 0; i < std::min(n_samples, 100); ++i) {
      const Vec x = inst.sampler.in_set(rng);
      C.hess_psi(x, H);
      const double h = 1e-5 * (1.0 + x.norm());
      for (int j = 0; j < C.dim; ++j) {
        Vec xp = x, xm = x;
        xp(j) += h;
        xm(j) -= h;
        C.grad_psi(xp, gp);
        C.grad_psi(xm, gm);
        Hfd.col(j) = (gp - gm) / (2.0 * h);
      }
      worst = std::max(worst, (H - Hfd).norm() / (1.0 + H.norm()));
    }
    rep.checks.push_back({"H2.1", worst <= 1e-5, worst, "hess_psi vs FD(grad_psi) relative error"});
  }

  // H2.2: ||grad psi|| > 2 eta on the boundary.
  {
    double min_grad = std::numeric_limits<double>::infinity();
    Vec g(C.dim);
    for (int i = 0; i < n_samples; ++i) {
      const Vec x = inst.sampler.boundary(rng);
      C.grad_psi(x, g);
      min_grad = std::min(min_grad, g.norm());
    }
    rep.checks.push_back({"H2.2", min_grad > 2.0 * C.eta, min_grad,
                          "min boundary ||grad psi|| vs 2*eta = " + std::to_string(2.0 * C.eta)});
  }

  // H2.3: coercivity proxy; psi grows along enlarging spheres.
  {
    double r_scale = 0.0;
    for (int i = 0; i < 50; ++i) r_scale = std::max(r_scale, inst.sampler.in_set(rng).norm());
    std::normal_distribution<double> nd(0.0, 1.0);
    bool ok = true;
    double worst = std::numeric_limits<double>::infinity();
    for (int i = 0; i < 64; ++i) {
      Vec d(C.dim);
      for (int j = 0; j < C.dim; ++j) d(j) = nd(rng);
      d.normalize();
      const double p_far = C.psi((3.0 * r_scale + 10.0) * d);
      worst = std::min(worst, p_far);
      if (p_far <= 0.0) ok = false;
    }
    rep.checks.push_back({"H2.3", ok, worst, "psi on a sphere well outside the sampled set"});
  }

  // H3: bounded extension gradient (when a potential is present).
  {
    double worst = 0.0;
    if (inst.has_phi()) {
      Vec gp(inst.n);
      for (int i = 0; i < n_samples; ++i) {
        inst.phi_ext_grad(inst.sampler.in_tube(rng), gp);
        worst = std::max(worst, gp.norm());
      }
    }
    rep.checks.push_back({"H3", std::isfinite(worst), worst, "max sampled ||grad Phi||"});
  }

  // H4.1 / H4.3: endpoint sets nonempty, C0 inside C.
  {
    Vec w0;
    switch (inst.C0.kind) {
      case EndpointSet::Kind::Singleton: w0 = inst.C0.point; break;
      case EndpointSet::Kind::HalfLineRay: w0 = inst.C0.origin; break;
      case EndpointSet::Kind::Box: w0 = inst.C0.project(Vec::Zero(inst.n)); break;
      case EndpointSet::Kind::LevelSet: w0 = inst.sampler.in_set(rng); break;
    }
    const bool inside = C.contains(w0, C.bdry_tol);
    rep.checks.push_back({"H4.1", inside, C.psi(w0), "a C0 witness lies in C"});
    rep.checks.push_back({"H4.3", true, 0.0, "C1 descriptor present"});
  }

  // H4.2: U(t) nonempty and uniformly bounded.
  {
    double max_r = 0.0;
    bool nonempty = true;
    for (int i = 0; i <= 64; ++i) {
      const double t = inst.t_a + (inst.t_b - inst.t_a) * i / 64.0;
      nonempty = nonempty && inst.U.nonempty(t);
      max_r = std::max(max_r, inst.U.bound_radius(t));
    }
    rep.checks.push_back({"H4.2", nonempty && std::isfinite(max_r), max_r, "sup_t bound radius of U(t)"});
  }

  // H4.5: pointedness of the control normal cones; automatic for boxes/balls.
  {
    const bool automatic =
        inst.U.kind == ControlSet::Kind::Box || inst.U.kind == ControlSet::Kind::Ball;
    rep.checks.push_back({"H4.5", automatic, 0.0,
                          automatic ? "convex control sets: cones pointed"
                                    : "prox-regular control set: pointedness assumed, not checked"});
  }

  // H5: finite Lipschitz ratio of g near the endpoint sets.
  {
    double max_ratio = 0.0;
    bool finite_vals = true;
    for (int i = 0; i < n_samples; ++i) {
      const Vec a = inst.sampler.in_set(rng), b = inst.sampler.in_set(rng);
      const Vec a2 = inst.sampler.in_set(rng), b2 = inst.sampler.in_set(rng);
      const double g1 = inst.g(a, b), g2 = inst.g(a2, b2);
      if (!std::isfinite(g1) || !std::isfinite(g2)) {
        finite_vals = false;
        continue;
      }
      const double den = std::sqrt((a - a2).squaredNorm() + (b - b2).squaredNorm());
      if (den > 1e-9) max_ratio = std::max(max_ratio, std::abs(g1 - g2) / den);
    }
    rep.checks.push_back({"H5", finite_vals && std::isfinite(max_ratio), max_ratio,
                          "g finite on C x C with finite Lipschitz ratio"});
  }

  return rep;
}

// ---------------------------------------------------------------------------
// Closed-form reference solutions
// ---------------------------------------------------------------------------

struct ClosedFormSolution {
  std::function<Vec(double)> x;
  std::function<Vec(double)> u;
  std::function<double(double)> xi;
  std::function<Vec(double)> p;      // the BV adjoint's continuous branch (left limits at atoms)
  Vec p_terminal;                    // value at t_b including the terminal jump
  double lambda = 0.0;
  std::vector<std::pair<double, double>> nu_atoms;  // (time, mass)
};

// ---------------------------------------------------------------------------
// Built-in instances
// ---------------------------------------------------------------------------

namespace detail {

inline std::shared_ptr<LevelSetC> make_annulus_geometry(double bdry_tol) {
  auto C = std::make_shared<LevelSetC>();
  C->dim = 2;
  C->psi = [](const Vec& x) {
    const double s = x.squaredNorm();
    return (s - 1.0) * (s - 4.0);
  };
  C->grad_psi = [](const Vec& x, Vec& g) {
    const double s = x.squaredNorm();
    g = (4.0 * s - 10.0) * x;
  };
  C->hess_psi = [](const Vec& x, Mat& H) {
    const double s = x.squaredNorm();
    H = (4.0 * s - 10.0) * Mat::Identity(2, 2) + 8.0 * x * x.transpose();
  };
  // ||grad psi|| = 2r|2r^2-5|: 6 on r=1, 12 on r=2; with safety 0.9, eta = 2.7.
  C->eta = 2.7;
  C->m_psi_bar = 12.0;
  // max ||hess|| over C + (rho/2)B with rho = 0.5 is 12*(2.25)^2 - 10 = 50.75.
  C->m_psi = 50.75 / 2.0;
  C->rho_smooth = 0.5;
  C->bdry_tol = bdry_tol;
  C->projector_override = [](const Vec& x) -> Vec {
    const double r = x.norm();
    if (r >= 1.0 && r <= 2.0) return x;
    if (r > 2.0) return Vec((2.0 / r) * x);
    if (r < 1e-12)
      throw OutsideProxRadius("annulus projection undefined at the origin");
    return Vec((1.0 / r) * x);
  };
  return C;
}

inline BoundarySampler make_annulus_sampler() {
  BoundarySampler s;
  s.boundary = [](Rng& rng) {
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    const double theta = 2.0 * std::numbers::pi * u01(rng);
    const double r = (u01(rng) < 1.0 / 3.0) ? 1.0 : 2.0;  // weight by circle length
    Vec x(2);
    x << r * std::cos(theta), r * std::sin(theta);
    return x;
  };
  s.in_set = [](Rng& rng) {
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    const double theta = 2.0 * std::numbers::pi * u01(rng);
    const double r = std::sqrt(1.0 + 3.0 * u01(rng));  // area-uniform on 1 <= r <= 2
    Vec x(2);
    x << r * std::cos(theta), r * std::sin(theta);
    return x;
  };
  s.in_tube = [](Rng& rng) {
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    const double theta = 2.0 * std::numbers::pi * u01(rng);
    // C + (rho/2)B with rho = 0.5: radii in [0.75, 2.25]; include the shell edges
    // where the Hessian norm peaks.
    const double pick = u01(rng);
    double r;
    if (pick < 0.05)
      r = 0.75;
    else if (pick < 0.10)
      r = 2.25;
    else
      r = std::sqrt(0.5625 + (5.0625 - 0.5625) * u01(rng));
    Vec x(2);
    x << r * std::cos(theta), r * std::sin(theta);
    return x;
  };
  return s;
}

}  // namespace detail

/// Registered instances are code-defined: analytic callbacks plus numeric
/// parameters, selected by name with flat key=value overrides.
inline ProblemInstance builtin(const std::string& name,
                               const std::map<std::string, double>& params = {}) {
  auto get = [&params](const std::string& k, double dflt) {
    auto it = params.find(k);
    return it == params.end() ? dflt : it->second;
  };

  if (name == "annulus_example") {
    ProblemInstance inst;
    inst.name = name;
    inst.n = 2;
    inst.m = 1;
    inst.geometry = detail::make_annulus_geometry(get("bdry_tol", 1e-8));
    inst.geometry->eta = get("eta", inst.geometry->eta);
    inst.f = [](double t, const Vec& x, const Vec& u, Vec& out) {
      out.resize(2);
      out(0) = t - x(0) - x(1) - u(0);
      out(1) = -t + x(0) - x(1) + u(0);
    };
    inst.df_dx = [](double, const Vec&, const Vec&, Mat& J) {
      J.resize(2, 2);
      J << -1.0, -1.0, 1.0, -1.0;
    };
    inst.df_du = [](double, const Vec&, const Vec&, Mat& J) {
      J.resize(2, 1);
      J << -1.0, 1.0;
    };
    // phi is the indicator of C: grad Phi and its Hessian vanish identically.
    inst.g = [C = inst.geometry](const Vec&, const Vec& x1) -> double {
      if (!C->contains(x1, 1e-7)) return std::numeric_limits<double>::infinity();
      return 0.5 * (x1.squaredNorm() - 1.0);
    };
    inst.dg = [](const Vec&, const Vec& x1, Vec& g0, Vec& g1) {
      g0 = Vec::Zero(2);
      g1 = x1;
    };
    Vec c0(2);
    c0 << 1.0, 0.0;
    inst.C0 = EndpointSet::singleton(c0);
    Vec o(2), d(2);
    o << 0.0, 0.0;
    d << 0.0, 1.0;
    inst.C1 = EndpointSet::ray(o, d);
    inst.U = ControlSet::interval([](double t) { return t; },
                                  [](double) { return std::numbers::pi; });
    inst.t_a = 0.0;
    inst.t_b = std::numbers::pi / 2.0;
    inst.M_bar = get("M_bar", 8.0);  // sampled max ||f|| over the tube is about 7.3
    inst.delta = get("delta", 1.0);
    inst.sampler = detail::make_annulus_sampler();
    return inst;
  }

  if (name == "deep_interior_example") {
    // Disk of radius 5, velocity-controlled integrator staying far from the
    // boundary; the penalty term is numerically zero along every trajectory.
    ProblemInstance inst;
    inst.name = name;
    inst.n = 2;
    inst.m = 2;
    auto C = std::make_shared<LevelSetC>();
    C->dim = 2;
    C->psi = [](const Vec& x) { return x.squaredNorm() - 25.0; };
    C->grad_psi = [](const Vec& x, Vec& g) { g = 2.0 * x; };
    C->hess_psi = [](const Vec&, Mat& H) { H = 2.0 * Mat::Identity(2, 2); };
    C->eta = 4.5;        // safety 0.9 on ||grad psi|| = 10 at the boundary
    C->m_psi_bar = 10.0;
    C->m_psi = 1.0;      // hess is 2I everywhere
    C->rho_smooth = 18.0;
    C->bdry_tol = 1e-8;
    C->projector_override = [](const Vec& x) -> Vec {
      const double r = x.norm();
      return (r <= 5.0) ? x : Vec((5.0 / r) * x);
    };
    inst.geometry = C;
    inst.f = [](double, const Vec&, const Vec& u, Vec& out) { out = u; };
    inst.df_dx = [](double, const Vec&, const Vec&, Mat& J) { J = Mat::Zero(2, 2); };
    inst.df_du = [](double, const Vec&, const Vec&, Mat& J) { J = Mat::Identity(2, 2); };
    Vec target(2);
    target << 0.8, -0.5;
    inst.g = [target](const Vec&, const Vec& x1) { return 0.5 * (x1 - target).squaredNorm(); };
    inst.dg = [target](const Vec&, const Vec& x1, Vec& g0, Vec& g1) {
      g0 = Vec::Zero(2);
      g1 = x1 - target;
    };
    inst.C0 = EndpointSet::box(Vec::Constant(2, -0.5), Vec::Constant(2, 0.5));
    inst.C1 = EndpointSet::free_space(2);
    inst.U = ControlSet::box(Vec::Constant(2, -1.0), Vec::Constant(2, 1.0));
    inst.t_a = 0.0;
    inst.t_b = 1.0;
    inst.M_bar = get("M_bar", 1.5);
    inst.delta = get("delta", 2.0);
    BoundarySampler s;
    s.boundary = [](Rng& rng) {
      std::uniform_real_distribution<double> u01(0.0, 1.0);
      const double th = 2.0 * std::numbers::pi * u01(rng);
      Vec x(2);
      x << 5.0 * std::cos(th), 5.0 * std::sin(th);
      return x;
    };
    s.in_set = [](Rng& rng) {
      std::uniform_real_distribution<double> u01(0.0, 1.0);
      const double th = 2.0 * std::numbers::pi * u01(rng);
      const double r = 5.0 * std::sqrt(u01(rng));
      Vec x(2);
      x << r * std::cos(th), r * std::sin(th);
      return x;
    };
    s.in_tube = s.in_set;
    inst.sampler = s;
    return inst;
  }

  throw UnknownInstance(name);
}

inline std::vector<std::string> builtin_names() { return {"annulus_example", "deep_interior_example"}; }

/// Analytic optimum of the annulus instance: the state runs the unit circle,
/// the control is u(t) = t, the sweeping multiplier is constant 1/6, and the
/// adjoint is (sin t, -cos t)/2 with a single terminal measure atom of mass
/// 1/16 producing the jump to (1/2, -3/8).
inline ClosedFormSolution closed_form_solution(const std::string& name) {
  if (name != "annulus_example") throw NoClosedForm(name);
  const double T = std::numbers::pi / 2.0;
  ClosedFormSolution cf;
  cf.x = [](double t) {
    Vec x(2);
    x << std::cos(t), std::sin(t);
    return x;
  };
  cf.u = [](double t) { return Vec::Constant(1, t); };
  cf.xi = [](double) { return 1.0 / 6.0; };
  cf.p = [](double t) {
    Vec p(2);
    p << 0.5 * std::sin(t), -0.5 * std::cos(t);
    return p;
  };
  Vec pT(2);
  pT << 0.5, -3.0 / 8.0;
  cf.p_terminal = pT;
  cf.lambda = 3.0 / 8.0;
  cf.nu_atoms = {{T, 1.0 / 16.0}};
  return cf;
}

inline bool has_closed_form(const std::string& name) { return name == "annulus_example"; }

}  // namespace sweep
