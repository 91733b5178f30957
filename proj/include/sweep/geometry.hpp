#pragma once

#include "sweep/core.hpp"

#include <algorithm>
#include <limits>
#include <optional>
#include <utility>

namespace sweep {

enum class Region { DeepInterior, BoundaryBand, Outside };

inline const char* to_string(Region r) {
  switch (r) {
    case Region::DeepInterior: return "DeepInterior";
    case Region::BoundaryBand: return "BoundaryBand";
    case Region::Outside: return "Outside";
  }
  return "?";
}

/// The moving set C = {x : psi(x) <= 0} represented through psi and its first
/// two derivatives, together with the constants used by the penalty analysis:
///   eta        lower bound with ||grad psi|| > 2*eta on the boundary,
///   m_psi_bar  upper bound of ||grad psi|| on C,
///   m_psi      half a Lipschitz constant of grad psi on C + (rho/2)B,
///   rho_smooth radius of the C^{1,1} collar around C,
///   bdry_tol   numerical boundary band for classification.
struct LevelSetC {
  std::function<double(const Vec&)> psi;
  std::function<void(const Vec&, Vec&)> grad_psi;
  std::function<void(const Vec&, Mat&)> hess_psi;

  double eta = 0.0;
  double m_psi_bar = 0.0;
  double m_psi = 0.0;
  double rho_smooth = 0.0;
  double bdry_tol = 1e-8;

  // Closed-form nearest-point map, registered for instances that have one.
  std::function<Vec(const Vec&)> projector_override;

  int dim = 0;

  double eval_psi(const Vec& x) const { return psi(x); }

  Vec grad(const Vec& x) const {
    Vec g(dim);
    grad_psi(x, g);
    return g;
  }

  Mat hess(const Vec& x) const {
    Mat h(dim, dim);
    hess_psi(x, h);
    return h;
  }

  Region classify(const Vec& x) const { return classify_with_band(x, bdry_tol); }

  Region classify_with_band(const Vec& x, double band) const {
    const double v = psi(x);
    if (v > band) return Region::Outside;
    if (v >= -band) return Region::BoundaryBand;
    return Region::DeepInterior;
  }

  bool contains(const Vec& x, double tol = 0.0) const { return psi(x) <= ((tol != 0.0) ? tol : bdry_tol); }

  /// Radius inside which the nearest-point projection is single-valued.
  double prox_radius() const { return eta / m_psi; }
};

/// Point sources for the constant-estimation and hypothesis-validation
/// machinery. `boundary` must return points with |psi| within the band;
/// `in_set` covers C; `in_tube` covers C + (rho/2)B.
struct BoundarySampler {
  std::function<Vec(Rng&)> boundary;
  std::function<Vec(Rng&)> in_set;
  std::function<Vec(Rng&)> in_tube;
};

struct GeometryConstants {
  double eta = 0.0;
  double m_psi_bar = 0.0;
  double m_psi = 0.0;
};

/// Estimates (eta, m_psi_bar, m_psi) by dense sampling:
///   eta       = safety * (min boundary ||grad psi||) / 2
///   m_psi_bar = max ||grad psi|| over C
///   m_psi     = (max ||hess psi|| over C + (rho/2)B) / 2,
/// the last being the minimal valid choice of the gradient-Lipschitz constant
/// written as 2*m_psi.
inline GeometryConstants estimate_constants(const LevelSetC& C, const BoundarySampler& sampler,
                                            double safety, int n_samples = 2000,
                                            std::uint64_t seed = 12345) {
  if (!(safety > 0.0) || safety > 1.0) throw ConfigError("estimate_constants: safety must be in (0,1]");
  if (!sampler.boundary || !sampler.in_set || !sampler.in_tube)
    throw EmptySample("estimate_constants: sampler incomplete");
  Rng rng(seed);
  double min_bdry_grad = std::numeric_limits<double>::infinity();
  double max_grad = 0.0;
  double max_hess = 0.0;
  Vec g;
  Mat h;
  for (int i = 0; i < n_samples; ++i) {
    const Vec xb = sampler.boundary(rng);
    g.resize(C.dim);
    C.grad_psi(xb, g);
    min_bdry_grad = std::min(min_bdry_grad, g.norm());
    max_grad = std::max(max_grad, g.norm());

    const Vec xc = sampler.in_set(rng);
    C.grad_psi(xc, g);
    max_grad = std::max(max_grad, g.norm());

    const Vec xt = sampler.in_tube(rng);
    h.resize(C.dim, C.dim);
    C.hess_psi(xt, h);
    max_hess = std::max(max_hess, h.operatorNorm());
  }
  if (!std::isfinite(min_bdry_grad)) throw EmptySample("estimate_constants: no boundary samples");
  GeometryConstants out;
  out.eta = safety * min_bdry_grad / 2.0;
  out.m_psi_bar = max_grad;
  out.m_psi = max_hess / 2.0;
  return out;
}

namespace detail {

// Damped Newton on the KKT system of min 1/2||y-x||^2 s.t. psi(y) = 0.
inline std::optional<Vec> newton_project_to_boundary(const LevelSetC& C, const Vec& x) {
  const int n = C.dim;
  Vec y = x;
  Vec g(n);
  Mat H(n, n);
  C.grad_psi(y, g);
  const double gn2 = g.squaredNorm();
  if (gn2 < 1e-30) return std::nullopt;
  double lam = C.psi(y) / gn2;

  auto residual = [&](const Vec& yy, double ll, Vec& r_stat, double& r_feas) {
    C.grad_psi(yy, g);
    r_stat = yy - x + ll * g;
    r_feas = C.psi(yy);
  };

  Vec r_stat(n);
  double r_feas = 0.0;
  Mat kkt(n + 1, n + 1);
  Vec rhs(n + 1), step(n + 1);
  for (int it = 0; it < 80; ++it) {
    residual(y, lam, r_stat, r_feas);
    const double rn = std::sqrt(r_stat.squaredNorm() + r_feas * r_feas);
    if (rn < 1e-13 * (1.0 + x.norm())) return y;
    C.grad_psi(y, g);
    C.hess_psi(y, H);
    kkt.setZero();
    kkt.topLeftCorner(n, n) = Mat::Identity(n, n) + lam * H;
    kkt.topRightCorner(n, 1) = g;
    kkt.bottomLeftCorner(1, n) = g.transpose();
    rhs.head(n) = -r_stat;
    rhs(n) = -r_feas;
    step = kkt.fullPivLu().solve(rhs);
    if (!step.allFinite()) return std::nullopt;
    double t = 1.0;
    for (int ls = 0; ls < 30; ++ls) {
      const Vec y_try = y + t * step.head(n);
      const double lam_try = lam + t * step(n);
      Vec rs(n);
      double rf = 0.0;
      residual(y_try, lam_try, rs, rf);
      if (std::sqrt(rs.squaredNorm() + rf * rf) < (1.0 - 0.25 * t) * rn) {
        y = y_try;
        lam = lam_try;
        break;
      }
      t *= 0.5;
      if (ls == 29) return std::nullopt;
    }
  }
  return std::nullopt;
}

}  // namespace detail

/// Nearest point of C. Points already in C map to themselves. Outside C the
/// registered closed form is used when present, otherwise damped Newton on the
/// nearest-point KKT system, valid within the prox radius eta/m_psi.
inline Vec project_onto_C(const LevelSetC& C, const Vec& x) {
  if (C.projector_override) return C.projector_override(x);
  const double v = C.psi(x);
  if (v <= C.bdry_tol) return x;
  Vec g(C.dim);
  C.grad_psi(x, g);
  const double gn = g.norm();
  const double dist_est = (gn > 1e-14) ? v / gn : std::numeric_limits<double>::infinity();
  if (!(dist_est < C.prox_radius()))
    throw OutsideProxRadius("project_onto_C: estimated distance " + std::to_string(dist_est) +
                            " >= eta/m_psi = " + std::to_string(C.prox_radius()));
  auto y = detail::newton_project_to_boundary(C, x);
  if (!y) throw OutsideProxRadius("project_onto_C: Newton iteration failed to converge");
  return *y;
}

/// Generic boundary sampler: walk a random ray from an interior anchor until
/// psi changes sign, then bisect. `box_radius` bounds the search.
inline BoundarySampler make_ray_bisection_sampler(const LevelSetC& C, const Vec& anchor,
                                                  double box_radius) {
  const int n = C.dim;
  auto random_dir = [n](Rng& rng) {
    std::normal_distribution<double> nd(0.0, 1.0);
    Vec d(n);
    for (int i = 0; i < n; ++i) d(i) = nd(rng);
    const double dn = d.norm();
    return (dn > 0) ? Vec(d / dn) : Vec(Vec::Unit(n, 0));
  };
  auto boundary = [&C, anchor, box_radius, random_dir](Rng& rng) {
    for (int attempt = 0; attempt < 64; ++attempt) {
      const Vec d = random_dir(rng);
      double lo = 0.0, hi = box_radius;
      if (C.psi(anchor + hi * d) <= 0.0) continue;  // never exits along this ray
      for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (C.psi(anchor + mid * d) <= 0.0)
          lo = mid;
        else
          hi = mid;
      }
      return Vec(anchor + lo * d);
    }
    return anchor;  // degenerate C (e.g. a single point): the anchor is the boundary
  };
  auto in_set = [&C, anchor, box_radius, random_dir](Rng& rng) {
    std::uniform_real_distribution<double> ud(0.0, 1.0);
    for (int attempt = 0; attempt < 256; ++attempt) {
      const Vec d = random_dir(rng);
      const Vec x = anchor + (box_radius * ud(rng)) * d;
      if (C.psi(x) <= 0.0) return x;
    }
    return anchor;
  };
  BoundarySampler s;
  s.boundary = boundary;
  s.in_set = in_set;
  s.in_tube = in_set;  // conservative: the tube sampler at least covers C
  return s;
}

}  // namespace sweep
