#pragma once

#include "sweep/core.hpp"

#include <limits>
#include <utility>

namespace sweep {

/// Pointwise control sets U(t). Boxes (intervals when m = 1) and balls get
/// exact projections and support maxima; prox-regular sets are supplied as a
/// projector plus the constants of the quadratically corrected maximization.
struct ControlSet {
  enum class Kind { Box, Ball, ProxRegular };

  Kind kind = Kind::Box;
  int dim = 1;

  // Box
  std::function<Vec(double)> lo, hi;
  // Ball
  std::function<Vec(double)> center;
  double radius = 0.0;
  // ProxRegular
  std::function<Vec(double, const Vec&)> projector;
  double eps0 = std::numeric_limits<double>::infinity();
  double prox_r = std::numeric_limits<double>::infinity();
  std::function<Vec(double, Rng&)> sampler;  // for sampled maximization

  static ControlSet interval(std::function<double(double)> a, std::function<double(double)> b) {
    ControlSet s;
    s.kind = Kind::Box;
    s.dim = 1;
    s.lo = [a = std::move(a)](double t) { return Vec::Constant(1, a(t)); };
    s.hi = [b = std::move(b)](double t) { return Vec::Constant(1, b(t)); };
    return s;
  }
  static ControlSet box(Vec a, Vec b) {
    ControlSet s;
    s.kind = Kind::Box;
    s.dim = static_cast<int>(a.size());
    s.lo = [a = std::move(a)](double) { return a; };
    s.hi = [b = std::move(b)](double) { return b; };
    return s;
  }
  static ControlSet ball(std::function<Vec(double)> c, double r, int m) {
    ControlSet s;
    s.kind = Kind::Ball;
    s.dim = m;
    s.center = std::move(c);
    s.radius = r;
    return s;
  }

  Vec project(double t, const Vec& u) const {
    switch (kind) {
      case Kind::Box: return u.cwiseMax(lo(t)).cwiseMin(hi(t));
      case Kind::Ball: {
        const Vec c = center(t);
        const Vec d = u - c;
        const double dn = d.norm();
        return (dn <= radius) ? u : Vec(c + (radius / dn) * d);
      }
      case Kind::ProxRegular: return projector(t, u);
    }
    throw UnsupportedSetKind("ControlSet::project");
  }

  /// Projection onto U(t) ∩ B̄_delta(u_ref). Exact for boxes; otherwise the
  /// two projections are alternated.
  Vec project_trust(double t, const Vec& u, const Vec& u_ref, double delta) const {
    if (!std::isfinite(delta)) return project(t, u);
    if (kind == Kind::Box) {
      const Vec a = lo(t).cwiseMax(u_ref - Vec::Constant(dim, delta));
      const Vec b = hi(t).cwiseMin(u_ref + Vec::Constant(dim, delta));
      if ((b - a).minCoeff() < 0.0)
        throw EmptyIntersection("project_trust: U(t) and the trust ball are disjoint at t = " +
                                std::to_string(t));
      return u.cwiseMax(a).cwiseMin(b);
    }
    Vec z = u;
    for (int it = 0; it < 128; ++it) {
      Vec z_new = project(t, z);
      const Vec d = z_new - u_ref;
      const double dn = d.norm();
      if (dn > delta) z_new = u_ref + (delta / dn) * d;
      if ((z_new - z).norm() < 1e-14 * (1.0 + z.norm())) return z_new;
      z = z_new;
    }
    if ((project(t, z) - z).norm() > 1e-8 || (z - u_ref).norm() > delta + 1e-8)
      throw EmptyIntersection("project_trust: alternating projections did not meet both sets");
    return z;
  }

  bool nonempty(double t) const {
    if (kind == Kind::Box) return (hi(t) - lo(t)).minCoeff() >= 0.0;
    return true;
  }

  double bound_radius(double t) const {
    switch (kind) {
      case Kind::Box: return std::max(lo(t).cwiseAbs().maxCoeff(), hi(t).cwiseAbs().maxCoeff());
      case Kind::Ball: return center(t).norm() + radius;
      case Kind::ProxRegular: return std::numeric_limits<double>::infinity();
    }
    return 0.0;
  }

  /// max { <q, u> : u in U(t) } with an attaining point.
  std::pair<double, Vec> support_max(double t, const Vec& q) const {
    switch (kind) {
      case Kind::Box: {
        const Vec a = lo(t), b = hi(t);
        Vec arg(dim);
        double val = 0.0;
        for (int i = 0; i < dim; ++i) {
          arg(i) = (q(i) >= 0.0) ? b(i) : a(i);
          val += q(i) * arg(i);
        }
        return {val, arg};
      }
      case Kind::Ball: {
        const Vec c = center(t);
        const double qn = q.norm();
        if (qn == 0.0) return {q.dot(c), c};
        const Vec arg = c + (radius / qn) * q;
        return {q.dot(arg), arg};
      }
      case Kind::ProxRegular:
        throw UnsupportedSetKind("support_max on prox-regular set; use corrected_max");
    }
    throw UnsupportedSetKind("ControlSet::support_max");
  }

  /// max { <q,u> - (||q||/min{eps0, 2r}) ||u - u_ref||^2 : u in U(t) }, the
  /// quadratically corrected maximization used for prox-regular control sets.
  double corrected_max(double t, const Vec& q, const Vec& u_ref, Rng& rng, int n_samples = 512) const {
    const double kappa = q.norm() / std::min(eps0, 2.0 * prox_r);
    auto score = [&](const Vec& u) { return q.dot(u) - kappa * (u - u_ref).squaredNorm(); };
    switch (kind) {
      case Kind::Box: {
        // separable concave quadratic: closed-form per coordinate
        const Vec a = lo(t), b = hi(t);
        double val = 0.0;
        for (int i = 0; i < dim; ++i) {
          double ui;
          if (kappa > 0.0)
            ui = std::clamp(u_ref(i) + q(i) / (2.0 * kappa), a(i), b(i));
          else
            ui = (q(i) >= 0.0) ? b(i) : a(i);
          val += q(i) * ui - kappa * (ui - u_ref(i)) * (ui - u_ref(i));
        }
        return val;
      }
      case Kind::Ball:
      case Kind::ProxRegular: {
        if (!sampler && kind == Kind::ProxRegular)
          throw UnsupportedSetKind("corrected_max: prox-regular set without sampler");
        double best = score(project(t, u_ref));
        for (int i = 0; i < n_samples; ++i) {
          Vec u;
          if (kind == Kind::Ball) {
            std::normal_distribution<double> nd(0.0, 1.0);
            Vec d(dim);
            for (int j = 0; j < dim; ++j) d(j) = nd(rng);
            std::uniform_real_distribution<double> ud(0.0, 1.0);
            u = center(t) + radius * std::pow(ud(rng), 1.0 / dim) * d.normalized();
          } else {
            u = sampler(t, rng);
          }
          best = std::max(best, score(u));
        }
        return best;
      }
    }
    throw UnsupportedSetKind("ControlSet::corrected_max");
  }
};

}  // namespace sweep
