#pragma once

#include "sweep/geometry.hpp"

#include <limits>
#include <utility>

namespace sweep {

/// Endpoint constraint sets C0 / C1. Membership, nearest-point projection and
/// limiting-normal-cone queries are implemented per kind; the normal cone is
/// only ever evaluated at (near-)members.
struct EndpointSet {
  enum class Kind { Singleton, HalfLineRay, Box, LevelSet };

  Kind kind = Kind::Singleton;
  Vec point;                 // Singleton
  Vec origin, dir;           // HalfLineRay: {origin + t*dir, t >= 0}, ||dir|| = 1
  Vec lo, hi;                // Box (entries may be +-inf)
  const LevelSetC* level = nullptr;  // LevelSet

  static EndpointSet singleton(Vec p) {
    EndpointSet s;
    s.kind = Kind::Singleton;
    s.point = std::move(p);
    return s;
  }
  static EndpointSet ray(Vec o, Vec d) {
    EndpointSet s;
    s.kind = Kind::HalfLineRay;
    s.origin = std::move(o);
    s.dir = d.normalized();
    return s;
  }
  static EndpointSet box(Vec l, Vec h) {
    EndpointSet s;
    s.kind = Kind::Box;
    s.lo = std::move(l);
    s.hi = std::move(h);
    return s;
  }
  static EndpointSet free_space(int n) {
    const double inf = std::numeric_limits<double>::infinity();
    return box(Vec::Constant(n, -inf), Vec::Constant(n, inf));
  }
  static EndpointSet level_set(const LevelSetC* C) {
    EndpointSet s;
    s.kind = Kind::LevelSet;
    s.level = C;
    return s;
  }

  Vec project(const Vec& x) const {
    switch (kind) {
      case Kind::Singleton: return point;
      case Kind::HalfLineRay: {
        const double t = std::max(0.0, dir.dot(x - origin));
        return origin + t * dir;
      }
      case Kind::Box: return x.cwiseMax(lo).cwiseMin(hi);
      case Kind::LevelSet: return project_onto_C(*level, x);
    }
    throw UnsupportedSetKind("EndpointSet::project");
  }

  bool contains(const Vec& x, double tol) const { return (x - project(x)).norm() <= tol; }

  /// Distance of v to the limiting normal cone N(x). x must be a member.
  double normal_cone_distance(const Vec& v, const Vec& x, double tol) const {
    switch (kind) {
      case Kind::Singleton:
        return 0.0;  // the cone is the whole space
      case Kind::HalfLineRay: {
        const double t = dir.dot(x - origin);
        if (t > tol) {
          // relative interior: cone = dir-orthogonal hyperplane
          return std::abs(dir.dot(v));
        }
        // vertex: cone = {w : <w, dir> <= 0}
        return std::max(0.0, dir.dot(v));
      }
      case Kind::Box: {
        // product of per-coordinate cones
        double s2 = 0.0;
        for (int i = 0; i < x.size(); ++i) {
          const bool at_lo = x(i) <= lo(i) + tol;
          const bool at_hi = x(i) >= hi(i) - tol;
          double pi;
          if (at_lo && at_hi)
            pi = v(i);  // degenerate interval: cone is the line
          else if (at_hi)
            pi = std::max(0.0, v(i));
          else if (at_lo)
            pi = std::min(0.0, v(i));
          else
            pi = 0.0;
          const double d = v(i) - pi;
          s2 += d * d;
        }
        return std::sqrt(s2);
      }
      case Kind::LevelSet: {
        const double p = level->psi(x);
        if (p < -level->bdry_tol) return v.norm();  // interior: cone = {0}
        Vec g = level->grad(x);
        const double gn = g.norm();
        if (gn < 2.0 * level->eta)
          throw ZeroGradientOnBoundary("normal cone of level set: gradient below 2*eta");
        const double lam = std::max(0.0, v.dot(g) / (gn * gn));
        return (v - lam * g).norm();
      }
    }
    throw UnsupportedSetKind("EndpointSet::normal_cone_distance");
  }
};

/// Stage endpoint data of the approximating problems: a translate of
/// (base ∩ ball) optionally intersected with C. Covers both the shifted
/// initial sets and the shifted terminal sets.
struct StageEndpointSet {
  EndpointSet base;
  Vec translate;        // applied after intersecting with the ball
  Vec ball_center;      // pre-translate center; radius = inf disables
  double ball_radius = std::numeric_limits<double>::infinity();
  const LevelSetC* C = nullptr;  // intersect with C when non-null

  bool has_ball() const { return std::isfinite(ball_radius); }

  bool contains(const Vec& x, double tol) const {
    const Vec y = x - translate;
    if (!base.contains(y, tol)) return false;
    if (has_ball() && (y - ball_center).norm() > ball_radius + tol) return false;
    if (C && !C->contains(x, tol)) return false;
    return true;
  }

  Vec project(const Vec& x) const {
    const Vec y = x - translate;
    switch (base.kind) {
      case EndpointSet::Kind::Singleton: {
        return base.point + translate;  // feasibility of the point itself is the caller's concern
      }
      case EndpointSet::Kind::HalfLineRay: {
        // One-dimensional: find the feasible t-window and clamp.
        double t_lo = 0.0;
        double t_hi = 1e9;
        if (has_ball()) {
          // |origin + t dir - ball_center|^2 <= r^2, quadratic in t
          const Vec w = base.origin - ball_center;
          const double b = base.dir.dot(w);
          const double c = w.squaredNorm() - ball_radius * ball_radius;
          const double disc = b * b - c;
          if (disc < 0.0) throw EmptyIntersection("stage ray: ball misses the ray");
          t_lo = std::max(t_lo, -b - std::sqrt(disc));
          t_hi = std::min(t_hi, -b + std::sqrt(disc));
          if (t_lo > t_hi) throw EmptyIntersection("stage ray: empty t-window");
        }
        double t = std::clamp(base.dir.dot(y - base.origin), t_lo, t_hi);
        if (C) {
          auto on_ray = [&](double tt) { return Vec(base.origin + tt * base.dir + translate); };
          if (!C->contains(on_ray(t), C->bdry_tol)) {
            // scan the window for the feasible sub-segment nearest to t
            const int ns = 400;
            double best = std::numeric_limits<double>::infinity();
            double t_best = t;
            for (int i = 0; i <= ns; ++i) {
              const double tt = t_lo + (t_hi - t_lo) * i / ns;
              if (C->contains(on_ray(tt), C->bdry_tol) && std::abs(tt - t) < best) {
                best = std::abs(tt - t);
                t_best = tt;
              }
            }
            if (!std::isfinite(best)) throw EmptyIntersection("stage ray: no point inside C");
            // refine the feasibility edge by bisection between t_best and t
            double a = t_best, b = t;
            for (int it = 0; it < 60; ++it) {
              const double mid = 0.5 * (a + b);
              if (C->contains(on_ray(mid), C->bdry_tol))
                a = mid;
              else
                b = mid;
            }
            t = a;
          }
        }
        return base.origin + t * base.dir + translate;
      }
      case EndpointSet::Kind::Box:
      case EndpointSet::Kind::LevelSet: {
        // Alternating projections; adequate for the mildly curved sets used here.
        Vec z = y;
        for (int it = 0; it < 128; ++it) {
          Vec z_new = base.project(z);
          if (has_ball()) {
            const Vec d = z_new - ball_center;
            const double dn = d.norm();
            if (dn > ball_radius) z_new = ball_center + (ball_radius / dn) * d;
          }
          if (C) {
            const Vec shifted = z_new + translate;
            if (!C->contains(shifted, C->bdry_tol)) z_new = project_onto_C(*C, shifted) - translate;
          }
          if ((z_new - z).norm() < 1e-13 * (1.0 + z.norm())) {
            z = z_new;
            break;
          }
          z = z_new;
        }
        return z + translate;
      }
    }
    throw UnsupportedSetKind("StageEndpointSet::project");
  }

  double distance(const Vec& x) const { return (x - project(x)).norm(); }

  /// Normal cone at a member x. The ball and the C-constraint are required to
  /// be inactive there (they are, at the stage optima); otherwise refuse.
  double normal_cone_distance(const Vec& v, const Vec& x, double tol) const {
    const Vec y = x - translate;
    if (has_ball() && (y - ball_center).norm() > ball_radius - 10 * tol &&
        base.kind != EndpointSet::Kind::Singleton)
      throw UnsupportedSetKind("stage set: localization ball active at query point");
    if (C && C->psi(x) > -C->bdry_tol && base.kind != EndpointSet::Kind::Singleton)
      throw UnsupportedSetKind("stage set: C-constraint active at query point");
    return base.normal_cone_distance(v, y, tol);
  }
};

}  // namespace sweep
