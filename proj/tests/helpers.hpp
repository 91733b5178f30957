#pragma once

#include "sweep/instance.hpp"

#include <catch_amalgamated.hpp>

namespace sweep::test {

inline Vec vec2(double a, double b) {
  Vec v(2);
  v << a, b;
  return v;
}

inline Vec random_unit(Rng& rng, int n) {
  std::normal_distribution<double> nd(0.0, 1.0);
  Vec v(n);
  for (int i = 0; i < n; ++i) v(i) = nd(rng);
  return v.normalized();
}

/// Geometry of {x : ||x||^2 - 1 <= 0}, used by several tests.
inline LevelSetC unit_ball_geometry() {
  LevelSetC C;
  C.dim = 2;
  C.psi = [](const Vec& x) { return x.squaredNorm() - 1.0; };
  C.grad_psi = [](const Vec& x, Vec& g) { g = 2.0 * x; };
  C.hess_psi = [](const Vec&, Mat& H) { H = 2.0 * Mat::Identity(2, 2); };
  C.eta = 1.0;
  C.m_psi_bar = 2.0;
  C.m_psi = 1.0;
  C.rho_smooth = 4.0;
  C.bdry_tol = 1e-8;
  return C;
}

inline BoundarySampler circle_sampler(double radius) {
  BoundarySampler s;
  s.boundary = [radius](Rng& rng) {
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    const double th = 2.0 * std::numbers::pi * u01(rng);
    Vec x(2);
    x << radius * std::cos(th), radius * std::sin(th);
    return x;
  };
  s.in_set = [radius](Rng& rng) {
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    const double th = 2.0 * std::numbers::pi * u01(rng);
    const double r = radius * std::sqrt(u01(rng));
    Vec x(2);
    x << r * std::cos(th), r * std::sin(th);
    return x;
  };
  s.in_tube = s.in_set;
  return s;
}

}  // namespace sweep::test
