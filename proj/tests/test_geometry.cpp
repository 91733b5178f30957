#include "helpers.hpp"

#include "sweep/geometry.hpp"
#include "sweep/instance.hpp"

using namespace sweep;
using sweep::test::vec2;

TEST_CASE("annulus psi values") {
  const auto inst = builtin("annulus_example");
  const auto& C = *inst.geometry;
  CHECK(C.psi(vec2(1, 0)) == 0.0);
  CHECK(C.psi(vec2(0, 0)) == 4.0);
  CHECK(C.psi(vec2(1.5, 0)) == Catch::Approx(-2.1875).margin(1e-14));
}

TEST_CASE("classification against the boundary band") {
  const auto inst = builtin("annulus_example");
  const auto& C = *inst.geometry;
  CHECK(C.classify_with_band(vec2(1, 0), 1e-6) == Region::BoundaryBand);
  CHECK(C.classify_with_band(vec2(1.5, 0), 1e-6) == Region::DeepInterior);
  CHECK(C.classify_with_band(vec2(3, 0), 1e-6) == Region::Outside);
}

TEST_CASE("gradient and hessian agree with finite differences") {
  const auto inst = builtin("annulus_example");
  const auto& C = *inst.geometry;
  Rng rng(31);
  double worst_grad = 0.0, worst_hess = 0.0;
  Vec g(2), gp(2), gm(2);
  Mat H(2, 2), Hfd(2, 2);
  for (int k = 0; k < 100; ++k) {
    const Vec x = inst.sampler.in_set(rng);
    C.grad_psi(x, g);
    const double h = 1e-6 * (1.0 + x.norm());
    Vec fd(2);
    for (int j = 0; j < 2; ++j) {
      Vec xp = x, xm = x;
      xp(j) += h;
      xm(j) -= h;
      fd(j) = (C.psi(xp) - C.psi(xm)) / (2.0 * h);
    }
    worst_grad = std::max(worst_grad, (g - fd).norm() / g.norm());

    C.hess_psi(x, H);
    const double h2 = 1e-5 * (1.0 + x.norm());
    for (int j = 0; j < 2; ++j) {
      Vec xp = x, xm = x;
      xp(j) += h2;
      xm(j) -= h2;
      C.grad_psi(xp, gp);
      C.grad_psi(xm, gm);
      Hfd.col(j) = (gp - gm) / (2.0 * h2);
    }
    worst_hess = std::max(worst_hess, (H - Hfd).norm() / H.norm());
  }
  CHECK(worst_grad <= 1e-6);
  CHECK(worst_hess <= 1e-5);
}

TEST_CASE("constant estimation on the annulus") {
  const auto inst = builtin("annulus_example");
  const auto c = estimate_constants(*inst.geometry, inst.sampler, 0.9, 3000, 2024);
  // ||grad psi|| = 2r|2r^2-5|: exactly 6 on r=1 and 12 on r=2
  CHECK(c.eta == Catch::Approx(2.7).margin(1e-12));
  CHECK(c.m_psi_bar == Catch::Approx(12.0).margin(1e-12));
  CHECK(c.m_psi >= 4.0 * c.eta / inst.geometry->rho_smooth);  // the M_psi >= 4 eta / rho choice
  CHECK(c.m_psi <= 50.75 / 2.0 + 1e-9);

  // fresh sample, different seed: the estimated eta keeps the strict margin
  Rng rng(989898);
  Vec g(2);
  for (int i = 0; i < 500; ++i) {
    inst.geometry->grad_psi(inst.sampler.boundary(rng), g);
    CHECK(g.norm() > 2.0 * c.eta);
  }
}

TEST_CASE("constant estimation on the unit sphere") {
  LevelSetC C = sweep::test::unit_ball_geometry();
  const auto c = estimate_constants(C, sweep::test::circle_sampler(1.0), 1.0, 500, 7);
  CHECK(c.eta == Catch::Approx(1.0).margin(1e-12));  // ||grad psi|| = 2 on the whole boundary
}

TEST_CASE("projection onto the annulus") {
  const auto inst = builtin("annulus_example");
  const auto& C = *inst.geometry;
  CHECK((project_onto_C(C, vec2(0.5, 0)) - vec2(1, 0)).norm() <= 1e-14);
  CHECK((project_onto_C(C, vec2(1.5, 0)) - vec2(1.5, 0)).norm() == 0.0);
  CHECK((project_onto_C(C, vec2(0, 2.5)) - vec2(0, 2)).norm() <= 1e-14);

  Rng rng(5);
  for (int i = 0; i < 200; ++i) {
    Vec x = 2.6 * sweep::test::random_unit(rng, 2);
    const Vec p = project_onto_C(C, x);
    CHECK(C.psi(p) <= C.bdry_tol);
    CHECK((project_onto_C(C, p) - p).norm() <= 1e-12);  // idempotent
  }
}

TEST_CASE("generic Newton projection matches the closed form") {
  const auto inst = builtin("annulus_example");
  LevelSetC C = *inst.geometry;
  C.projector_override = nullptr;
  Rng rng(17);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  for (int i = 0; i < 100; ++i) {
    // points just outside the outer circle, within the prox radius
    const double th = 2.0 * std::numbers::pi * u01(rng);
    const double r = 2.0 + 0.04 * u01(rng);
    const Vec x = vec2(r * std::cos(th), r * std::sin(th));
    const Vec p_newton = project_onto_C(C, x);
    const Vec p_exact = (*inst.geometry).projector_override(x);
    CHECK((p_newton - p_exact).norm() <= 1e-9);
  }
  CHECK_THROWS_AS(project_onto_C(C, vec2(0.05, 0)), OutsideProxRadius);
}
