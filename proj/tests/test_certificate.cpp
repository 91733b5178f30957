#include "helpers.hpp"

#include "sweep/certificate.hpp"
#include "sweep/commands.hpp"

using namespace sweep;
using sweep::test::vec2;

namespace {

Candidate analytic(int N = 2000) {
  const auto inst = builtin("annulus_example");
  return cmd::analytic_candidate(inst, uniform_grid(inst.t_a, inst.t_b, N));
}

}  // namespace

TEST_CASE("analytic candidate certifies cleanly") {
  const auto inst = builtin("annulus_example");
  const auto cand = analytic();
  const auto rep = certify(inst, cand);
  CHECK(rep.overall_pass());
  CHECK(rep.nontriviality.residual <= 1e-15);  // 5/8 + 3/8 = 1 exactly
  CHECK(rep.admissibility.residual <= 1e-6);   // finite-difference floor
  CHECK(rep.adjoint.residual <= 1e-6);         // trapezoid floor
  CHECK(rep.slackness_a.residual == 0.0);
  CHECK(rep.slackness_b.residual <= 1e-12);
  CHECK(rep.transversality.residual <= 1e-12);
  CHECK(rep.weak_max.residual <= 1e-12);
  CHECK(rep.support.residual == 0.0);

  // the terminal atom identity: jump = grad psi(0,1) * (1/16) = (0, -3/8)
  REQUIRE(cand.p.atoms.size() == 1);
  CHECK((cand.p.atoms[0].second - vec2(0.0, -0.375)).norm() <= 1e-15);
  CHECK(cand.nu.atoms[0].second == 1.0 / 16.0);
}

TEST_CASE("nontriviality") {
  Grid g = uniform_grid(0.0, 1.0, 4);
  BVPath p;
  p.grid = g;
  p.values.assign(g.size(), Vec::Zero(2));
  CHECK(check_nontriviality(p, 1.0) == 0.0);
  p.values.back() = vec2(1, 0);
  CHECK(check_nontriviality(p, 1.0) == 1.0);
  CHECK_THROWS_AS(check_nontriviality(p, -0.2), NegativeLambda);
}

TEST_CASE("admissibility discriminates a missing multiplier") {
  const auto inst = builtin("annulus_example");
  auto cand = analytic(1000);
  SECTION("closed form passes at the FD floor") {
    CHECK(check_admissibility(inst, cand.grid, cand.x, cand.u.values, cand.xi) <= 1e-6);
  }
  SECTION("xi = 0 leaves the full normal-cone term as residual") {
    std::fill(cand.xi.begin(), cand.xi.end(), 0.0);
    const double r = check_admissibility(inst, cand.grid, cand.x, cand.u.values, cand.xi);
    CHECK(r >= 0.9);
    CHECK(r <= 1.1);  // the missing term is xi grad psi with norm exactly 1
  }
}

TEST_CASE("adjoint equation checks") {
  const auto inst = builtin("annulus_example");
  const auto cand = analytic(1000);
  const auto bundle = build_bundle(inst, cand.grid, cand.x, cand.u.values);

  SECTION("measure atoms must sit on grid nodes") {
    auto bad = cand;
    bad.nu.atoms = {{0.1234567, 0.01}};
    CHECK_THROWS_AS(check_adjoint(inst, bad.grid, bad.x, bad.xi, bad.p, bad.nu, bundle),
                    UnmatchedAtom);
    BVPath off = cand.p;
    off.atoms = {{0.1234567, vec2(0, 1)}};
    CHECK_THROWS_AS(check_adjoint(inst, cand.grid, cand.x, cand.xi, off, cand.nu, bundle),
                    UnmatchedAtom);
  }
  SECTION("the zero multiplier pair is trivially consistent") {
    auto zero = cand;
    zero.p.values.assign(zero.grid.size(), Vec::Zero(2));
    zero.p.atoms.clear();
    zero.nu = SignedMeasure::zero(zero.grid);
    zero.lambda = 0.0;
    CHECK(check_adjoint(inst, zero.grid, zero.x, zero.xi, zero.p, zero.nu, bundle) == 0.0);
    const auto rep = certify(inst, zero);
    CHECK_FALSE(rep.nontriviality.pass);  // caught here instead
  }
  SECTION("a dropped measure atom shows up as the jump residual") {
    auto noatom = cand;
    noatom.nu.atoms.clear();
    const double r = check_adjoint(inst, noatom.grid, noatom.x, noatom.xi, noatom.p, noatom.nu, bundle);
    CHECK(r == Catch::Approx(0.375).margin(1e-12));
  }
}

TEST_CASE("slackness conditions") {
  const auto inst = builtin("annulus_example");
  const auto cand = analytic(1000);
  const double band = inst.geometry->bdry_tol;

  SECTION("closed form: radial orthogonality is exact") {
    const auto [ra, rb] = check_slackness(inst, cand.grid, cand.x, cand.xi, cand.p, band);
    CHECK(ra == 0.0);  // no interior nodes on the closed form
    CHECK(rb <= 1e-12);
  }
  SECTION("radial adjoint violates complementary slackness with residual 1") {
    auto bad = cand;
    for (std::size_t i = 0; i < bad.grid.size(); ++i) bad.p.values[i] = bad.x[i];
    bad.p.atoms.clear();
    const auto [ra, rb] = check_slackness(inst, bad.grid, bad.x, bad.xi, bad.p, band);
    CHECK(rb == Catch::Approx(1.0).margin(1e-12));  // |xi <grad psi, x>| = (1/6) * 6
  }
  SECTION("interior arcs with zero xi are clean") {
    const auto deep = builtin("deep_interior_example");
    const Grid g = uniform_grid(0.0, 1.0, 60);
    std::vector<Vec> x;
    for (double t : g) x.push_back(vec2(0.2 * t, -0.1 * t));
    std::vector<double> xi(g.size(), 0.0);
    BVPath p;
    p.grid = g;
    p.values.assign(g.size(), vec2(0.3, 0.1));
    const auto [ra, rb] = check_slackness(deep, g, x, xi, p, deep.geometry->bdry_tol);
    CHECK(ra == 0.0);
    CHECK(rb == 0.0);
  }
}

TEST_CASE("transversality") {
  const auto inst = builtin("annulus_example");
  const auto cand = analytic(500);
  SECTION("closed form satisfies the endpoint inclusions") {
    CHECK(check_transversality(inst, cand.grid, cand.x, cand.p, cand.lambda, 1e-6) <= 1e-12);
  }
  SECTION("singleton C0 never contributes") {
    auto c = cand;
    c.p.values.front() = vec2(13.0, -7.0);  // arbitrary initial adjoint value
    CHECK(check_transversality(inst, c.grid, c.x, c.p, c.lambda, 1e-6) <= 1e-12);
  }
  SECTION("dropping lambda breaks the terminal inclusion") {
    CHECK(check_transversality(inst, cand.grid, cand.x, cand.p, 0.0, 1e-6) ==
          Catch::Approx(0.375).margin(1e-12));
  }
  SECTION("infeasible endpoints are reported, not scored") {
    auto c = cand;
    c.x.back() = vec2(0.5, 1.2);
    CHECK_THROWS_AS(check_transversality(inst, c.grid, c.x, c.p, c.lambda, 1e-6),
                    EndpointInfeasible);
  }
}

TEST_CASE("weak maximization") {
  const auto inst = builtin("annulus_example");
  const auto cand = analytic(500);
  const auto bundle = build_bundle(inst, cand.grid, cand.x, cand.u.values);
  SECTION("closed form attains the maximum") {
    CHECK(check_weak_max(inst, cand.grid, cand.u, cand.p, bundle) <= 1e-12);
  }
  SECTION("zero adjoint makes every control optimal") {
    auto c = cand;
    c.p.values.assign(c.grid.size(), Vec::Zero(2));
    c.p.atoms.clear();
    CHECK(check_weak_max(inst, c.grid, c.u, c.p, bundle) == 0.0);
  }
  SECTION("u = pi violates the maximization with residual above 1") {
    auto c = cand;
    for (auto& v : c.u.values) v = Vec::Constant(1, std::numbers::pi);
    const double r = check_weak_max(inst, c.grid, c.u, c.p, bundle);
    CHECK(r >= 1.0);
    CHECK(r >= std::numbers::pi / 2.0 - 1e-9);  // at t = 0 the gap is already pi/2
  }
  SECTION("prox-regular sets need a sampler") {
    auto modified = inst;
    modified.U.kind = ControlSet::Kind::ProxRegular;
    modified.U.projector = [](double t, const Vec& u) {
      return Vec(u.cwiseMax(Vec::Constant(1, t)).cwiseMin(Vec::Constant(1, std::numbers::pi)));
    };
    CHECK_THROWS_AS(check_weak_max(modified, cand.grid, cand.u, cand.p, bundle),
                    UnsupportedSetKind);
  }
}

TEST_CASE("support of the measure") {
  const auto deep = builtin("deep_interior_example");
  const Grid g = uniform_grid(0.0, 1.0, 40);
  std::vector<Vec> x;
  for (double t : g) x.push_back(vec2(0.2 * t, -0.1 * t));  // deep interior throughout
  SignedMeasure nu = SignedMeasure::zero(g);
  CHECK(check_support(deep, g, x, nu, deep.geometry->bdry_tol) == 0.0);
  nu.atoms = {{g[20], 0.25}};
  std::fill(nu.density.begin(), nu.density.end(), 0.1);
  CHECK(check_support(deep, g, x, nu, deep.geometry->bdry_tol) >=
        0.25 + 0.1 - 1e-9);  // atom mass plus most of the density mass
}

TEST_CASE("positive homogeneity of the linear checks") {
  const auto inst = builtin("annulus_example");
  const auto cand = analytic(500);
  const double c = 2.0;
  auto scaled = cand;
  scaled.lambda *= c;
  for (auto& v : scaled.p.values) v *= c;
  for (auto& [t, j] : scaled.p.atoms) j *= c;
  for (auto& d : scaled.nu.density) d *= c;
  for (auto& [t, m] : scaled.nu.atoms) m *= c;

  const auto tols = CertificateTolerances::analytic();
  const auto r1 = certify(inst, cand, tols);
  const auto r2 = certify(inst, scaled, tols);
  CHECK(r2.adjoint.residual == Catch::Approx(c * r1.adjoint.residual).margin(1e-12));
  CHECK(r2.slackness_b.residual == Catch::Approx(c * r1.slackness_b.residual).margin(1e-12));
  CHECK(r2.transversality.residual == Catch::Approx(c * r1.transversality.residual).margin(1e-12));
  CHECK(r2.weak_max.residual == Catch::Approx(c * r1.weak_max.residual).margin(1e-12));
  CHECK(r2.admissibility.residual == r1.admissibility.residual);  // not a multiplier check
  CHECK(r2.slackness_a.residual == r1.slackness_a.residual);
  CHECK(r2.nontriviality.residual ==
        Catch::Approx((c - 1.0) * (cand.p.values.back().norm() + cand.lambda)).margin(1e-12));
}

TEST_CASE("measure recovery refits the terminal atom") {
  // strip the atom bookkeeping from the closed form and recover it
  const auto inst = builtin("annulus_example");
  auto cand = analytic(800);
  BVPath p = cand.p;
  p.atoms.clear();
  const auto bundle = build_bundle(inst, cand.grid, cand.x, cand.u.values);
  const SignedMeasure nu = recover_measure(inst, cand.grid, cand.x, cand.xi, p, bundle);
  REQUIRE(nu.atoms.size() == 1);
  CHECK(nu.atoms[0].first == cand.grid.back());
  CHECK(nu.atoms[0].second == Catch::Approx(1.0 / 16.0).margin(2e-4));
  REQUIRE(p.atoms.size() == 1);
  // the recovered pair passes the adjoint check
  CHECK(check_adjoint(inst, cand.grid, cand.x, cand.xi, p, nu, bundle) <= 1e-3);
  double density_mass = 0.0;
  for (std::size_t i = 0; i + 1 < cand.grid.size(); ++i)
    density_mass += 0.5 * (cand.grid[i + 1] - cand.grid[i]) *
                    (std::abs(nu.density[i]) + std::abs(nu.density[i + 1]));
  CHECK(density_mass <= 1e-3);  // the true measure is purely atomic
}

TEST_CASE("BVPath atom bookkeeping") {
  Grid g = uniform_grid(0.0, 1.0, 10);
  BVPath p;
  p.grid = g;
  p.values.assign(g.size(), vec2(1, 0));
  p.values.back() = vec2(1, -1);
  p.atoms.emplace_back(g.back(), vec2(0, -1));
  p.validate();
  CHECK((p.left_limit(g.size() - 1) - vec2(1, 0)).norm() == 0.0);  // value minus jump
  p.atoms.emplace_back(0.333, vec2(0, 1));
  CHECK_THROWS_AS(p.validate(), UnmatchedAtom);
}
