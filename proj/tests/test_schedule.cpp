#include "helpers.hpp"

#include "sweep/schedule.hpp"

using namespace sweep;
using sweep::test::vec2;

TEST_CASE("schedule construction and the defining identity") {
  SECTION("alpha formula") {
    const auto s = make_schedule(1.0, 1.0, 2.0 * std::numbers::e, 3.0, 1);
    CHECK(s.alphas[0] == Catch::Approx(1.0 / (2.0 * std::numbers::e)).epsilon(1e-15));
  }
  SECTION("strict inequality gamma > 2 M_bar / eta") {
    CHECK_THROWS_AS(make_schedule(1.0, 1.0, 2.0, 3.0, 4), GammaTooSmall);
  }
  SECTION("identity holds to 1e-12 relative for every k") {
    const auto s = make_schedule(8.0, 2.7, 4.0 * 8.0 / 2.7, 3.0, 12);
    for (int k = 0; k < s.count(); ++k) CHECK(s.identity_residual(k) <= 1e-12);
  }
  SECTION("monotonicity") {
    const auto s = make_schedule(8.0, 2.7, 4.0 * 8.0 / 2.7, 3.0, 10);
    for (int k = 0; k + 1 < s.count(); ++k) {
      CHECK(s.gammas[k + 1] > s.gammas[k]);
      CHECK(s.alphas[k + 1] < s.alphas[k]);
      CHECK(s.rhos[k + 1] < s.rhos[k]);
    }
  }
  SECTION("slow growth just above the floor is rejected") {
    // ln(c gamma)/gamma is still increasing there, violating alpha decrease
    CHECK_THROWS_AS(make_schedule(1.0, 1.0, 2.05, 1.2, 6), ScheduleNotMonotone);
  }
}

TEST_CASE("inner set margin") {
  const auto s = make_schedule(1.0, 1.0, 2.0 * std::numbers::e, 4.0, 6);
  CHECK(s.inner_set_margin(0) == Catch::Approx(1.0 / (2.0 * std::numbers::e)).epsilon(1e-15));
  for (int k = 0; k + 1 < s.count(); ++k)
    CHECK(s.inner_set_margin(k + 1) < s.inner_set_margin(k));
  // membership arithmetic: psi = -2 alpha_k lies inside C(k)
  CHECK(-2.0 * s.inner_set_margin(3) <= -s.inner_set_margin(3));
}

TEST_CASE("shifted starting points") {
  const auto inst = builtin("annulus_example");
  const auto& C = *inst.geometry;
  const auto s = make_schedule(inst.M_bar, C.eta, 4.0 * inst.M_bar / C.eta, 3.0, 8);

  SECTION("boundary start moves inward along -grad psi") {
    for (int k = 0; k < s.count(); ++k) {
      const Vec c = shift_initial_point(C, vec2(1, 0), s.rhos[k]);
      CHECK(c(1) == 0.0);
      CHECK(c(0) == Catch::Approx(1.0 + s.rhos[k]).epsilon(1e-14));
      // the shifted point clears the stage margin: psi(c_k) <= -alpha_k
      CHECK(C.psi(c) <= -s.alphas[k]);
    }
  }
  SECTION("interior start unchanged") {
    CHECK((shift_initial_point(C, vec2(1.5, 0), s.rhos[0]) - vec2(1.5, 0)).norm() == 0.0);
  }
  SECTION("shift vanishes as k grows") {
    const Vec c_last = shift_initial_point(C, vec2(1, 0), s.rhos.back());
    CHECK((c_last - vec2(1, 0)).norm() <= 2.0 * s.rhos.back());
    CHECK(s.rhos.back() < 1e-3);
  }
}

TEST_CASE("shifted terminal set") {
  const auto inst = builtin("annulus_example");
  const auto& C = *inst.geometry;
  const Vec x_bar_1 = vec2(0, 1);

  SECTION("zero shift reduces to C1 within the ball, inside C") {
    const auto set = shifted_terminal_set(C, inst.C1, x_bar_1, x_bar_1, 0.5);
    CHECK(set.contains(vec2(0, 1.2), 1e-9));
    CHECK_FALSE(set.contains(vec2(0, 1.8), 1e-9));  // outside the delta0 ball
    CHECK_FALSE(set.contains(vec2(0.3, 1.0), 1e-9));
    const Vec p = set.project(vec2(0.2, 1.1));
    CHECK(p(0) == Catch::Approx(0.0).margin(1e-12));
    CHECK(p(1) == Catch::Approx(1.1).margin(1e-12));
  }
  SECTION("translated membership") {
    const auto set = shifted_terminal_set(C, inst.C1, x_bar_1, vec2(0.01, 1.0), 0.5);
    CHECK(set.contains(vec2(0.01, 1.2), 1e-9));
    CHECK_FALSE(set.contains(vec2(0.0, 1.2), 1e-9));
  }
  SECTION("sets converge as the shift vanishes") {
    const Vec probe = vec2(0.13, 1.21);
    const auto limit_set = shifted_terminal_set(C, inst.C1, x_bar_1, x_bar_1, 0.5);
    const Vec p_limit = limit_set.project(probe);
    double prev = std::numeric_limits<double>::infinity();
    for (double shift : {0.08, 0.04, 0.02, 0.01, 0.005}) {
      const auto set = shifted_terminal_set(C, inst.C1, x_bar_1, vec2(shift, 1.0), 0.5);
      const double d = (set.project(probe) - p_limit).norm();
      CHECK(d <= prev + 1e-12);
      prev = d;
    }
    CHECK(prev <= 0.006);
  }
}
