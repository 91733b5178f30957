// Minimal library walkthrough: integrate the annulus instance at one gamma,
// reconstruct the multiplier, and print the path bounds.

#include "sweep/dynamics.hpp"
#include "sweep/schedule.hpp"

#include <iostream>

int main() {
  using namespace sweep;
  const ProblemInstance inst = builtin("annulus_example");
  const auto cf = closed_form_solution(inst.name);

  const Grid grid = uniform_grid(inst.t_a, inst.t_b, 1000);
  const GridControl u = GridControl::from_function(grid, cf.u);

  const double gamma = 1e4;
  const double alpha = std::log(inst.geometry->eta * gamma / (2.0 * inst.M_bar)) / gamma;
  const Vec x0 = shift_initial_point(*inst.geometry, cf.x(inst.t_a), alpha / inst.geometry->eta);

  const auto res = integrate_penalized(inst, x0, u, gamma, grid);
  const auto bounds = check_trajectory_bounds(inst, res.traj);

  double sup_err = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i)
    sup_err = std::max(sup_err, (res.traj.states[i] - cf.x(grid[i])).norm());

  std::cout << "sup distance to the closed form: " << sup_err << "\n"
            << "max psi along the path:         " << bounds.max_psi << "\n"
            << "max xi (bound " << bounds.xi_bound << "): " << bounds.max_xi << "\n"
            << "substeps: " << res.stats.total_substeps << "\n";
  return 0;
}
