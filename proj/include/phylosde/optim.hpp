#pragma once

#include <Eigen/Core>
#include <functional>

namespace phylosde {

struct NelderMeadOptions {
  int max_evals = 2000;  // checked between iterations; one step may overrun
  double x_tolerance = 1e-8;   // simplex diameter
  double f_tolerance = 1e-10;  // spread of vertex values
  double initial_step = 0.5;
};

struct NelderMeadResult {
  Eigen::VectorXd x;
  double f = 0.0;
  int evals = 0;
  bool converged = false;
};

// bounded Nelder-Mead; proposals are clamped into [lo, hi] coordinatewise.
// Deterministic for a given start and objective.
NelderMeadResult nelder_mead(
    const std::function<double(const Eigen::VectorXd&)>& objective,
    Eigen::VectorXd start, const Eigen::VectorXd& lo, const Eigen::VectorXd& hi,
    const NelderMeadOptions& options = {});

}  // namespace phylosde
