#include <doctest.h>

#include <cmath>

#include "phylosde/optim.hpp"

using namespace phylosde;

TEST_SUITE_BEGIN("optim");

namespace {

Eigen::VectorXd vec2(double a, double b) {
  Eigen::VectorXd v(2);
  v << a, b;
  return v;
}

}  // namespace

TEST_CASE("quadratic bowl") {
  const auto bowl = [](const Eigen::VectorXd& x) {
    const double dx = x[0] - 1.5, dy = x[1] + 0.25;
    return 3.0 * dx * dx + dy * dy;
  };
  const NelderMeadResult r =
      nelder_mead(bowl, vec2(0, 0), vec2(-10, -10), vec2(10, 10));
  CHECK(r.converged);
  CHECK(r.x[0] == doctest::Approx(1.5).epsilon(1e-5));
  CHECK(r.x[1] == doctest::Approx(-0.25).epsilon(1e-5));
  CHECK(r.f < 1e-9);
}

TEST_CASE("rosenbrock valley") {
  const auto rosen = [](const Eigen::VectorXd& x) {
    const double a = 1.0 - x[0], b = x[1] - x[0] * x[0];
    return a * a + 100.0 * b * b;
  };
  NelderMeadOptions options;
  options.max_evals = 5000;
  const NelderMeadResult r =
      nelder_mead(rosen, vec2(-1.2, 1.0), vec2(-5, -5), vec2(5, 5), options);
  CHECK(r.converged);
  CHECK(r.x[0] == doctest::Approx(1.0).epsilon(1e-3));
  CHECK(r.x[1] == doctest::Approx(1.0).epsilon(1e-3));
}

TEST_CASE("solution lands on the active bound") {
  const auto slope = [](const Eigen::VectorXd& x) {
    return (x[0] - 4.0) * (x[0] - 4.0) + x[1] * x[1];
  };
  const NelderMeadResult r =
      nelder_mead(slope, vec2(0.5, 0.5), vec2(0, 0), vec2(1, 1));
  CHECK(r.x[0] == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(r.x[1] == doctest::Approx(0.0).epsilon(1e-4));
  CHECK(r.f == doctest::Approx(9.0).epsilon(1e-6));
}

TEST_CASE("degenerate box keeps every proposal inside") {
  int evals_outside = 0;
  const auto f = [&](const Eigen::VectorXd& x) {
    if (x[1] != 2.0) ++evals_outside;
    return x[0] * x[0] + x[1];
  };
  const NelderMeadResult r =
      nelder_mead(f, vec2(3, 2), vec2(-10, 2), vec2(10, 2));
  CHECK(evals_outside == 0);
  CHECK(r.x[1] == 2.0);
  CHECK(r.f <= 11.0);  // never worse than the start
}

TEST_CASE("evaluation budget is respected") {
  int calls = 0;
  const auto f = [&](const Eigen::VectorXd& x) {
    ++calls;
    return std::cos(7.0 * x[0]) + x.squaredNorm();
  };
  NelderMeadOptions options;
  options.max_evals = 40;
  const NelderMeadResult r =
      nelder_mead(f, vec2(2, -3), vec2(-10, -10), vec2(10, 10), options);
  // the budget is checked between iterations, so one iteration may overrun
  CHECK(calls <= 40 + 4);
  CHECK(r.evals == calls);
}

TEST_CASE("deterministic for a fixed start") {
  const auto f = [](const Eigen::VectorXd& x) {
    return std::sin(x[0]) * std::cos(x[1]) + 0.1 * x.squaredNorm();
  };
  const NelderMeadResult a =
      nelder_mead(f, vec2(1, 1), vec2(-4, -4), vec2(4, 4));
  const NelderMeadResult b =
      nelder_mead(f, vec2(1, 1), vec2(-4, -4), vec2(4, 4));
  CHECK(a.f == b.f);
  CHECK(a.evals == b.evals);
  CHECK((a.x - b.x).cwiseAbs().maxCoeff() == 0.0);
}

TEST_SUITE_END();
