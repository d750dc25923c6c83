#pragma once

#include <Eigen/Core>
#include <array>
#include <memory>

#include "phylosde/model.hpp"

namespace phylosde {

// first and second moments of (y, theta, sigma_y) at a single time
struct MomentState {
  double time = 0.0;
  // raw second moments
  double e_yy = 0.0, e_tt = 0.0, e_ss = 0.0;
  double e_yt = 0.0, e_ys = 0.0, e_ts = 0.0;
  // first moments
  double mean_y = 0.0, mean_theta = 0.0, mean_sigma = 0.0;

  double var_y() const { return e_yy - mean_y * mean_y; }
  double var_theta() const { return e_tt - mean_theta * mean_theta; }
  double var_sigma() const { return e_ss - mean_sigma * mean_sigma; }
  double cov_y_theta() const { return e_yt - mean_y * mean_theta; }
  double cov_y_sigma() const { return e_ys - mean_y * mean_sigma; }
  double cov_theta_sigma() const { return e_ts - mean_theta * mean_sigma; }
};

// weights of the initial trait and optimum in E[y_t | y_0, theta_0]
struct ConditionalCoefficients {
  double on_trait;    // multiplies y_0
  double on_optimum;  // multiplies theta_0
};

// linear drift of the state (y, theta, sigma_y)
Eigen::Matrix3d drift_matrix(const ModelParams& params);

ConditionalCoefficients conditional_coefficients(const ModelParams& params,
                                                 double t);

// E[(sigma_y at time t)^2] = sigma_y0^2 + tau^2 t
double expected_rate_square(const ModelParams& params, double t);

// time derivatives of (e_yy, e_tt, e_ss, e_yt, e_ys, e_ts)
std::array<double, 6> moment_ode_rhs(const MomentState& state,
                                     const ModelParams& params);

// closed-form moment solution reusable at many times; exact up to rounding
class MomentSolution {
public:
  MomentSolution(const ModelParams& params, const InitialState& init);
  MomentState at(double t) const;

private:
  struct Impl;
  std::shared_ptr<const Impl> impl_;
};

MomentState solve_moments_closed(const ModelParams& params,
                                 const InitialState& init, double t);

// fixed-step RK4 on the second-moment system; first moments are exact.
// Serves as an independent cross-check of the closed form.
MomentState solve_moments_numeric(const ModelParams& params,
                                  const InitialState& init, double t,
                                  double step = 1e-3);

// correlation-transfer ratio Cov[y_t, theta_t] / Var[theta_t]; fails on a
// degenerate optimum variance
double rho(const ModelParams& params, const InitialState& init, double t);

}  // namespace phylosde
