#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <vector>

#include "phylosde/covariance.hpp"
#include "phylosde/model.hpp"
#include "phylosde/tree.hpp"

namespace phylosde {

// design matrix and response for a linear mean model
struct RegressionDesign {
  Eigen::MatrixXd predictors;
  Eigen::VectorXd response;
};

Eigen::VectorXd ols_estimate(const RegressionDesign& design);
Eigen::VectorXd gls_estimate(const RegressionDesign& design,
                             const Eigen::MatrixXd& cov);

double log_likelihood(const RegressionDesign& design,
                      const Eigen::VectorXd& coef, const Eigen::MatrixXd& cov);

// generalized R^2: residual and total sums of squares are both measured in
// the whitened metric of cov, with the total centered at the GLS mean
double r_squared(const RegressionDesign& design, const Eigen::VectorXd& coef,
                 const Eigen::MatrixXd& cov);

// diffusion rate of the predictor: GLS mean under the path covariance, then
// the quadratic form of the residuals divided by n. alpha is the pull when
// the predictor reverts to its ancestral value; 0 means a plain random walk.
double estimate_predictor_rate(const PhyloTree& tree, const Eigen::VectorXd& x,
                               double alpha = 0.0);

// inclusive parameter range on the natural scale; the optimizer works on
// log values. lo == hi pins the parameter at that value.
struct ParamBounds {
  double lo, hi;
};

struct FitConfig {
  double b_tolerance = 1e-6;       // relative sup-norm change of the coefficients
  int max_gls_iterations = 100;
  int max_starts = 5;
  int max_attempts_per_start = 5;
  int improvements_to_stop = 3;
  int max_objective_evals = 2000;  // per optimizer run
  ParamBounds alpha_box{1e-5, 50.0};
  ParamBounds sigma_box{1e-6, 100.0};
  ParamBounds tau_box{1e-6, 100.0};
  std::uint64_t seed = 0;
};

struct StartTrace {
  int start = 0;
  int attempt = 0;
  double log_likelihood = 0.0;
  bool converged = false;
  bool accepted = false;  // became the best so far
};

struct FitResult {
  ModelKind kind = ModelKind::BM;
  Eigen::VectorXd coefficients;  // intercept and slope of the optimum line
  ModelParams params;            // structural estimates, sigma_theta derived
  double sigma_x2 = 0.0;         // BM rate of the predictor
  double log_likelihood = 0.0;
  double r2 = 0.0;
  int k = 0;  // free structural parameters plus regression coefficients
  int n = 0;
  int iterations = 0;  // alternation rounds in the winning run
  bool converged = false;
  std::vector<StartTrace> trace;
  std::uint64_t seed = 0;
};

// species trait values paired with a predictor, in tree tip order
struct FitData {
  std::vector<std::string> species;
  Eigen::VectorXd x;
  Eigen::VectorXd y;
};

FitResult fit_model(const PhyloTree& tree, const FitData& data,
                    ModelKind kind, const FitConfig& config = {});

}  // namespace phylosde
