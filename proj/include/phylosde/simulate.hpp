#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "phylosde/covariance.hpp"
#include "phylosde/model.hpp"
#include "phylosde/tree.hpp"

namespace phylosde {

enum class PredictorKind { BM, OU, Default };

// Euler-Maruyama settings. The optimum is tied to the predictor by
// theta = b0 + b1 x throughout; for kinds with a reverting optimum the
// predictor itself reverts (toward its root value), which gives theta the
// same dynamics. NaN fields are resolved from the model parameters:
// dt from the shortest branch, sigma_x from sigma_theta / |b1|,
// alpha_x from alpha_theta, y_root from the optimum at the root.
struct SimConfig {
  double dt = std::numeric_limits<double>::quiet_NaN();
  std::uint64_t seed = 0;
  PredictorKind predictor = PredictorKind::Default;
  double alpha_x = std::numeric_limits<double>::quiet_NaN();
  double sigma_x = std::numeric_limits<double>::quiet_NaN();
  double b0 = 0.0;
  double b1 = 1.0;
  double x_root = 0.0;
  double y_root = std::numeric_limits<double>::quiet_NaN();
  bool record_path = true;
};

struct PathPoint {
  double time, x, theta, y, sigma;
};

using SimPath = std::vector<PathPoint>;

// single lineage over [0, duration]; with record_path the whole stepped
// trajectory comes back, otherwise just the ends
SimPath simulate_path(const ModelParams& params, const SimConfig& config,
                      double duration);

struct TipDataset {
  std::vector<std::string> species;
  Eigen::VectorXd x;  // predictor at the tips
  Eigen::VectorXd y;  // trait at the tips
  ModelParams generating;
  SimConfig config;
};

TipDataset simulate_tips(const PhyloTree& tree, const ModelParams& params,
                         const SimConfig& config);

// Monte Carlo estimate of the pair cross moments, with delete-one jackknife
// standard errors. Simulates (y, theta, sigma) directly, which makes it an
// independent check of the closed-form pair covariances.
struct EmpiricalPairCovariance {
  PairCovariance estimate;
  PairCovariance standard_error;
  long n_paths;
};

EmpiricalPairCovariance monte_carlo_covariance(const ModelParams& params,
                                               const InitialState& init,
                                               double t_shared, double t_i,
                                               double t_j, long n_paths,
                                               const SimConfig& config);

}  // namespace phylosde
