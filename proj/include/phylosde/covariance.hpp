#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

#include "phylosde/model.hpp"
#include "phylosde/moments.hpp"
#include "phylosde/tree.hpp"

namespace phylosde {

// cross moments of two lineages that share history up to their ancestor and
// then diverge for their own spans
struct PairCovariance {
  double trait_trait;        // Cov[y_i, y_j]
  double trait_i_optimum_j;  // Cov[y_i, theta_j]
  double trait_j_optimum_i;  // Cov[y_j, theta_i]
  double optimum_optimum;    // Cov[theta_i, theta_j]
};

PairCovariance cross_moment_pair(const ModelParams& params,
                                 const InitialState& init, double t_shared,
                                 double t_i, double t_j);

double species_covariance_pair(const ModelParams& params,
                               const InitialState& init, double t_shared,
                               double t_i, double t_j);

// per-tip rho evaluated at each tip depth; scale-invariant in sigma_theta,
// so a vanishing optimum variance is handled by its exact limit. Kinds with
// a fixed optimum regress on x directly (all ones).
Eigen::VectorXd attenuation_vector(const PhyloTree& tree,
                                   const ModelParams& params,
                                   const InitialState& init);

struct CovarianceMatrices {
  Eigen::MatrixXd trait;       // Cov[y_i, y_j]
  Eigen::MatrixXd residual;    // Cov of y_i - rho_i theta_i across tips
  Eigen::VectorXd attenuation; // rho per tip
  std::vector<std::string> tip_order;
};

CovarianceMatrices residual_covariance_matrix(const PhyloTree& tree,
                                              const ModelParams& params,
                                              const InitialState& init);

}  // namespace phylosde
