#include "phylosde/covariance.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <cmath>
#include <unordered_map>

#include "phylosde/errors.hpp"

namespace phylosde {

namespace {

struct AncestorMoments {
  double var_y, var_theta, cov_y_theta;
};

AncestorMoments central_at(const MomentSolution& sol, double t) {
  const MomentState s = sol.at(t);
  return {s.var_y(), s.var_theta(), s.cov_y_theta()};
}

void check_span(double t, const char* name) {
  if (!(t >= 0.0) || !std::isfinite(t))
    throw std::invalid_argument(std::string(name) +
                                " must be non-negative and finite");
}

// both lineages start from the same ancestor state; the shared randomness is
// what the ancestor accumulated, carried forward by each lineage's
// conditional-mean weights, plus the optimum's plain decay
PairCovariance pair_from_ancestor(const AncestorMoments& a,
                                  const ModelParams& params, double t_i,
                                  double t_j) {
  const auto ci = conditional_coefficients(params, t_i);
  const auto cj = conditional_coefficients(params, t_j);
  const double di = std::exp(-params.alpha_theta * t_i);
  const double dj = std::exp(-params.alpha_theta * t_j);
  PairCovariance out;
  out.trait_trait = ci.on_trait * cj.on_trait * a.var_y +
                    ci.on_optimum * cj.on_optimum * a.var_theta +
                    (ci.on_trait * cj.on_optimum + cj.on_trait * ci.on_optimum) *
                        a.cov_y_theta;
  out.trait_i_optimum_j =
      dj * (ci.on_trait * a.cov_y_theta + ci.on_optimum * a.var_theta);
  out.trait_j_optimum_i =
      di * (cj.on_trait * a.cov_y_theta + cj.on_optimum * a.var_theta);
  out.optimum_optimum = di * dj * a.var_theta;
  return out;
}

}  // namespace

PairCovariance cross_moment_pair(const ModelParams& params,
                                 const InitialState& init, double t_shared,
                                 double t_i, double t_j) {
  check_span(t_shared, "shared time");
  check_span(t_i, "post-divergence time i");
  check_span(t_j, "post-divergence time j");
  const MomentSolution sol(params, init);
  return pair_from_ancestor(central_at(sol, t_shared), params, t_i, t_j);
}

double species_covariance_pair(const ModelParams& params,
                               const InitialState& init, double t_shared,
                               double t_i, double t_j) {
  return cross_moment_pair(params, init, t_shared, t_i, t_j).trait_trait;
}

Eigen::VectorXd attenuation_vector(const PhyloTree& tree,
                                   const ModelParams& params,
                                   const InitialState& init) {
  const int n = tree.tip_count();
  Eigen::VectorXd out(n);
  if (!has_moving_optimum(params.kind)) {
    out.setOnes();
    return out;
  }
  // rho is a ratio of two moments that both scale with sigma_theta^2, so
  // evaluating at sigma_theta = 1 gives the exact limit when the fitted
  // value degenerates to zero
  ModelParams p = params;
  InitialState zero_init = init;
  zero_init.y0 = 0.0;
  zero_init.theta0 = 0.0;
  if (p.sigma_theta <= 0.0) p.sigma_theta = 1.0;
  const MomentSolution sol(p, zero_init);
  for (int i = 0; i < n; ++i) {
    const double t = tree.tip_depth(i);
    if (t <= 0.0) {
      out[i] = 0.0;  // a tip at the root has no accumulated optimum variance
      continue;
    }
    const MomentState s = sol.at(t);
    const double var = s.var_theta();
    if (var <= 1e-14)
      throw NumericalError("optimum variance is degenerate at a tip depth");
    out[i] = s.cov_y_theta() / var;
  }
  return out;
}

CovarianceMatrices residual_covariance_matrix(const PhyloTree& tree,
                                              const ModelParams& params,
                                              const InitialState& init) {
  params.validate();
  const int n = tree.tip_count();
  CovarianceMatrices out;
  out.tip_order = tree.tip_labels();
  out.attenuation = attenuation_vector(tree, params, init);
  out.trait.resize(n, n);
  out.residual.resize(n, n);

  const MomentSolution sol(params, init);
  const double ay = params.alpha_y;
  const double at = params.alpha_theta;
  const bool rates_equal = std::abs(ay - at) < 1e-8 * std::max({ay, at, 1.0});
  const double rate_gap = ay / (ay - at);  // unused when rates_equal

  double max_depth = 0.0;
  for (int i = 0; i < n; ++i) max_depth = std::max(max_depth, tree.tip_depth(i));
  // the factored exponentials e^{+alpha t_a} overflow for extreme pulls;
  // fall back to direct per-pair evaluation there
  const bool factored = std::max(ay, at) * max_depth < 600.0;

  // per-tip decay over the whole root-to-tip depth
  Eigen::VectorXd decay_y(n), decay_t(n);
  for (int i = 0; i < n; ++i) {
    decay_y[i] = std::exp(-ay * tree.tip_depth(i));
    decay_t[i] = std::exp(-at * tree.tip_depth(i));
  }

  struct AncestorEntry {
    AncestorMoments m;
    double grow_y, grow_t;  // e^{+alpha t_a}, cancels the per-tip decay
  };
  std::unordered_map<int, AncestorEntry> anc_cache;
  anc_cache.reserve(2 * n);

  for (int i = 0; i < n; ++i) {
    const int node_i = tree.tip_node(i);
    const double d_i = tree.tip_depth(i);
    for (int j = i; j < n; ++j) {
      const int anc = tree.mrca_node(node_i, tree.tip_node(j));
      auto it = anc_cache.find(anc);
      if (it == anc_cache.end()) {
        const double t_a = tree.depth(anc);
        it = anc_cache
                 .emplace(anc, AncestorEntry{central_at(sol, t_a),
                                             std::exp(ay * t_a),
                                             std::exp(at * t_a)})
                 .first;
      }
      const AncestorEntry& a = it->second;
      const double t_a = tree.depth(anc);
      const double d_j = tree.tip_depth(j);

      PairCovariance pc;
      if (factored) {
        const double cy_i = decay_y[i] * a.grow_y;
        const double cy_j = decay_y[j] * a.grow_y;
        const double dt_i = decay_t[i] * a.grow_t;
        const double dt_j = decay_t[j] * a.grow_t;
        double ct_i, ct_j;
        if (ay == 0.0) {
          ct_i = ct_j = 0.0;
        } else if (rates_equal) {
          ct_i = ay * (d_i - t_a) * cy_i;
          ct_j = ay * (d_j - t_a) * cy_j;
        } else {
          ct_i = rate_gap * (dt_i - cy_i);
          ct_j = rate_gap * (dt_j - cy_j);
        }
        pc.trait_trait = cy_i * cy_j * a.m.var_y + ct_i * ct_j * a.m.var_theta +
                         (cy_i * ct_j + cy_j * ct_i) * a.m.cov_y_theta;
        pc.trait_i_optimum_j =
            dt_j * (cy_i * a.m.cov_y_theta + ct_i * a.m.var_theta);
        pc.trait_j_optimum_i =
            dt_i * (cy_j * a.m.cov_y_theta + ct_j * a.m.var_theta);
        pc.optimum_optimum = dt_i * dt_j * a.m.var_theta;
      } else {
        pc = pair_from_ancestor(a.m, params, d_i - t_a, d_j - t_a);
      }

      const double ri = out.attenuation[i];
      const double rj = out.attenuation[j];
      out.trait(i, j) = pc.trait_trait;
      out.trait(j, i) = pc.trait_trait;
      const double v = pc.trait_trait - rj * pc.trait_i_optimum_j -
                       ri * pc.trait_j_optimum_i +
                       ri * rj * pc.optimum_optimum;
      out.residual(i, j) = v;
      out.residual(j, i) = v;
    }
  }

  // accept matrices that are PSD up to rounding, reject anything worse
  Eigen::LLT<Eigen::MatrixXd> llt(out.residual);
  if (llt.info() != Eigen::Success) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(out.residual);
    const double lmin = es.eigenvalues().minCoeff();
    const double scale = out.residual.trace() / n;
    if (lmin < -1e-8 * scale)
      throw NumericalError(
          "residual covariance is not positive semidefinite");
    if (lmin < 0.0)
      out.residual.diagonal().array() += -lmin * 1.000001;
  }
  return out;
}

}  // namespace phylosde
