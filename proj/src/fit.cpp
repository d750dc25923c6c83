#include "phylosde/fit.hpp"

#include <Eigen/Cholesky>
#include <Eigen/QR>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "phylosde/errors.hpp"
#include "phylosde/optim.hpp"
#include "phylosde/rng.hpp"

namespace phylosde {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

Eigen::LLT<Eigen::MatrixXd> factor(const Eigen::MatrixXd& cov) {
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success)
    throw NumericalError("covariance factorization failed");
  return llt;
}

Eigen::VectorXd solve_whitened(const RegressionDesign& design,
                               const Eigen::MatrixXd& wx,
                               const Eigen::VectorXd& wy) {
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(wx);
  if (qr.rank() < design.predictors.cols())
    throw NumericalError("design matrix is rank deficient");
  return qr.solve(wy);
}

}  // namespace

Eigen::VectorXd ols_estimate(const RegressionDesign& design) {
  if (design.predictors.rows() != design.response.size())
    throw std::invalid_argument("design and response sizes differ");
  return solve_whitened(design, design.predictors, design.response);
}

Eigen::VectorXd gls_estimate(const RegressionDesign& design,
                             const Eigen::MatrixXd& cov) {
  if (design.predictors.rows() != design.response.size() ||
      cov.rows() != design.predictors.rows() || cov.rows() != cov.cols())
    throw std::invalid_argument("design, response and covariance sizes differ");
  const auto llt = factor(cov);
  const Eigen::MatrixXd wx = llt.matrixL().solve(design.predictors);
  const Eigen::VectorXd wy = llt.matrixL().solve(design.response);
  return solve_whitened(design, wx, wy);
}

double log_likelihood(const RegressionDesign& design,
                      const Eigen::VectorXd& coef,
                      const Eigen::MatrixXd& cov) {
  const auto llt = factor(cov);
  const Eigen::VectorXd resid =
      design.response - design.predictors * coef;
  const Eigen::VectorXd white = llt.matrixL().solve(resid);
  const double logdet =
      2.0 * llt.matrixLLT().diagonal().array().log().sum();
  const double n = static_cast<double>(design.response.size());
  return -0.5 * (n * std::log(2.0 * std::numbers::pi) + logdet +
                 white.squaredNorm());
}

double r_squared(const RegressionDesign& design, const Eigen::VectorXd& coef,
                 const Eigen::MatrixXd& cov) {
  const auto llt = factor(cov);
  const Eigen::VectorXd resid =
      design.response - design.predictors * coef;
  const double rss = llt.matrixL().solve(resid).squaredNorm();

  RegressionDesign mean_only;
  mean_only.predictors =
      Eigen::MatrixXd::Ones(design.response.size(), 1);
  mean_only.response = design.response;
  const Eigen::VectorXd mu = gls_estimate(mean_only, cov);
  const Eigen::VectorXd centered =
      design.response - Eigen::VectorXd::Constant(design.response.size(), mu[0]);
  const double tss = llt.matrixL().solve(centered).squaredNorm();
  if (tss <= 0.0)
    throw NumericalError("response has no variation; r2 is undefined");
  return 1.0 - rss / tss;
}

namespace {

// covariance weights of a reverting predictor started at its attractor,
// per unit diffusion rate
Eigen::MatrixXd reverting_path_weights(const Eigen::MatrixXd& g,
                                       double alpha) {
  const int n = static_cast<int>(g.rows());
  Eigen::MatrixXd w(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j <= i; ++j) {
      const double shared = g(i, j);
      const double apart = g(i, i) + g(j, j) - 2.0 * shared;
      w(i, j) = w(j, i) = std::exp(-alpha * apart) *
                          (1.0 - std::exp(-2.0 * alpha * shared)) /
                          (2.0 * alpha);
    }
  return w;
}

// maximum-likelihood rate given the unit-rate covariance weights, with the
// ancestral mean profiled out; optionally also the profile log likelihood
// of the weights up to a constant, for comparing pulls
double quadratic_rate(Eigen::MatrixXd w, const Eigen::VectorXd& x,
                      double* profile_ll = nullptr) {
  const int n = static_cast<int>(w.rows());
  Eigen::LLT<Eigen::MatrixXd> llt(w);
  if (llt.info() != Eigen::Success) {
    // tips with identical paths make the weights singular; one small
    // jitter, then fail
    w.diagonal().array() += 1e-10 * w.trace() / n;
    llt.compute(w);
    if (llt.info() != Eigen::Success)
      throw NumericalError("predictor covariance is singular");
  }
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(n);
  const Eigen::VectorXd w1 = llt.matrixL().solve(ones);
  const Eigen::VectorXd wx = llt.matrixL().solve(x);
  const double mu = w1.dot(wx) / w1.squaredNorm();
  const double rate = (wx - mu * w1).squaredNorm() / n;
  if (profile_ll) {
    const double logdet = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
    *profile_ll = -0.5 * (n * std::log(rate) + logdet);
  }
  return rate;
}

}  // namespace

double estimate_predictor_rate(const PhyloTree& tree, const Eigen::VectorXd& x,
                               double alpha) {
  const int n = tree.tip_count();
  if (x.size() != n)
    throw std::invalid_argument("predictor length does not match tip count");
  if (!(alpha >= 0.0) || !std::isfinite(alpha))
    throw std::invalid_argument("alpha must be non-negative and finite");
  const Eigen::MatrixXd g = shared_path_matrix(tree).times;
  if (alpha < 1e-12) return quadratic_rate(g, x);
  return quadratic_rate(reverting_path_weights(g, alpha), x);
}

// ---------------------------------------------------------------------------
// iterative fit

namespace {

constexpr std::uint64_t kTagStarts = 11;

// roles index the four structural rates
enum Role { kAlphaY = 0, kAlphaTheta = 1, kSigmaY = 2, kTau = 3 };

struct Structure {
  std::vector<int> roles;  // free roles in optimizer order
  Eigen::VectorXd lo, hi;  // log-scale bounds per free dimension
  std::array<double, 4> pinned{0.0, 0.0, 0.0, 0.0};
};

Structure make_structure(ModelKind kind, const FitConfig& config) {
  std::vector<std::pair<int, ParamBounds>> wanted;
  switch (kind) {
    case ModelKind::BM:
      wanted = {{kSigmaY, config.sigma_box}};
      break;
    case ModelKind::OU:
    case ModelKind::OUBM:
      wanted = {{kAlphaY, config.alpha_box}, {kSigmaY, config.sigma_box}};
      break;
    case ModelKind::OUOU:
      wanted = {{kAlphaY, config.alpha_box},
                {kAlphaTheta, config.alpha_box},
                {kSigmaY, config.sigma_box}};
      break;
    case ModelKind::OUBMBM:
      wanted = {{kAlphaY, config.alpha_box}, {kTau, config.tau_box}};
      break;
    case ModelKind::OUOUBM:
      wanted = {{kAlphaY, config.alpha_box},
                {kAlphaTheta, config.alpha_box},
                {kTau, config.tau_box}};
      break;
  }
  Structure s;
  std::vector<double> lo, hi;
  for (const auto& [role, box] : wanted) {
    if (!(box.lo <= box.hi))
      throw std::invalid_argument("parameter bounds are inverted");
    if (box.lo == box.hi) {
      s.pinned[role] = box.lo;  // pinned, not searched
      continue;
    }
    if (box.lo <= 0.0)
      throw std::invalid_argument("searchable bounds must be positive");
    s.roles.push_back(role);
    lo.push_back(std::log(box.lo));
    hi.push_back(std::log(box.hi));
  }
  s.lo = Eigen::Map<Eigen::VectorXd>(lo.data(), lo.size());
  s.hi = Eigen::Map<Eigen::VectorXd>(hi.data(), hi.size());
  return s;
}

ModelParams assemble_params(ModelKind kind, const Structure& s,
                            const Eigen::VectorXd& xlog, double sigma_theta) {
  std::array<double, 4> values = s.pinned;
  for (std::size_t i = 0; i < s.roles.size(); ++i)
    values[s.roles[i]] = std::exp(xlog[i]);
  ModelParams p;
  p.kind = kind;
  p.alpha_y = values[kAlphaY];
  p.alpha_theta = values[kAlphaTheta];
  p.sigma_y0 = values[kSigmaY];
  p.tau = values[kTau];
  p.sigma_theta = has_moving_optimum(kind) ? sigma_theta : 0.0;
  return p;
}

// coefficients and likelihood at one point of the structural search
struct ProfileState {
  Eigen::VectorXd coef;
  double log_likelihood = -kInf;
  bool settled = false;  // the coefficient fixed point converged
};

struct FitWork {
  const PhyloTree& tree;
  const Eigen::VectorXd& x;
  const Eigen::VectorXd& y;
  ModelKind kind;
  const Structure& structure;
  double sigma_x2;  // predictor rate, estimated once from the predictor

  double sigma_theta_for(const Eigen::VectorXd& coef) const {
    return has_moving_optimum(kind)
               ? std::abs(coef[1]) * std::sqrt(sigma_x2)
               : 0.0;
  }

  // a vanishing attenuation leaves the slope identified only through the
  // blown-up product with the design; reject the region outright
  void check_identified(const Eigen::VectorXd& attenuation) const {
    if (has_moving_optimum(kind) && attenuation.mean() < 1e-2)
      throw NumericalError("attenuation is degenerate; slope unidentified");
  }

  CovarianceMatrices covariance(const Eigen::VectorXd& xlog,
                                const Eigen::VectorXd& coef) const {
    const ModelParams p =
        assemble_params(kind, structure, xlog, sigma_theta_for(coef));
    CovarianceMatrices cov = residual_covariance_matrix(tree, p, make_initial(p));
    check_identified(cov.attenuation);
    return cov;
  }

  RegressionDesign design_for(const CovarianceMatrices& cov) const {
    RegressionDesign d;
    d.predictors.resize(x.size(), 2);
    d.predictors.col(0).setOnes();
    d.predictors.col(1) = cov.attenuation.cwiseProduct(x);
    d.response = y;
    return d;
  }

  // negative log likelihood with the coefficients held fixed
  double neg_loglik(const Eigen::VectorXd& xlog,
                    const Eigen::VectorXd& coef) const {
    try {
      const CovarianceMatrices cov = covariance(xlog, coef);
      const double ll = log_likelihood(design_for(cov), coef, cov.residual);
      return std::isfinite(ll) ? -ll : kInf;
    } catch (const NumericalError&) {
      return kInf;
    }
  }

  // coefficients at fixed structural rates, solved to their fixed point.
  // The slope feeds back into the covariance through the derived optimum
  // rate, so one GLS pass is not enough; the covariance is linear in the
  // squared optimum rate, which keeps every pass at one factorization
  // instead of a fresh matrix build.
  ProfileState profile(const Eigen::VectorXd& xlog,
                       const FitConfig& config) const {
    ProfileState out;
    if (!has_moving_optimum(kind)) {
      const ModelParams p = assemble_params(kind, structure, xlog, 0.0);
      const CovarianceMatrices cov =
          residual_covariance_matrix(tree, p, make_initial(p));
      const RegressionDesign d = design_for(cov);
      out.coef = gls_estimate(d, cov.residual);
      out.log_likelihood = log_likelihood(d, out.coef, cov.residual);
      out.settled = true;
      return out;
    }

    auto build = [&](double sigma_theta) {
      const ModelParams p =
          assemble_params(kind, structure, xlog, sigma_theta);
      return residual_covariance_matrix(tree, p, make_initial(p));
    };
    const CovarianceMatrices base = build(0.0);
    const CovarianceMatrices unit = build(1.0);
    const Eigen::MatrixXd optimum_part = unit.residual - base.residual;
    const RegressionDesign d = design_for(unit);
    const double sigma_x = std::sqrt(sigma_x2);

    // the attenuated design puts the OLS seed on the structural scale
    Eigen::VectorXd coef = ols_estimate(d);
    auto assembled = [&](const Eigen::VectorXd& b) {
      const double st = std::abs(b[1]) * sigma_x;
      return Eigen::MatrixXd(base.residual + st * st * optimum_part);
    };
    for (int pass = 1; pass <= config.max_gls_iterations; ++pass) {
      const Eigen::VectorXd updated = gls_estimate(d, assembled(coef));
      const double delta = (updated - coef).lpNorm<Eigen::Infinity>();
      const double scale = 1.0 + updated.lpNorm<Eigen::Infinity>();
      coef = updated;
      if (delta < config.b_tolerance * scale) {
        out.settled = true;
        break;
      }
    }
    out.coef = coef;
    out.log_likelihood = log_likelihood(d, coef, assembled(coef));
    return out;
  }
};

struct RunOutcome {
  Eigen::VectorXd xlog;
  Eigen::VectorXd coef;
  double log_likelihood = -kInf;
  int iterations = 0;
  bool converged = false;
};

// alternate the structural search (coefficients frozen) with the coefficient
// fixed point at the new rates. Freezing matters: letting the slope follow
// the likelihood directly opens a flat ridge where the pull and the slope
// inflate together, while a frozen slope keeps the rate surface curved. The
// fixed point matters too: a single stale update leaves a mean offset that
// the rate search absorbs by inflating the covariance toward a vanishing
// pull.
RunOutcome run_alternating(const FitWork& work, Eigen::VectorXd xlog,
                           const FitConfig& config) {
  RunOutcome out;
  ProfileState state = work.profile(xlog, config);
  if (xlog.size() == 0) {
    out.xlog = std::move(xlog);
    out.coef = state.coef;
    out.log_likelihood = state.log_likelihood;
    out.iterations = 1;
    out.converged = state.settled;
    return out;
  }

  NelderMeadOptions nm;
  nm.max_evals = config.max_objective_evals;
  nm.x_tolerance = 1e-6;
  nm.f_tolerance = 1e-9;

  // an iteration is not guaranteed to raise the likelihood, so keep the
  // best visited state and stop once improvement stalls
  Eigen::VectorXd best_x = xlog, best_coef = state.coef;
  double best_ll = state.log_likelihood;
  int stalled = 0;
  for (int iter = 1; iter <= config.max_gls_iterations; ++iter) {
    out.iterations = iter;
    const Eigen::VectorXd frozen = state.coef;
    const auto opt = nelder_mead(
        [&](const Eigen::VectorXd& v) { return work.neg_loglik(v, frozen); },
        xlog, work.structure.lo, work.structure.hi, nm);
    xlog = opt.x;
    // later passes start at the previous optimum and only polish
    nm.initial_step = 0.1;
    nm.max_evals = std::min(config.max_objective_evals, 400);

    state = work.profile(xlog, config);
    const double delta = (state.coef - frozen).lpNorm<Eigen::Infinity>();
    const double scale = 1.0 + state.coef.lpNorm<Eigen::Infinity>();
#ifdef PHYLOSDE_TRACE_FIT
    {
      std::string s;
      for (int i = 0; i < xlog.size(); ++i)
        s += (i ? " " : "") + std::to_string(std::exp(xlog[i]));
      std::fprintf(stderr,
                   "  round %d ll=%.4f rates=[%s] b=(%.4f, %.4f) db=%.2e\n",
                   iter, state.log_likelihood, s.c_str(), state.coef(0),
                   state.coef(1), delta);
    }
#endif
    if (state.log_likelihood >
        best_ll + 1e-8 * (1.0 + std::abs(best_ll))) {
      best_ll = state.log_likelihood;
      best_x = xlog;
      best_coef = state.coef;
      stalled = 0;
    } else if (++stalled >= 2) {
      out.converged = true;
      break;
    }
    if (delta < config.b_tolerance * scale) {
      out.converged = true;
      break;
    }
  }
  out.xlog = std::move(best_x);
  out.coef = std::move(best_coef);
  out.log_likelihood = best_ll;
  return out;
}

}  // namespace

FitResult fit_model(const PhyloTree& tree, const FitData& data, ModelKind kind,
                    const FitConfig& config) {
  const int n = tree.tip_count();
  if (static_cast<int>(data.species.size()) != n || data.x.size() != n ||
      data.y.size() != n)
    throw std::invalid_argument("data size does not match the tip count");

  // align data rows with the tree's tip order
  Eigen::VectorXd x(n), y(n);
  std::vector<char> filled(n, 0);
  for (int i = 0; i < n; ++i) {
    const int at = tree.tip_index(data.species[i]);
    if (at < 0)
      throw std::invalid_argument("species '" + data.species[i] +
                                  "' is not a tip of the tree");
    if (filled[at])
      throw std::invalid_argument("species '" + data.species[i] +
                                  "' appears more than once");
    filled[at] = 1;
    x[at] = data.x[i];
    y[at] = data.y[i];
  }
  for (int i = 0; i < n; ++i)
    if (!std::isfinite(x[i]) || !std::isfinite(y[i]))
      throw std::invalid_argument("trait values must be finite");

  const Structure structure = make_structure(kind, config);
  const int dim = static_cast<int>(structure.roles.size());
  if (n < 3)
    throw std::invalid_argument("need at least three tips to fit");

  const Eigen::MatrixXd g = shared_path_matrix(tree).times;
  double mean_depth = g.diagonal().mean();
  if (mean_depth <= 0.0) mean_depth = 1.0;

  // the predictor rate enters through the derived optimum rate and is
  // treated as known during the fit. A reverting optimum inherits the
  // predictor's dynamics, so the rate is taken at the predictor's own
  // maximum-likelihood pull rather than under a plain random walk.
  double sigma_x2 = quadratic_rate(g, x);
  if (has_reverting_optimum(kind)) {
    Eigen::VectorXd lo1(1), hi1(1), start1(1);
    lo1[0] = std::log(std::max(config.alpha_box.lo, 1e-8));
    hi1[0] = std::max(std::log(config.alpha_box.hi), lo1[0]);
    start1[0] = std::clamp(std::log(1.0 / mean_depth), lo1[0], hi1[0]);
    const auto pull_fit = nelder_mead(
        [&](const Eigen::VectorXd& v) {
          try {
            double ll = 0.0;
            quadratic_rate(reverting_path_weights(g, std::exp(v[0])), x, &ll);
            return std::isfinite(ll) ? -ll : kInf;
          } catch (const NumericalError&) {
            return kInf;
          }
        },
        start1, lo1, hi1);
    if (std::isfinite(pull_fit.f))
      sigma_x2 =
          quadratic_rate(reverting_path_weights(g, std::exp(pull_fit.x[0])), x);
  }
  FitWork work{tree, x, y, kind, structure, sigma_x2};

  // data-scale heuristics for the first start
  const double sd_y = std::sqrt(
      (y.array() - y.mean()).square().sum() / std::max(n - 1, 1));
  auto heuristic = [&](int role) {
    switch (role) {
      case kAlphaY:
      case kAlphaTheta: return 1.0 / mean_depth;
      case kSigmaY: return std::max(sd_y, 1e-3) / std::sqrt(mean_depth);
      default: return std::max(sd_y, 1e-3) / mean_depth;
    }
  };

  Eigen::VectorXd first(dim);
  for (int i = 0; i < dim; ++i)
    first[i] = std::clamp(std::log(heuristic(structure.roles[i])),
                          structure.lo[i], structure.hi[i]);

  // the pulls are the weakly identified directions, and the alternation
  // keeps the basin it starts in; scan a few log-spaced pulls around the
  // heuristic and lead with the best fixed-point likelihood
  std::vector<int> pull_dims;
  for (int i = 0; i < dim; ++i)
    if (structure.roles[i] == kAlphaY || structure.roles[i] == kAlphaTheta)
      pull_dims.push_back(i);
  if (!pull_dims.empty()) {
    static constexpr double kPullFactors[] = {0.25, 1.0, 4.0, 16.0};
    double best_scan = -kInf;
    Eigen::VectorXd best_cand = first;
    int combos = 1;
    for (std::size_t d = 0; d < pull_dims.size(); ++d) combos *= 4;
    for (int c = 0; c < combos; ++c) {
      Eigen::VectorXd cand = first;
      int rem = c;
      for (const int d : pull_dims) {
        cand[d] = std::clamp(cand[d] + std::log(kPullFactors[rem % 4]),
                             structure.lo[d], structure.hi[d]);
        rem /= 4;
      }
      try {
        const double ll = work.profile(cand, config).log_likelihood;
        if (std::isfinite(ll) && ll > best_scan) {
          best_scan = ll;
          best_cand = cand;
        }
      } catch (const NumericalError&) {
      }
    }
    first = best_cand;
  }

  Philox rng(mix64(config.seed), kTagStarts);
  auto random_point = [&]() {
    Eigen::VectorXd v(dim);
    for (int i = 0; i < dim; ++i)
      v[i] = structure.lo[i] +
             rng.next_uniform() * (structure.hi[i] - structure.lo[i]);
    return v;
  };

  FitResult result;
  result.kind = kind;
  result.n = n;
  result.k = dim + 2;
  result.seed = config.seed;

  RunOutcome best;
  bool have_best = false;
  double best_norm = kInf;
  int improvements = 0;

  for (int start = 1; start <= config.max_starts; ++start) {
    Eigen::VectorXd proposal;
    if (start == 1) {
      proposal = first;
    } else if (start % 2 == 0 && have_best) {
      proposal = best.xlog;
      for (int i = 0; i < dim; ++i)
        proposal[i] = std::clamp(
            proposal[i] + (rng.next_uniform() - 0.5), structure.lo[i],
            structure.hi[i]);
    } else {
      proposal = random_point();
    }

    for (int attempt = 1; attempt <= config.max_attempts_per_start;
         ++attempt) {
      RunOutcome outcome;
      bool usable = true;
      try {
        outcome = run_alternating(work, proposal, config);
        usable = std::isfinite(outcome.log_likelihood);
      } catch (const NumericalError&) {
        usable = false;
      }
      StartTrace t;
      t.start = start;
      t.attempt = attempt;
      t.converged = usable && outcome.converged;
      t.log_likelihood = usable ? outcome.log_likelihood : -kInf;

      if (usable) {
        const double norm = outcome.xlog.size() ? outcome.xlog.norm() : 0.0;
        if (!have_best || outcome.log_likelihood >
                              best.log_likelihood + 1e-9) {
          best = outcome;
          best_norm = norm;
          have_best = true;
          ++improvements;
          t.accepted = true;
        } else if (std::abs(outcome.log_likelihood - best.log_likelihood) <=
                       1e-9 &&
                   norm < best_norm) {
          best = outcome;  // deterministic tie break toward small rates
          best_norm = norm;
          t.accepted = true;
        }
        result.trace.push_back(t);
        break;
      }
      result.trace.push_back(t);
      proposal = random_point();
    }
    if (improvements >= config.improvements_to_stop) break;
  }

  if (!have_best)
    throw NumericalError("no start produced a finite likelihood");

  result.sigma_x2 = work.sigma_x2;
  result.coefficients = best.coef;
  result.params = assemble_params(kind, structure, best.xlog,
                                  work.sigma_theta_for(best.coef));
  result.log_likelihood = best.log_likelihood;
  result.iterations = best.iterations;
  result.converged = best.converged;
  const CovarianceMatrices cov = work.covariance(best.xlog, best.coef);
  result.r2 = r_squared(work.design_for(cov), best.coef, cov.residual);
  return result;
}

}  // namespace phylosde
