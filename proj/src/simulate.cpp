#include "phylosde/simulate.hpp"

#include <cmath>
#include <limits>

#include "phylosde/errors.hpp"
#include "phylosde/rng.hpp"

namespace phylosde {

namespace {

// stream tags keep the draws for different purposes disjoint
constexpr std::uint64_t kTagPath = 1;
constexpr std::uint64_t kTagTips = 2;
constexpr std::uint64_t kTagPairs = 3;

struct Resolved {
  double dt;
  double alpha_x;
  double sigma_x;
  double x0, theta0, y0, sigma0;
  bool revert_x;
};

Resolved resolve(const ModelParams& params, const SimConfig& config,
                 double shortest_branch) {
  params.validate();
  Resolved r;
  r.dt = config.dt;
  if (std::isnan(r.dt)) {
    r.dt = 0.01;
    if (shortest_branch > 0.0) r.dt = std::min(r.dt, shortest_branch / 20.0);
  }
  if (!(r.dt > 0.0) || !std::isfinite(r.dt))
    throw std::invalid_argument("dt must be positive and finite");

  r.revert_x = config.predictor == PredictorKind::OU ||
               (config.predictor == PredictorKind::Default &&
                has_reverting_optimum(params.kind));
  r.alpha_x = config.alpha_x;
  if (std::isnan(r.alpha_x)) r.alpha_x = params.alpha_theta;
  if (!r.revert_x) r.alpha_x = 0.0;

  r.sigma_x = config.sigma_x;
  if (std::isnan(r.sigma_x)) {
    if (config.b1 != 0.0)
      r.sigma_x = params.sigma_theta / std::abs(config.b1);
    else if (params.sigma_theta == 0.0)
      r.sigma_x = 1.0;
    else
      throw std::invalid_argument(
          "b1 = 0 cannot carry a moving optimum; set sigma_x explicitly");
  }
  if (!(r.sigma_x >= 0.0) || !std::isfinite(r.sigma_x))
    throw std::invalid_argument("sigma_x must be non-negative and finite");

  r.x0 = config.x_root;
  r.theta0 = config.b0 + config.b1 * config.x_root;
  r.y0 = std::isnan(config.y_root) ? r.theta0 : config.y_root;
  r.sigma0 = params.sigma_y0;
  return r;
}

struct SimState {
  double x, theta, y, sigma;
};

// one Euler-Maruyama step; theta is slaved to x through the regression link
void advance(SimState& s, double h, const Resolved& r,
             const ModelParams& params, const SimConfig& config, Philox& rng) {
  const double sq = std::sqrt(h);
  const double zx = rng.next_normal();
  const double zy = rng.next_normal();
  const double zs = rng.next_normal();
  const double y_new =
      s.y + params.alpha_y * (s.theta - s.y) * h + s.sigma * sq * zy;
  double x_new = s.x + r.sigma_x * sq * zx;
  if (r.revert_x) x_new += r.alpha_x * (r.x0 - s.x) * h;
  s.x = x_new;
  s.theta = config.b0 + config.b1 * x_new;
  s.y = y_new;
  s.sigma += params.tau * sq * zs;
}

void advance_span(SimState& s, double span, const Resolved& r,
                  const ModelParams& params, const SimConfig& config,
                  Philox& rng) {
  double left = span;
  while (left > 0.0) {
    const double h = std::min(r.dt, left);
    advance(s, h, r, params, config, rng);
    left -= h;
  }
}

double shortest_positive_branch(const PhyloTree& tree) {
  double shortest = std::numeric_limits<double>::infinity();
  for (int i = 0; i < tree.node_count(); ++i) {
    if (i == tree.root()) continue;
    const double len = tree.node(i).length;
    if (len > 0.0) shortest = std::min(shortest, len);
  }
  return std::isfinite(shortest) ? shortest : 0.0;
}

}  // namespace

SimPath simulate_path(const ModelParams& params, const SimConfig& config,
                      double duration) {
  if (!(duration >= 0.0) || !std::isfinite(duration))
    throw std::invalid_argument("duration must be non-negative and finite");
  const Resolved r = resolve(params, config, 0.0);
  Philox rng(mix64(config.seed), kTagPath);
  SimState s{r.x0, r.theta0, r.y0, r.sigma0};
  SimPath path;
  path.push_back({0.0, s.x, s.theta, s.y, s.sigma});
  double now = 0.0;
  while (now < duration) {
    const double h = std::min(r.dt, duration - now);
    advance(s, h, r, params, config, rng);
    now += h;
    if (config.record_path || now >= duration)
      path.push_back({now, s.x, s.theta, s.y, s.sigma});
  }
  return path;
}

TipDataset simulate_tips(const PhyloTree& tree, const ModelParams& params,
                         const SimConfig& config) {
  const Resolved r = resolve(params, config, shortest_positive_branch(tree));
  const int n = tree.tip_count();
  TipDataset out;
  out.species = tree.tip_labels();
  out.x.resize(n);
  out.y.resize(n);
  out.generating = params;
  out.config = config;

  // walk parent-before-child; each branch draws from its own stream keyed
  // by the child node id, so the dataset is stable under traversal changes
  std::vector<SimState> state(tree.node_count());
  state[tree.root()] = {r.x0, r.theta0, r.y0, r.sigma0};
  std::vector<int> stack{tree.root()};
  while (!stack.empty()) {
    const int v = stack.back();
    stack.pop_back();
    for (int c : tree.node(v).children) {
      Philox rng(mix64(config.seed), kTagTips,
                 static_cast<std::uint64_t>(c));
      SimState s = state[v];
      advance_span(s, tree.node(c).length, r, params, config, rng);
      state[c] = s;
      stack.push_back(c);
    }
  }
  for (int t = 0; t < n; ++t) {
    const SimState& s = state[tree.tip_node(t)];
    out.x[t] = s.x;
    out.y[t] = s.y;
  }
  return out;
}

EmpiricalPairCovariance monte_carlo_covariance(const ModelParams& params,
                                               const InitialState& init,
                                               double t_shared, double t_i,
                                               double t_j, long n_paths,
                                               const SimConfig& config) {
  params.validate();
  if (n_paths < 4) throw std::invalid_argument("need at least 4 paths");
  double dt = config.dt;
  if (std::isnan(dt)) dt = 0.01;
  if (!(dt > 0.0)) throw std::invalid_argument("dt must be positive");

  const double st = params.sigma_theta;
  const bool revert = has_reverting_optimum(params.kind);

  // (y, theta, sigma) stepped directly, no predictor involved
  auto step_direct = [&](SimState& s, double span, Philox& rng) {
    double left = span;
    while (left > 0.0) {
      const double h = std::min(dt, left);
      const double sq = std::sqrt(h);
      const double zt = rng.next_normal();
      const double zy = rng.next_normal();
      const double zs = rng.next_normal();
      const double y_new =
          s.y + params.alpha_y * (s.theta - s.y) * h + s.sigma * sq * zy;
      double theta_new = s.theta + st * sq * zt;
      if (revert) theta_new -= params.alpha_theta * s.theta * h;
      s.theta = theta_new;
      s.y = y_new;
      s.sigma += params.tau * sq * zs;
      left -= h;
    }
  };

  const long n = n_paths;
  // per-path tip states, kept so the jackknife can reuse the sums
  Eigen::MatrixXd obs(n, 4);  // y_i, theta_i, y_j, theta_j
  for (long k = 0; k < n; ++k) {
    Philox rng(mix64(config.seed), kTagPairs, static_cast<std::uint64_t>(k));
    SimState shared{0.0, init.theta0, init.y0, init.sigma0};
    step_direct(shared, t_shared, rng);
    SimState si = shared;
    step_direct(si, t_i, rng);
    SimState sj = shared;
    step_direct(sj, t_j, rng);
    obs(k, 0) = si.y;
    obs(k, 1) = si.theta;
    obs(k, 2) = sj.y;
    obs(k, 3) = sj.theta;
  }

  // pairs of columns entering each cross moment
  const int sel[4][2] = {{0, 2}, {0, 3}, {2, 1}, {1, 3}};
  double est[4], se[4];
  for (int m = 0; m < 4; ++m) {
    const auto u = obs.col(sel[m][0]);
    const auto w = obs.col(sel[m][1]);
    const double su = u.sum(), sw = w.sum();
    const double suw = u.dot(w);
    const double full = (suw - su * sw / n) / (n - 1);
    // delete-one covariances from the sufficient statistics
    double acc = 0.0, acc2 = 0.0;
    for (long k = 0; k < n; ++k) {
      const double su_k = su - u[k];
      const double sw_k = sw - w[k];
      const double suw_k = suw - u[k] * w[k];
      const double c_k = (suw_k - su_k * sw_k / (n - 1)) / (n - 2);
      acc += c_k;
      acc2 += c_k * c_k;
    }
    const double cbar = acc / n;
    const double var_jack =
        (static_cast<double>(n - 1) / n) * (acc2 - n * cbar * cbar);
    est[m] = full;
    se[m] = std::sqrt(std::max(var_jack, 0.0));
  }

  EmpiricalPairCovariance out;
  out.estimate = {est[0], est[1], est[2], est[3]};
  out.standard_error = {se[0], se[1], se[2], se[3]};
  out.n_paths = n;
  return out;
}

}  // namespace phylosde
