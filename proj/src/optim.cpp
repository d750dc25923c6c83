#include "phylosde/optim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace phylosde {

namespace {

Eigen::VectorXd clamp(Eigen::VectorXd x, const Eigen::VectorXd& lo,
                      const Eigen::VectorXd& hi) {
  for (int i = 0; i < x.size(); ++i) x[i] = std::clamp(x[i], lo[i], hi[i]);
  return x;
}

}  // namespace

NelderMeadResult nelder_mead(
    const std::function<double(const Eigen::VectorXd&)>& objective,
    Eigen::VectorXd start, const Eigen::VectorXd& lo, const Eigen::VectorXd& hi,
    const NelderMeadOptions& options) {
  const int dim = static_cast<int>(start.size());
  if (dim == 0) throw std::invalid_argument("empty search space");
  if (lo.size() != dim || hi.size() != dim)
    throw std::invalid_argument("bound size mismatch");
  for (int i = 0; i < dim; ++i)
    if (!(lo[i] <= hi[i])) throw std::invalid_argument("invalid bounds");

  NelderMeadResult res;
  int evals = 0;
  auto eval = [&](const Eigen::VectorXd& x) {
    ++evals;
    const double f = objective(x);
    return std::isfinite(f) ? f : std::numeric_limits<double>::infinity();
  };

  std::vector<Eigen::VectorXd> xs;
  std::vector<double> fs;
  xs.push_back(clamp(std::move(start), lo, hi));
  fs.push_back(eval(xs[0]));
  for (int i = 0; i < dim; ++i) {
    Eigen::VectorXd v = xs[0];
    const double span = hi[i] - lo[i];
    double step = options.initial_step;
    if (span > 0.0) step = std::min(step, 0.25 * span);
    if (step == 0.0) step = options.initial_step;
    v[i] += (v[i] + step <= hi[i]) ? step : -step;
    xs.push_back(clamp(std::move(v), lo, hi));
    fs.push_back(eval(xs.back()));
  }

  auto order = [&]() {
    std::vector<int> idx(xs.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
    std::stable_sort(idx.begin(), idx.end(),
                     [&](int a, int b) { return fs[a] < fs[b]; });
    std::vector<Eigen::VectorXd> x2;
    std::vector<double> f2;
    for (int i : idx) {
      x2.push_back(xs[i]);
      f2.push_back(fs[i]);
    }
    xs = std::move(x2);
    fs = std::move(f2);
  };

  order();
  while (evals < options.max_evals) {
    // convergence on both the values and the simplex size
    double spread = 0.0, diam = 0.0;
    for (std::size_t i = 1; i < xs.size(); ++i) {
      spread = std::max(spread, std::abs(fs[i] - fs[0]));
      diam = std::max(diam, (xs[i] - xs[0]).lpNorm<Eigen::Infinity>());
    }
    if (spread < options.f_tolerance && diam < options.x_tolerance) {
      res.converged = true;
      break;
    }

    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(dim);
    for (int i = 0; i < dim; ++i) centroid += xs[i];
    centroid /= dim;
    const Eigen::VectorXd& worst = xs[dim];

    const Eigen::VectorXd xr = clamp(centroid + (centroid - worst), lo, hi);
    const double fr = eval(xr);
    if (fr < fs[0]) {
      const Eigen::VectorXd xe =
          clamp(centroid + 2.0 * (centroid - worst), lo, hi);
      const double fe = eval(xe);
      if (fe < fr) {
        xs[dim] = xe;
        fs[dim] = fe;
      } else {
        xs[dim] = xr;
        fs[dim] = fr;
      }
    } else if (fr < fs[dim - 1]) {
      xs[dim] = xr;
      fs[dim] = fr;
    } else {
      const bool outside = fr < fs[dim];
      const Eigen::VectorXd base = outside ? xr : worst;
      const Eigen::VectorXd xc = clamp(centroid + 0.5 * (base - centroid), lo, hi);
      const double fc = eval(xc);
      if (fc < (outside ? fr : fs[dim])) {
        xs[dim] = xc;
        fs[dim] = fc;
      } else {
        for (int i = 1; i <= dim; ++i) {
          xs[i] = clamp(xs[0] + 0.5 * (xs[i] - xs[0]), lo, hi);
          fs[i] = eval(xs[i]);
        }
      }
    }
    order();
  }

  res.x = xs[0];
  res.f = fs[0];
  res.evals = evals;
  return res;
}

}  // namespace phylosde
