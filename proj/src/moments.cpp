#include "phylosde/moments.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "phylosde/errors.hpp"

namespace phylosde {

namespace {

// rates closer than this (relative) are treated as equal; keeps the closed
// form stable through the removable singularities at coinciding rates
constexpr double kRateMergeTol = 1e-8;

bool rates_match(double a, double b) {
  return std::abs(a - b) <=
         kRateMergeTol * std::max({std::abs(a), std::abs(b), 1.0});
}

// sum of terms coeff * t^power * exp(-rate * t), grouped by rate
class ExpPoly {
public:
  void add(double rate, int power, double coeff) {
    if (coeff == 0.0) return;
    auto& poly = bucket(rate);
    if (static_cast<int>(poly.size()) <= power) poly.resize(power + 1, 0.0);
    poly[power] += coeff;
  }

  void add(const ExpPoly& other, double scale = 1.0) {
    for (const auto& [rate, poly] : other.terms_)
      for (std::size_t p = 0; p < poly.size(); ++p)
        add(rate, static_cast<int>(p), scale * poly[p]);
  }

  double eval(double t) const {
    double total = 0.0;
    for (const auto& [rate, poly] : terms_) {
      double value = 0.0;
      for (std::size_t p = poly.size(); p-- > 0;)
        value = value * t + poly[p];
      total += value * std::exp(-rate * t);
    }
    return total;
  }

  // integral_0^t exp(-mu (t - s)) f(s) ds, the particular solution of
  // f' = -mu f + (this)
  ExpPoly convolve_decay(double mu) const {
    ExpPoly out;
    for (const auto& [lambda, poly] : terms_) {
      const double delta = mu - lambda;
      const bool merged = rates_match(mu, lambda);
      for (std::size_t p = 0; p < poly.size(); ++p) {
        const double c = poly[p];
        if (c == 0.0) continue;
        if (merged) {
          out.add(mu, static_cast<int>(p) + 1, c / (static_cast<int>(p) + 1));
          continue;
        }
        // integral_0^t s^p e^{delta s} ds expanded by parts
        const int pw = static_cast<int>(p);
        double fact = 1.0;   // p! / (p-k)!
        double dpow = delta; // delta^{k+1}
        double sign = 1.0;   // (-1)^k
        for (int k = 0; k <= pw; ++k) {
          out.add(lambda, pw - k, c * sign * fact / dpow);
          if (k < pw) {
            fact *= pw - k;
            dpow *= delta;
            sign = -sign;
          }
        }
        // boundary piece at s = 0 decays with mu
        out.add(mu, 0, -c * sign * fact / dpow);
      }
    }
    return out;
  }

private:
  std::vector<std::pair<double, std::vector<double>>> terms_;

  std::vector<double>& bucket(double rate) {
    for (auto& [r, poly] : terms_)
      if (rates_match(r, rate)) return poly;
    terms_.emplace_back(rate, std::vector<double>{});
    return terms_.back().second;
  }
};

void check_time(double t) {
  if (!(t >= 0.0) || !std::isfinite(t))
    throw std::invalid_argument("time must be non-negative and finite");
}

}  // namespace

Eigen::Matrix3d drift_matrix(const ModelParams& params) {
  Eigen::Matrix3d a = Eigen::Matrix3d::Zero();
  a(0, 0) = -params.alpha_y;
  a(0, 1) = params.alpha_y;
  a(1, 1) = -params.alpha_theta;
  return a;
}

ConditionalCoefficients conditional_coefficients(const ModelParams& params,
                                                 double t) {
  check_time(t);
  const double ay = params.alpha_y;
  const double at = params.alpha_theta;
  ConditionalCoefficients out;
  out.on_trait = std::exp(-ay * t);
  if (ay == 0.0) {
    out.on_optimum = 0.0;
  } else if (std::abs(ay - at) < 1e-8 * std::max({ay, at, 1.0})) {
    out.on_optimum = ay * t * std::exp(-ay * t);
  } else {
    // ay/(ay-at) (e^{-at t} - e^{-ay t}), written via expm1 so nearly
    // equal rates stay accurate
    out.on_optimum =
        -(ay / (ay - at)) * std::exp(-at * t) * std::expm1(-(ay - at) * t);
  }
  return out;
}

double expected_rate_square(const ModelParams& params, double t) {
  check_time(t);
  return params.sigma_y0 * params.sigma_y0 + params.tau * params.tau * t;
}

std::array<double, 6> moment_ode_rhs(const MomentState& state,
                                     const ModelParams& params) {
  const double ay = params.alpha_y;
  const double at = params.alpha_theta;
  const double st2 = params.sigma_theta * params.sigma_theta;
  const double tau2 = params.tau * params.tau;
  const double drive = expected_rate_square(params, state.time);
  return {
      2.0 * ay * (state.e_yt - state.e_yy) + drive,  // e_yy
      -2.0 * at * state.e_tt + st2,                  // e_tt
      tau2,                                          // e_ss
      ay * state.e_tt - (ay + at) * state.e_yt,      // e_yt
      ay * (state.e_ts - state.e_ys),                // e_ys
      -at * state.e_ts,                              // e_ts
  };
}

// ---------------------------------------------------------------------------
// closed form

struct MomentSolution::Impl {
  ExpPoly e_yy, e_tt, e_ss, e_yt, e_ys, e_ts;
  ExpPoly mean_y, mean_theta;
  double mean_sigma = 0.0;
};

MomentSolution::MomentSolution(const ModelParams& params,
                               const InitialState& init) {
  params.validate();
  const double ay = params.alpha_y;
  const double at = params.alpha_theta;
  const double st2 = params.sigma_theta * params.sigma_theta;
  const double tau2 = params.tau * params.tau;
  const double s02 = params.sigma_y0 * params.sigma_y0;

  auto impl = std::make_shared<Impl>();

  // each moment solves f' = -mu f + g with g already known, so
  // f = e^{-mu t} f(0) + (g convolved against the decay mu)
  impl->mean_theta.add(at, 0, init.theta0);
  impl->mean_y.add(ay, 0, init.y0);
  impl->mean_y.add(impl->mean_theta.convolve_decay(ay), ay);
  impl->mean_sigma = init.sigma0;

  impl->e_tt.add(2.0 * at, 0, init.theta0 * init.theta0);
  {
    ExpPoly g;
    g.add(0.0, 0, st2);
    impl->e_tt.add(g.convolve_decay(2.0 * at));
  }

  impl->e_ss.add(0.0, 0, init.sigma0 * init.sigma0);
  impl->e_ss.add(0.0, 1, tau2);

  impl->e_ts.add(at, 0, init.theta0 * init.sigma0);

  impl->e_yt.add(ay + at, 0, init.y0 * init.theta0);
  impl->e_yt.add(impl->e_tt.convolve_decay(ay + at), ay);

  impl->e_ys.add(ay, 0, init.y0 * init.sigma0);
  impl->e_ys.add(impl->e_ts.convolve_decay(ay), ay);

  impl->e_yy.add(2.0 * ay, 0, init.y0 * init.y0);
  {
    ExpPoly g;
    g.add(impl->e_yt, 2.0 * ay);
    g.add(0.0, 0, s02);
    g.add(0.0, 1, tau2);
    impl->e_yy.add(g.convolve_decay(2.0 * ay));
  }

  impl_ = std::move(impl);
}

MomentState MomentSolution::at(double t) const {
  check_time(t);
  MomentState s;
  s.time = t;
  s.e_yy = impl_->e_yy.eval(t);
  s.e_tt = impl_->e_tt.eval(t);
  s.e_ss = impl_->e_ss.eval(t);
  s.e_yt = impl_->e_yt.eval(t);
  s.e_ys = impl_->e_ys.eval(t);
  s.e_ts = impl_->e_ts.eval(t);
  s.mean_y = impl_->mean_y.eval(t);
  s.mean_theta = impl_->mean_theta.eval(t);
  s.mean_sigma = impl_->mean_sigma;
  return s;
}

MomentState solve_moments_closed(const ModelParams& params,
                                 const InitialState& init, double t) {
  return MomentSolution(params, init).at(t);
}

MomentState solve_moments_numeric(const ModelParams& params,
                                  const InitialState& init, double t,
                                  double step) {
  params.validate();
  check_time(t);
  if (!(step > 0.0)) throw std::invalid_argument("step must be positive");

  std::array<double, 6> m = {
      init.y0 * init.y0,       init.theta0 * init.theta0,
      init.sigma0 * init.sigma0, init.y0 * init.theta0,
      init.y0 * init.sigma0,   init.theta0 * init.sigma0,
  };

  auto rhs = [&params](double time, const std::array<double, 6>& v) {
    MomentState s;
    s.time = time;
    s.e_yy = v[0];
    s.e_tt = v[1];
    s.e_ss = v[2];
    s.e_yt = v[3];
    s.e_ys = v[4];
    s.e_ts = v[5];
    return moment_ode_rhs(s, params);
  };

  double now = 0.0;
  while (now < t) {
    const double h = std::min(step, t - now);
    const auto k1 = rhs(now, m);
    std::array<double, 6> tmp;
    for (int i = 0; i < 6; ++i) tmp[i] = m[i] + 0.5 * h * k1[i];
    const auto k2 = rhs(now + 0.5 * h, tmp);
    for (int i = 0; i < 6; ++i) tmp[i] = m[i] + 0.5 * h * k2[i];
    const auto k3 = rhs(now + 0.5 * h, tmp);
    for (int i = 0; i < 6; ++i) tmp[i] = m[i] + h * k3[i];
    const auto k4 = rhs(now + h, tmp);
    for (int i = 0; i < 6; ++i) {
      m[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
      if (!std::isfinite(m[i]))
        throw NumericalError("moment integration produced non-finite values");
    }
    now += h;
  }

  const auto cc = conditional_coefficients(params, t);
  MomentState s;
  s.time = t;
  s.e_yy = m[0];
  s.e_tt = m[1];
  s.e_ss = m[2];
  s.e_yt = m[3];
  s.e_ys = m[4];
  s.e_ts = m[5];
  s.mean_y = cc.on_trait * init.y0 + cc.on_optimum * init.theta0;
  s.mean_theta = std::exp(-params.alpha_theta * t) * init.theta0;
  s.mean_sigma = init.sigma0;
  return s;
}

double rho(const ModelParams& params, const InitialState& init, double t) {
  const MomentState s = solve_moments_closed(params, init, t);
  const double var = s.var_theta();
  if (var <= 1e-14)
    throw NumericalError("optimum variance is degenerate; rho is undefined");
  return s.cov_y_theta() / var;
}

}  // namespace phylosde
