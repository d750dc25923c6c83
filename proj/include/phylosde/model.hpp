#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <stdexcept>
#include <string>

namespace phylosde {

// trait models ordered by nesting: the trait y always follows an OU pull
// toward an optimum theta (alpha_y = 0 degenerates to plain BM); the suffix
// names what else moves, first the optimum (BM or OU), then, for the longer
// names, the diffusion rate of y (BM with volatility tau)
enum class ModelKind { BM, OU, OUBM, OUOU, OUBMBM, OUOUBM };

inline std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::BM: return "bm";
    case ModelKind::OU: return "ou";
    case ModelKind::OUBM: return "oubm";
    case ModelKind::OUOU: return "ouou";
    case ModelKind::OUBMBM: return "oubmbm";
    case ModelKind::OUOUBM: return "ououbm";
  }
  return "?";
}

inline ModelKind model_kind_from_string(const std::string& name) {
  std::string key = name;
  std::transform(key.begin(), key.end(), key.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  if (key == "bm") return ModelKind::BM;
  if (key == "ou") return ModelKind::OU;
  if (key == "oubm") return ModelKind::OUBM;
  if (key == "ouou") return ModelKind::OUOU;
  if (key == "oubmbm") return ModelKind::OUBMBM;
  if (key == "ououbm") return ModelKind::OUOUBM;
  throw std::invalid_argument("unknown model kind '" + name + "'");
}

// does the optimum itself diffuse (and so have its own variance)?
inline bool has_moving_optimum(ModelKind kind) {
  return kind == ModelKind::OUBM || kind == ModelKind::OUOU ||
         kind == ModelKind::OUBMBM || kind == ModelKind::OUOUBM;
}

// does the optimum revert (OU) rather than drift (BM)?
inline bool has_reverting_optimum(ModelKind kind) {
  return kind == ModelKind::OUOU || kind == ModelKind::OUOUBM;
}

// does the diffusion rate of y itself diffuse?
inline bool has_moving_rate(ModelKind kind) {
  return kind == ModelKind::OUBMBM || kind == ModelKind::OUOUBM;
}

struct ModelParams {
  ModelKind kind = ModelKind::BM;
  double alpha_y = 0.0;      // pull of y toward the optimum
  double alpha_theta = 0.0;  // pull of the optimum toward its center
  double sigma_y0 = 0.0;     // diffusion of y at time zero
  double sigma_theta = 0.0;  // diffusion of the optimum
  double tau = 0.0;          // volatility of the diffusion rate of y

  // every rate must be finite and non-negative, and rates a kind does not
  // use must be zero
  void validate() const {
    auto check = [](double v, const char* name) {
      if (!std::isfinite(v) || v < 0.0)
        throw std::invalid_argument(std::string(name) +
                                    " must be finite and non-negative");
    };
    check(alpha_y, "alpha_y");
    check(alpha_theta, "alpha_theta");
    check(sigma_y0, "sigma_y0");
    check(sigma_theta, "sigma_theta");
    check(tau, "tau");
    auto zero = [this](double v, const char* name) {
      if (v != 0.0)
        throw std::invalid_argument(std::string(name) + " must be zero for " +
                                    phylosde::to_string(kind));
    };
    if (kind == ModelKind::BM) zero(alpha_y, "alpha_y");
    if (!has_moving_optimum(kind)) zero(sigma_theta, "sigma_theta");
    if (!has_reverting_optimum(kind)) zero(alpha_theta, "alpha_theta");
    if (!has_moving_rate(kind)) zero(tau, "tau");
  }
};

// state at the root; sigma0 should match params.sigma_y0 (the helpers below
// keep them consistent)
struct InitialState {
  double y0 = 0.0;
  double theta0 = 0.0;
  double sigma0 = 0.0;
};

inline InitialState make_initial(const ModelParams& params, double y0 = 0.0,
                                 double theta0 = 0.0) {
  return {y0, theta0, params.sigma_y0};
}

}  // namespace phylosde
