#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "phylosde/compare.hpp"
#include "phylosde/covariance.hpp"
#include "phylosde/fit.hpp"
#include "phylosde/model.hpp"
#include "phylosde/moments.hpp"
#include "phylosde/simulate.hpp"
#include "phylosde/tree.hpp"

namespace py = pybind11;
using namespace phylosde;

namespace {

ModelParams make_params(const std::string& kind, double alpha_y,
                        double alpha_theta, double sigma_y, double sigma_theta,
                        double tau) {
  ModelParams p;
  p.kind = model_kind_from_string(kind);
  p.alpha_y = alpha_y;
  p.alpha_theta = alpha_theta;
  p.sigma_y0 = sigma_y;
  p.sigma_theta = sigma_theta;
  p.tau = tau;
  p.validate();
  return p;
}

SimConfig make_sim_config(double dt, std::uint64_t seed,
                          const std::string& predictor, double alpha_x,
                          double sigma_x, double b0, double b1, double x_root,
                          double y_root, bool record_path) {
  SimConfig c;
  c.dt = dt;
  c.seed = seed;
  if (predictor == "bm")
    c.predictor = PredictorKind::BM;
  else if (predictor == "ou")
    c.predictor = PredictorKind::OU;
  else if (predictor == "default")
    c.predictor = PredictorKind::Default;
  else
    throw std::invalid_argument("predictor must be bm, ou or default");
  c.alpha_x = alpha_x;
  c.sigma_x = sigma_x;
  c.b0 = b0;
  c.b1 = b1;
  c.x_root = x_root;
  c.y_root = y_root;
  c.record_path = record_path;
  return c;
}

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "trait evolution on phylogenies: moments, covariances, fits";

  py::register_exception<ParseError>(m, "TreeParseError", PyExc_ValueError);
  py::register_exception<NumericalError>(m, "NumericalError",
                                         PyExc_ArithmeticError);

  py::class_<PhyloTree>(m, "PhyloTree")
      .def_property_readonly("n_tips", &PhyloTree::tip_count)
      .def_property_readonly("n_nodes", &PhyloTree::node_count)
      .def_property_readonly("tip_labels", &PhyloTree::tip_labels)
      .def("tip_depth", &PhyloTree::tip_depth, py::arg("tip"))
      .def("newick", [](const PhyloTree& t) { return serialize_newick(t); })
      .def("__repr__", [](const PhyloTree& t) {
        return "<PhyloTree with " + std::to_string(t.tip_count()) + " tips>";
      });

  m.def("parse_newick",
        [](const std::string& text) { return parse_newick(text); },
        py::arg("text"));
  m.def("generate_tree",
        [](const std::string& kind, int n_tips, double depth,
           std::uint64_t seed, double birth_rate, double death_rate) {
          TreeGenOptions opts;
          opts.birth_rate = birth_rate;
          opts.death_rate = death_rate;
          return generate_tree(tree_kind_from_string(kind), n_tips, depth,
                               seed, opts);
        },
        py::arg("kind"), py::arg("n_tips"), py::arg("depth"),
        py::arg("seed") = 0, py::arg("birth_rate") = 1.0,
        py::arg("death_rate") = 0.0);
  m.def("shared_path_matrix",
        [](const PhyloTree& tree) {
          auto g = shared_path_matrix(tree);
          return py::make_tuple(g.times, g.tip_order);
        },
        py::arg("tree"));
  m.def("pair_times",
        [](const PhyloTree& tree, int tip_i, int tip_j) {
          const PairTimes t = pair_times(tree, tip_i, tip_j);
          return py::make_tuple(t.shared, t.post_i, t.post_j, t.divergence);
        },
        py::arg("tree"), py::arg("tip_i"), py::arg("tip_j"));

  py::class_<ModelParams>(m, "ModelParams")
      .def(py::init(&make_params), py::arg("kind"), py::arg("alpha_y") = 0.0,
           py::arg("alpha_theta") = 0.0, py::arg("sigma_y") = 0.0,
           py::arg("sigma_theta") = 0.0, py::arg("tau") = 0.0)
      .def_property_readonly(
          "kind", [](const ModelParams& p) { return to_string(p.kind); })
      .def_readonly("alpha_y", &ModelParams::alpha_y)
      .def_readonly("alpha_theta", &ModelParams::alpha_theta)
      .def_readonly("sigma_y", &ModelParams::sigma_y0)
      .def_readonly("sigma_theta", &ModelParams::sigma_theta)
      .def_readonly("tau", &ModelParams::tau)
      .def("__repr__", [](const ModelParams& p) {
        return "<ModelParams " + to_string(p.kind) + ">";
      });

  py::class_<MomentState>(m, "MomentState")
      .def_readonly("time", &MomentState::time)
      .def_readonly("e_yy", &MomentState::e_yy)
      .def_readonly("e_tt", &MomentState::e_tt)
      .def_readonly("e_ss", &MomentState::e_ss)
      .def_readonly("e_yt", &MomentState::e_yt)
      .def_readonly("e_ys", &MomentState::e_ys)
      .def_readonly("e_ts", &MomentState::e_ts)
      .def_readonly("mean_y", &MomentState::mean_y)
      .def_readonly("mean_theta", &MomentState::mean_theta)
      .def_readonly("mean_sigma", &MomentState::mean_sigma)
      .def_property_readonly("var_y", &MomentState::var_y)
      .def_property_readonly("var_theta", &MomentState::var_theta)
      .def_property_readonly("cov_y_theta", &MomentState::cov_y_theta);

  m.def("solve_moments",
        [](const ModelParams& p, double t, double y0, double theta0) {
          return solve_moments_closed(p, make_initial(p, y0, theta0), t);
        },
        py::arg("params"), py::arg("t"), py::arg("y0") = 0.0,
        py::arg("theta0") = 0.0);
  m.def("solve_moments_numeric",
        [](const ModelParams& p, double t, double step, double y0,
           double theta0) {
          return solve_moments_numeric(p, make_initial(p, y0, theta0), t,
                                       step);
        },
        py::arg("params"), py::arg("t"), py::arg("step") = 1e-3,
        py::arg("y0") = 0.0, py::arg("theta0") = 0.0);
  m.def("conditional_coefficients",
        [](const ModelParams& p, double t) {
          const auto c = conditional_coefficients(p, t);
          return py::make_tuple(c.on_trait, c.on_optimum);
        },
        py::arg("params"), py::arg("t"));
  m.def("expected_rate_square", &expected_rate_square, py::arg("params"),
        py::arg("t"));
  m.def("rho",
        [](const ModelParams& p, double t) {
          return rho(p, make_initial(p), t);
        },
        py::arg("params"), py::arg("t"));
  m.def("drift_matrix", &drift_matrix, py::arg("params"));

  m.def("species_covariance",
        [](const ModelParams& p, double t_shared, double t_i, double t_j) {
          return species_covariance_pair(p, make_initial(p), t_shared, t_i,
                                         t_j);
        },
        py::arg("params"), py::arg("t_shared"), py::arg("t_i"),
        py::arg("t_j"));
  m.def("pair_cross_moments",
        [](const ModelParams& p, double t_shared, double t_i, double t_j) {
          const PairCovariance c =
              cross_moment_pair(p, make_initial(p), t_shared, t_i, t_j);
          return py::make_tuple(c.trait_trait, c.trait_i_optimum_j,
                                c.trait_j_optimum_i, c.optimum_optimum);
        },
        py::arg("params"), py::arg("t_shared"), py::arg("t_i"),
        py::arg("t_j"));
  m.def("residual_covariance",
        [](const PhyloTree& tree, const ModelParams& p) {
          const auto cov = residual_covariance_matrix(tree, p,
                                                      make_initial(p));
          return py::make_tuple(cov.trait, cov.residual, cov.attenuation,
                                cov.tip_order);
        },
        py::arg("tree"), py::arg("params"));

  m.def("simulate_tips",
        [](const PhyloTree& tree, const ModelParams& p, double dt,
           std::uint64_t seed, const std::string& predictor, double alpha_x,
           double sigma_x, double b0, double b1, double x_root,
           double y_root) {
          const SimConfig c =
              make_sim_config(dt, seed, predictor, alpha_x, sigma_x, b0, b1,
                              x_root, y_root, false);
          const TipDataset d = simulate_tips(tree, p, c);
          return py::make_tuple(d.species, d.x, d.y);
        },
        py::arg("tree"), py::arg("params"), py::arg("dt") = kNaN,
        py::arg("seed") = 0, py::arg("predictor") = "default",
        py::arg("alpha_x") = kNaN, py::arg("sigma_x") = kNaN,
        py::arg("b0") = 0.0, py::arg("b1") = 1.0, py::arg("x_root") = 0.0,
        py::arg("y_root") = kNaN);
  m.def("simulate_path",
        [](const ModelParams& p, double duration, double dt,
           std::uint64_t seed, const std::string& predictor, double alpha_x,
           double sigma_x, double b0, double b1, double x_root,
           double y_root) {
          const SimConfig c = make_sim_config(dt, seed, predictor, alpha_x,
                                              sigma_x, b0, b1, x_root, y_root,
                                              true);
          const SimPath path = simulate_path(p, c, duration);
          Eigen::MatrixXd out(path.size(), 5);
          for (std::size_t i = 0; i < path.size(); ++i)
            out.row(i) << path[i].time, path[i].x, path[i].theta, path[i].y,
                path[i].sigma;
          return out;
        },
        py::arg("params"), py::arg("duration"), py::arg("dt") = kNaN,
        py::arg("seed") = 0, py::arg("predictor") = "default",
        py::arg("alpha_x") = kNaN, py::arg("sigma_x") = kNaN,
        py::arg("b0") = 0.0, py::arg("b1") = 1.0, py::arg("x_root") = 0.0,
        py::arg("y_root") = kNaN);

  py::class_<FitResult>(m, "FitResult")
      .def_property_readonly(
          "kind", [](const FitResult& f) { return to_string(f.kind); })
      .def_readonly("coefficients", &FitResult::coefficients)
      .def_readonly("params", &FitResult::params)
      .def_readonly("sigma_x2", &FitResult::sigma_x2)
      .def_readonly("log_likelihood", &FitResult::log_likelihood)
      .def_readonly("r2", &FitResult::r2)
      .def_readonly("k", &FitResult::k)
      .def_readonly("n", &FitResult::n)
      .def_readonly("iterations", &FitResult::iterations)
      .def_readonly("converged", &FitResult::converged)
      .def("__repr__", [](const FitResult& f) {
        return "<FitResult " + to_string(f.kind) +
               " logL=" + std::to_string(f.log_likelihood) + ">";
      });

  m.def("fit_model",
        [](const PhyloTree& tree, const std::vector<std::string>& species,
           const Eigen::VectorXd& x, const Eigen::VectorXd& y,
           const std::string& kind, std::uint64_t seed) {
          FitConfig config;
          config.seed = seed;
          FitData data{species, x, y};
          return fit_model(tree, data, model_kind_from_string(kind), config);
        },
        py::arg("tree"), py::arg("species"), py::arg("x"), py::arg("y"),
        py::arg("kind"), py::arg("seed") = 0);

  m.def("aicc", &aicc, py::arg("log_likelihood"), py::arg("k"), py::arg("n"),
        py::arg("conventional") = false);
  m.def("akaike_weights", &akaike_weights, py::arg("scores"));
  m.def("compare_models",
        [](const PhyloTree& tree, const std::vector<std::string>& species,
           const Eigen::VectorXd& x, const Eigen::VectorXd& y,
           const std::vector<std::string>& kinds, std::uint64_t seed) {
          FitConfig config;
          config.seed = seed;
          std::vector<ModelKind> mk;
          for (const auto& k : kinds) mk.push_back(model_kind_from_string(k));
          const ComparisonReport rep =
              compare_models(tree, FitData{species, x, y}, mk, config);
          py::list entries;
          for (const auto& e : rep.entries) {
            py::dict d;
            d["kind"] = to_string(e.kind);
            d["ok"] = e.ok;
            if (e.ok) {
              d["logL"] = e.fit.log_likelihood;
              d["aicc"] = e.aicc_value;
              d["delta_aicc"] = e.delta_aicc;
              d["weight"] = e.weight;
              d["converged"] = e.fit.converged;
            } else {
              d["error"] = e.error;
            }
            entries.append(d);
          }
          return entries;
        },
        py::arg("tree"), py::arg("species"), py::arg("x"), py::arg("y"),
        py::arg("kinds"), py::arg("seed") = 0);

#ifdef PHYLOSDE_VERSION
  m.attr("__version__") = PHYLOSDE_VERSION;
#else
  m.attr("__version__") = "0.0.0";
#endif
}
