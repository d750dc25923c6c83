#include <CLI11.hpp>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <limits>
#include <set>
#include <sstream>

#include "phylosde/compare.hpp"
#include "phylosde/covariance.hpp"
#include "phylosde/errors.hpp"
#include "phylosde/fit.hpp"
#include "phylosde/table.hpp"

using json = nlohmann::ordered_json;
using namespace phylosde;

namespace {

constexpr const char* kVersion = "phylosde 0.1.0";

constexpr int kExitOk = 0;
constexpr int kExitInput = 2;
constexpr int kExitNoConverge = 3;
constexpr int kExitNumeric = 4;

// JSON has no nan or inf; emit null for those
json json_number(double v) {
  if (!std::isfinite(v)) return json(nullptr);
  return json(v);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::invalid_argument("cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::invalid_argument("cannot write '" + path + "'");
  out << text;
}

// --tree accepts a newick file or an inline generator spec kind:n:depth
PhyloTree load_tree(const std::string& arg, std::uint64_t seed, double birth,
                    double death) {
  const auto colon = arg.find(':');
  if (colon != std::string::npos) {
    bool generator = true;
    TreeKind kind{};
    try {
      kind = tree_kind_from_string(arg.substr(0, colon));
    } catch (const std::invalid_argument&) {
      generator = false;  // not a kind name, treat as a file path
    }
    if (generator) {
      const auto rest = arg.substr(colon + 1);
      const auto colon2 = rest.find(':');
      if (colon2 == std::string::npos)
        throw std::invalid_argument(
            "generator spec must be kind:n_tips:depth");
      const int n = std::stoi(rest.substr(0, colon2));
      const double depth = std::stod(rest.substr(colon2 + 1));
      TreeGenOptions opts;
      opts.birth_rate = birth;
      opts.death_rate = death;
      return generate_tree(kind, n, depth, seed, opts);
    }
  }
  return parse_newick(read_file(arg));
}

FitData load_fit_data(const std::string& path, const std::string& log10,
                      std::vector<std::string>* warnings) {
  const TraitTable t = read_trait_table_file(path);
  if (warnings)
    for (const auto& col : t.ignored_columns)
      warnings->push_back("ignored column '" + col + "' in " + path);
  FitData d;
  d.species = t.species;
  d.x = Eigen::Map<const Eigen::VectorXd>(t.x.data(), t.x.size());
  d.y = Eigen::Map<const Eigen::VectorXd>(t.y.data(), t.y.size());
  const bool lx = log10 == "x" || log10 == "xy";
  const bool ly = log10 == "y" || log10 == "xy";
  if (!log10.empty() && !lx && !ly)
    throw std::invalid_argument("--log10 must be x, y or xy");
  for (int i = 0; i < d.x.size(); ++i) {
    if (lx) {
      if (d.x[i] <= 0.0)
        throw std::invalid_argument("row " + std::to_string(i + 2) +
                                    ": x must be positive for --log10");
      d.x[i] = std::log10(d.x[i]);
    }
    if (ly) {
      if (d.y[i] <= 0.0)
        throw std::invalid_argument("row " + std::to_string(i + 2) +
                                    ": y must be positive for --log10");
      d.y[i] = std::log10(d.y[i]);
    }
  }
  return d;
}

json fit_to_json(const FitResult& f) {
  json j;
  j["kind"] = to_string(f.kind);
  j["n"] = f.n;
  j["k"] = f.k;
  j["coefficients"] = {{"b0", json_number(f.coefficients[0])},
                       {"b1", json_number(f.coefficients[1])}};
  j["params"] = {{"alpha_y", json_number(f.params.alpha_y)},
                 {"alpha_theta", json_number(f.params.alpha_theta)},
                 {"sigma_y", json_number(f.params.sigma_y0)},
                 {"sigma_theta", json_number(f.params.sigma_theta)},
                 {"tau", json_number(f.params.tau)}};
  j["sigma_x2"] = json_number(f.sigma_x2);
  j["log_likelihood"] = json_number(f.log_likelihood);
  j["r2"] = json_number(f.r2);
  j["iterations"] = f.iterations;
  j["converged"] = f.converged;
  j["seed"] = f.seed;
  return j;
}

std::string fit_to_tsv(const FitResult& f) {
  std::ostringstream out;
  out << "kind\tn\tk\tb0\tb1\talpha_y\talpha_theta\tsigma_y\tsigma_theta\t"
         "tau\tsigma_x2\tlogL\tr2\titerations\tconverged\n";
  out << to_string(f.kind) << '\t' << f.n << '\t' << f.k << '\t'
      << format_number(f.coefficients[0]) << '\t'
      << format_number(f.coefficients[1]) << '\t'
      << format_number(f.params.alpha_y) << '\t'
      << format_number(f.params.alpha_theta) << '\t'
      << format_number(f.params.sigma_y0) << '\t'
      << format_number(f.params.sigma_theta) << '\t'
      << format_number(f.params.tau) << '\t' << format_number(f.sigma_x2)
      << '\t' << format_number(f.log_likelihood) << '\t'
      << format_number(f.r2) << '\t' << f.iterations << '\t'
      << (f.converged ? 1 : 0) << '\n';
  return out.str();
}

void write_manifest(const std::string& out_base, const std::string& command,
                    const json& inputs, const json& config,
                    std::uint64_t seed) {
  json m;
  m["tool"] = kVersion;
  m["command"] = command;
  m["inputs"] = inputs;
  m["config"] = config;
  m["seed"] = seed;
  write_file(out_base + ".manifest.json", m.dump(2) + "\n");
}

// --------------------------------------------------------------------------

struct CommonArgs {
  std::uint64_t seed = 0;
  std::string out;
  std::string format = "json";
};

int cmd_fit(const std::string& tree_path, const std::string& data_path,
            const std::string& kind_name, const std::string& log10,
            const CommonArgs& common) {
  const PhyloTree tree = load_tree(tree_path, common.seed, 1.0, 0.0);
  std::vector<std::string> warnings;
  const FitData data = load_fit_data(data_path, log10, &warnings);
  for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";

  FitConfig config;
  config.seed = common.seed;
  const FitResult fit =
      fit_model(tree, data, model_kind_from_string(kind_name), config);

  const std::string text = common.format == "tsv"
                               ? fit_to_tsv(fit)
                               : fit_to_json(fit).dump(2) + "\n";
  if (common.out.empty()) {
    std::cout << text;
  } else {
    const std::string ext = common.format == "tsv" ? ".tsv" : ".json";
    write_file(common.out + ext, text);
    // sampled optimum line y = b0 + b1 x over the observed x range, for plots
    std::ostringstream line;
    line << "x\ty_hat\n";
    const double x_lo = data.x.minCoeff(), x_hi = data.x.maxCoeff();
    for (int i = 0; i <= 100; ++i) {
      const double x = x_lo + (x_hi - x_lo) * i / 100.0;
      line << format_number(x) << '\t'
           << format_number(fit.coefficients[0] + fit.coefficients[1] * x)
           << '\n';
    }
    write_file(common.out + ".line.tsv", line.str());
    json inputs{{"tree", tree_path}, {"data", data_path}};
    json cfg{{"kind", kind_name},
             {"log10", log10},
             {"format", common.format},
             {"b_tolerance", config.b_tolerance},
             {"max_gls_iterations", config.max_gls_iterations},
             {"max_starts", config.max_starts}};
    write_manifest(common.out, "fit", inputs, cfg, common.seed);
  }
  return fit.converged ? kExitOk : kExitNoConverge;
}

int cmd_simulate(const std::string& tree_arg, const std::string& kind_name,
                 double alpha_y, double alpha_theta, double sigma_y,
                 double sigma_theta, double tau, double b0, double b1,
                 double x0, double y0, double sigma_x, double alpha_x,
                 double dt, double paths_duration, double birth, double death,
                 const CommonArgs& common) {
  ModelParams params;
  params.kind = model_kind_from_string(kind_name);
  params.alpha_y = alpha_y;
  params.alpha_theta = alpha_theta;
  params.sigma_y0 = sigma_y;
  params.sigma_theta = sigma_theta;
  params.tau = tau;
  params.validate();

  SimConfig sim;
  sim.seed = common.seed;
  sim.dt = dt;
  sim.b0 = b0;
  sim.b1 = b1;
  sim.x_root = x0;
  sim.y_root = y0;
  sim.sigma_x = sigma_x;
  sim.alpha_x = alpha_x;

  const bool want_path = !std::isnan(paths_duration);
  const bool want_tips = !tree_arg.empty();
  if (!want_path && !want_tips)
    throw std::invalid_argument("give --tree for tip data, --paths for a trajectory");
  if (want_path && want_tips && common.out.empty())
    throw std::invalid_argument("--out is needed to write both outputs");

  json inputs = json::object();
  if (want_tips) inputs["tree"] = tree_arg;

  if (want_tips) {
    const PhyloTree tree = load_tree(tree_arg, common.seed, birth, death);
    const TipDataset tips = simulate_tips(tree, params, sim);
    std::ostringstream text;
    write_tip_dataset(text, tips);
    if (common.out.empty())
      std::cout << text.str();
    else
      write_file(common.out + ".tips.tsv", text.str());
  }
  if (want_path) {
    const SimPath path = simulate_path(params, sim, paths_duration);
    std::ostringstream text;
    write_path(text, path);
    if (common.out.empty())
      std::cout << text.str();
    else
      write_file(common.out + ".path.tsv", text.str());
  }
  if (!common.out.empty()) {
    json cfg{{"kind", kind_name},
             {"alpha_y", json_number(alpha_y)},
             {"alpha_theta", json_number(alpha_theta)},
             {"sigma_y", json_number(sigma_y)},
             {"sigma_theta", json_number(sigma_theta)},
             {"tau", json_number(tau)},
             {"b0", json_number(b0)},
             {"b1", json_number(b1)},
             {"x0", json_number(x0)},
             {"y0", json_number(y0)},
             {"sigma_x", json_number(sigma_x)},
             {"alpha_x", json_number(alpha_x)},
             {"dt", json_number(dt)},
             {"paths", json_number(paths_duration)},
             {"birth", json_number(birth)},
             {"death", json_number(death)}};
    write_manifest(common.out, "simulate", inputs, cfg, common.seed);
  }
  return kExitOk;
}

int cmd_compare(const std::string& tree_path, const std::string& data_path,
                const std::string& kinds_arg, const std::string& log10,
                bool conventional, const CommonArgs& common) {
  const PhyloTree tree = load_tree(tree_path, common.seed, 1.0, 0.0);
  std::vector<std::string> warnings;
  const FitData data = load_fit_data(data_path, log10, &warnings);
  for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";

  std::vector<ModelKind> kinds;
  std::stringstream ss(kinds_arg);
  std::string piece;
  while (std::getline(ss, piece, ','))
    if (!piece.empty()) kinds.push_back(model_kind_from_string(piece));

  FitConfig config;
  config.seed = common.seed;
  const ComparisonReport report =
      compare_models(tree, data, kinds, config, conventional);

  std::string text;
  if (common.format == "json") {
    json j;
    j["selected"] = report.selected >= 0
                        ? json(to_string(report.entries[report.selected].kind))
                        : json(nullptr);
    j["any_failed"] = report.any_failed;
    j["entries"] = json::array();
    for (const auto& e : report.entries) {
      json entry;
      entry["kind"] = to_string(e.kind);
      entry["ok"] = e.ok;
      if (e.ok) {
        entry["fit"] = fit_to_json(e.fit);
        entry["aicc"] = json_number(e.aicc_value);
        entry["delta_aicc"] = json_number(e.delta_aicc);
        entry["weight"] = json_number(e.weight);
      } else {
        entry["error"] = e.error;
      }
      j["entries"].push_back(entry);
    }
    text = j.dump(2) + "\n";
  } else {
    std::ostringstream out;
    write_comparison(out, report);
    text = out.str();
  }

  if (common.out.empty()) {
    std::cout << text;
  } else {
    const std::string ext = common.format == "json" ? ".json" : ".tsv";
    write_file(common.out + ext, text);
    json inputs{{"tree", tree_path}, {"data", data_path}};
    json cfg{{"kinds", kinds_arg},
             {"log10", log10},
             {"conventional_aicc", conventional},
             {"format", common.format}};
    write_manifest(common.out, "compare", inputs, cfg, common.seed);
  }

  bool all_converged = !report.any_failed;
  for (const auto& e : report.entries)
    if (e.ok && !e.fit.converged) all_converged = false;
  return all_converged ? kExitOk : kExitNoConverge;
}

json bias_config_to_json(const BiasStudyConfig& c) {
  json j;
  j["kinds"] = json::array();
  for (auto k : c.kinds) j["kinds"].push_back(to_string(k));
  j["tree_kinds"] = json::array();
  for (auto k : c.tree_kinds) j["tree_kinds"].push_back(to_string(k));
  j["sample_sizes"] = c.sample_sizes;
  j["replicates"] = c.replicates;
  j["tree_depth"] = json_number(c.tree_depth);
  j["b0"] = json_number(c.b0);
  j["b1"] = json_number(c.b1);
  j["sigma_x"] = json_number(c.sigma_x);
  j["dt"] = json_number(c.dt);
  j["seed"] = c.seed;
  return j;
}

void bias_config_from_json(const json& j, BiasStudyConfig& c) {
  if (j.contains("kinds")) {
    c.kinds.clear();
    for (const auto& k : j["kinds"])
      c.kinds.push_back(model_kind_from_string(k.get<std::string>()));
  }
  if (j.contains("tree_kinds")) {
    c.tree_kinds.clear();
    for (const auto& k : j["tree_kinds"])
      c.tree_kinds.push_back(tree_kind_from_string(k.get<std::string>()));
  }
  if (j.contains("sample_sizes"))
    c.sample_sizes = j["sample_sizes"].get<std::vector<int>>();
  if (j.contains("replicates")) c.replicates = j["replicates"].get<int>();
  if (j.contains("tree_depth")) c.tree_depth = j["tree_depth"].get<double>();
  if (j.contains("b0")) c.b0 = j["b0"].get<double>();
  if (j.contains("b1")) c.b1 = j["b1"].get<double>();
  if (j.contains("sigma_x")) c.sigma_x = j["sigma_x"].get<double>();
  if (j.contains("dt") && !j["dt"].is_null())
    c.dt = j["dt"].get<double>();
  if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
}

int cmd_bias_study(const std::string& config_path, int replicates,
                   const std::string& kinds_arg, const std::string& trees_arg,
                   const std::string& sizes_arg, double depth, int threads,
                   const CommonArgs& common) {
  BiasStudyConfig config;
  if (!config_path.empty())
    bias_config_from_json(json::parse(read_file(config_path)), config);
  if (replicates > 0) config.replicates = replicates;
  if (!kinds_arg.empty()) {
    config.kinds.clear();
    std::stringstream ss(kinds_arg);
    std::string piece;
    while (std::getline(ss, piece, ','))
      if (!piece.empty()) config.kinds.push_back(model_kind_from_string(piece));
  }
  if (!trees_arg.empty()) {
    config.tree_kinds.clear();
    std::stringstream ss(trees_arg);
    std::string piece;
    while (std::getline(ss, piece, ','))
      if (!piece.empty())
        config.tree_kinds.push_back(tree_kind_from_string(piece));
  }
  if (!sizes_arg.empty()) {
    config.sample_sizes.clear();
    std::stringstream ss(sizes_arg);
    std::string piece;
    while (std::getline(ss, piece, ','))
      if (!piece.empty()) config.sample_sizes.push_back(std::stoi(piece));
  }
  if (depth > 0.0) config.tree_depth = depth;
  config.threads = threads;
  config.seed = common.seed;

  const std::string base = common.out.empty() ? "bias_study" : common.out;
  const std::string rows_path = base + ".rows.tsv";
  const std::string manifest_path = base + ".manifest.json";
  const json config_json = bias_config_to_json(config);

  // resume: completed cells in an existing rows file are skipped if the
  // manifest matches this configuration exactly
  std::set<BiasCell> done;
  std::vector<BiasRow> old_rows;
  std::ifstream existing(rows_path);
  if (existing) {
    std::ifstream mf(manifest_path);
    if (!mf)
      throw std::invalid_argument(rows_path +
                                  " exists without its manifest; remove it "
                                  "or pick another --out");
    const json m = json::parse(mf);
    if (!m.contains("config") || m["config"] != config_json)
      throw std::invalid_argument(
          rows_path + " was produced with a different configuration; remove "
                      "it or pick another --out");
    old_rows = read_bias_rows(existing);
    for (const auto& r : old_rows) done.insert(r.cell);
    std::cerr << "resuming: " << done.size() << " cells already present\n";
  }

  std::ofstream rows_out(rows_path, std::ios::app);
  if (!rows_out) throw std::invalid_argument("cannot write " + rows_path);
  if (done.empty()) {
    std::ostringstream head;
    write_bias_rows(head, {}, true);
    rows_out << head.str();
  }
  json inputs = json::object();
  if (!config_path.empty()) inputs["config"] = config_path;
  write_manifest(base, "bias-study", inputs, config_json, common.seed);

  const BiasStudyResult result =
      bias_study(config, done, [&](const std::vector<BiasRow>& rows) {
        std::ostringstream chunk;
        write_bias_rows(chunk, rows, false);
        rows_out << chunk.str();
        rows_out.flush();
      });

  // merged summary covers resumed rows too
  std::vector<BiasRow> all_rows = old_rows;
  all_rows.insert(all_rows.end(), result.rows.begin(), result.rows.end());
  std::ostringstream summary;
  write_bias_summaries(summary, summarize_bias_rows(all_rows));
  write_file(base + ".summary.tsv", summary.str());
  std::cerr << "wrote " << rows_path << " and " << base << ".summary.tsv\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"trait evolution on phylogenies: simulate, fit and compare "
               "adaptive models"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  CommonArgs common;
  std::string tree_arg, data_arg, kind_arg, kinds_arg, log10_arg;

  auto add_common = [&](CLI::App* cmd, bool with_format = true) {
    cmd->add_option("--seed", common.seed, "random seed");
    cmd->add_option("--out", common.out, "output base path");
    if (with_format)
      cmd->add_option("--format", common.format, "json or tsv")
          ->check(CLI::IsMember({"json", "tsv"}));
  };

  auto* fit = app.add_subcommand("fit", "fit one model kind to tip data");
  fit->add_option("--tree", tree_arg, "newick file or kind:n:depth spec")
      ->required();
  fit->add_option("--data", data_arg, "species/x/y table (csv or tsv)")
      ->required();
  fit->add_option("--kind", kind_arg, "model kind")->required();
  fit->add_option("--log10", log10_arg, "log10-transform x, y or xy");
  add_common(fit);

  double alpha_y = 0.0, alpha_theta = 0.0, sigma_y = 0.0, sigma_theta = 0.0,
         tau = 0.0, b0 = 0.0, b1 = 1.0, x0 = 0.0;
  double y0 = std::numeric_limits<double>::quiet_NaN();
  double sigma_x = std::numeric_limits<double>::quiet_NaN();
  double alpha_x = std::numeric_limits<double>::quiet_NaN();
  double dt = std::numeric_limits<double>::quiet_NaN();
  double paths_duration = std::numeric_limits<double>::quiet_NaN();
  double birth = 1.0, death = 0.0;

  auto* sim = app.add_subcommand("simulate", "simulate tip data or a path");
  sim->add_option("--tree", tree_arg, "newick file or kind:n:depth spec");
  sim->add_option("--kind", kind_arg, "model kind")->required();
  sim->add_option("--alpha-y", alpha_y, "pull of the trait");
  sim->add_option("--alpha-theta", alpha_theta, "pull of the optimum");
  sim->add_option("--sigma-y", sigma_y, "trait diffusion at time zero");
  sim->add_option("--sigma-theta", sigma_theta, "optimum diffusion");
  sim->add_option("--tau", tau, "volatility of the trait diffusion");
  sim->add_option("--b0", b0, "optimum line intercept");
  sim->add_option("--b1", b1, "optimum line slope");
  sim->add_option("--x0", x0, "predictor at the root");
  sim->add_option("--y0", y0, "trait at the root (default: the optimum)");
  sim->add_option("--sigma-x", sigma_x,
                  "predictor diffusion (default sigma_theta/|b1|)");
  sim->add_option("--alpha-x", alpha_x,
                  "predictor pull (default alpha_theta)");
  sim->add_option("--dt", dt, "step size (default min(0.01, shortest/20))");
  sim->add_option("--paths", paths_duration,
                  "also write one trajectory of this duration");
  sim->add_option("--birth", birth, "birth rate for birth_death trees");
  sim->add_option("--death", death, "death rate for birth_death trees");
  add_common(sim, false);

  bool conventional = false;
  auto* cmp = app.add_subcommand("compare", "fit several kinds and rank them");
  cmp->add_option("--tree", tree_arg, "newick file or kind:n:depth spec")
      ->required();
  cmp->add_option("--data", data_arg, "species/x/y table (csv or tsv)")
      ->required();
  cmp->add_option("--kinds", kinds_arg, "comma-separated model kinds")
      ->required();
  cmp->add_option("--log10", log10_arg, "log10-transform x, y or xy");
  cmp->add_flag("--conventional-aicc", conventional,
                "use the 2k + 2k(k+1)/(n-k-1) penalty");
  add_common(cmp);

  std::string config_path, trees_arg, sizes_arg;
  int replicates = 0, threads = 0;
  double depth = 0.0;
  auto* bias = app.add_subcommand(
      "bias-study", "simulate-and-refit study of estimator bias");
  bias->add_option("--config", config_path, "json configuration file");
  bias->add_option("--kinds", kinds_arg, "comma-separated model kinds");
  bias->add_option("--trees", trees_arg, "comma-separated tree kinds");
  bias->add_option("--sizes", sizes_arg, "comma-separated tip counts");
  bias->add_option("--replicates", replicates, "replicates per cell");
  bias->add_option("--depth", depth, "tree depth");
  bias->add_option("--threads", threads,
                   "worker threads (default PHYLOSDE_THREADS)");
  add_common(bias, false);

  CLI11_PARSE(app, argc, argv);

  try {
    if (fit->parsed())
      return cmd_fit(tree_arg, data_arg, kind_arg, log10_arg, common);
    if (sim->parsed())
      return cmd_simulate(tree_arg, kind_arg, alpha_y, alpha_theta, sigma_y,
                          sigma_theta, tau, b0, b1, x0, y0, sigma_x, alpha_x,
                          dt, paths_duration, birth, death, common);
    if (cmp->parsed())
      return cmd_compare(tree_arg, data_arg, kinds_arg, log10_arg,
                         conventional, common);
    if (bias->parsed())
      return cmd_bias_study(config_path, replicates, kinds_arg, trees_arg,
                            sizes_arg, depth, threads, common);
  } catch (const NumericalError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  }
  return kExitInput;
}
