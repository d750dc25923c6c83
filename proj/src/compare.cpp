#include "phylosde/compare.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "phylosde/errors.hpp"
#include "phylosde/parallel.hpp"
#include "phylosde/rng.hpp"

namespace phylosde {

double aicc(double log_likelihood, int k, int n, bool conventional) {
  if (k < 1 || n < 1) throw std::invalid_argument("k and n must be positive");
  if (conventional) {
    if (n - k - 1 <= 0)
      throw std::invalid_argument("aicc needs n > k + 1");
    return -2.0 * log_likelihood + 2.0 * k +
           2.0 * k * (k + 1.0) / (n - k - 1.0);
  }
  if (n - k + 1 <= 0) throw std::invalid_argument("aicc needs n > k - 1");
  return -2.0 * log_likelihood + 2.0 * static_cast<double>(n) * k /
                                     (n - k + 1.0);
}

std::vector<double> akaike_weights(const std::vector<double>& scores) {
  if (scores.empty()) return {};
  const double lowest = *std::min_element(scores.begin(), scores.end());
  std::vector<double> out(scores.size());
  double total = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    out[i] = std::exp(-0.5 * (scores[i] - lowest));
    total += out[i];
  }
  for (double& w : out) w /= total;
  return out;
}

ComparisonReport compare_models(const PhyloTree& tree, const FitData& data,
                                const std::vector<ModelKind>& kinds,
                                const FitConfig& config,
                                bool conventional_aicc) {
  if (kinds.empty()) throw std::invalid_argument("no model kinds given");
  ComparisonReport report;
  report.entries.resize(kinds.size());

  for (std::size_t i = 0; i < kinds.size(); ++i) {
    ModelComparison& entry = report.entries[i];
    entry.kind = kinds[i];
    try {
      entry.fit = fit_model(tree, data, kinds[i], config);
      entry.aicc_value = aicc(entry.fit.log_likelihood, entry.fit.k,
                              entry.fit.n, conventional_aicc);
      entry.ok = true;
    } catch (const std::exception& e) {
      entry.ok = false;
      entry.error = e.what();
      report.any_failed = true;
    }
  }

  // weights over the kinds that produced a score
  std::vector<double> scores;
  std::vector<std::size_t> which;
  for (std::size_t i = 0; i < report.entries.size(); ++i)
    if (report.entries[i].ok) {
      scores.push_back(report.entries[i].aicc_value);
      which.push_back(i);
    }
  if (scores.empty()) return report;

  const double lowest = *std::min_element(scores.begin(), scores.end());
  const std::vector<double> weights = akaike_weights(scores);
  for (std::size_t j = 0; j < which.size(); ++j) {
    ModelComparison& entry = report.entries[which[j]];
    entry.delta_aicc = entry.aicc_value - lowest;
    entry.weight = weights[j];
    if (entry.delta_aicc == 0.0 && report.selected < 0)
      report.selected = static_cast<int>(which[j]);
  }
  return report;
}

// ---------------------------------------------------------------------------
// bias study

ModelParams bias_truth(ModelKind kind, const BiasStudyConfig& config) {
  ModelParams p;
  p.kind = kind;
  const double sigma_theta = std::abs(config.b1) * config.sigma_x;
  switch (kind) {
    case ModelKind::OUBM:
      p.alpha_y = 0.05;
      p.sigma_y0 = 0.10;
      p.sigma_theta = sigma_theta;
      break;
    case ModelKind::OUOU:
      p.alpha_y = 0.05;
      p.alpha_theta = 0.12;
      p.sigma_y0 = 0.10;
      p.sigma_theta = sigma_theta;
      break;
    case ModelKind::OUBMBM:
      p.alpha_y = 0.05;
      p.tau = 0.30;
      p.sigma_theta = sigma_theta;
      break;
    case ModelKind::OUOUBM:
      p.alpha_y = 0.05;
      p.alpha_theta = 0.12;
      p.tau = 0.30;
      p.sigma_theta = sigma_theta;
      break;
    default:
      throw std::invalid_argument(
          "bias study covers the kinds with a moving optimum");
  }
  p.validate();
  return p;
}

namespace {

// which structural estimates a kind reports, with their true values
std::vector<std::pair<std::string, double>> tracked_parameters(
    ModelKind kind, const ModelParams& truth, const BiasStudyConfig& config) {
  std::vector<std::pair<std::string, double>> out;
  out.emplace_back("alpha_y", truth.alpha_y);
  if (has_reverting_optimum(kind))
    out.emplace_back("alpha_theta", truth.alpha_theta);
  if (has_moving_rate(kind))
    out.emplace_back("tau", truth.tau);
  else
    out.emplace_back("sigma_y", truth.sigma_y0);
  out.emplace_back("b0", config.b0);
  out.emplace_back("b1", config.b1);
  return out;
}

double tracked_estimate(const std::string& name, const FitResult& fit) {
  if (name == "alpha_y") return fit.params.alpha_y;
  if (name == "alpha_theta") return fit.params.alpha_theta;
  if (name == "tau") return fit.params.tau;
  if (name == "sigma_y") return fit.params.sigma_y0;
  if (name == "b0") return fit.coefficients[0];
  return fit.coefficients[1];
}

// interpolated quartiles over a sorted copy
std::array<double, 3> quartiles(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  auto at = [&](double q) {
    const double pos = q * (v.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(pos);
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    const double frac = pos - lo;
    return v[lo] * (1.0 - frac) + v[hi] * frac;
  };
  return {at(0.25), at(0.5), at(0.75)};
}

}  // namespace

BiasStudyResult bias_study(
    const BiasStudyConfig& config, const std::set<BiasCell>& done,
    const std::function<void(const std::vector<BiasRow>&)>& sink) {
  if (config.replicates < 1)
    throw std::invalid_argument("need at least one replicate");

  std::vector<BiasCell> cells;
  for (ModelKind kind : config.kinds)
    for (TreeKind tk : config.tree_kinds)
      for (int n : config.sample_sizes)
        for (int rep = 0; rep < config.replicates; ++rep) {
          const BiasCell cell{kind, tk, n, rep};
          if (!done.count(cell)) cells.push_back(cell);
        }

  std::vector<std::vector<BiasRow>> per_cell(cells.size());

  parallel_for(
      cells.size(),
      [&](std::size_t idx) {
        const BiasCell& cell = cells[idx];
        const ModelParams truth = bias_truth(cell.kind, config);

        // one deterministic seed per cell, independent of scheduling
        const std::uint64_t cell_seed =
            mix64(config.seed ^ mix64((static_cast<std::uint64_t>(cell.kind)
                                       << 48) ^
                                      (static_cast<std::uint64_t>(cell.tree_kind)
                                       << 40) ^
                                      (static_cast<std::uint64_t>(cell.n_tips)
                                       << 20) ^
                                      static_cast<std::uint64_t>(
                                          cell.replicate)));

        std::vector<BiasRow>& rows = per_cell[idx];
        const auto tracked = tracked_parameters(cell.kind, truth, config);
        bool ok = false;
        FitResult fit;
        try {
          const PhyloTree tree = generate_tree(cell.tree_kind, cell.n_tips,
                                               config.tree_depth, cell_seed);
          SimConfig sim;
          sim.seed = cell_seed;
          sim.b0 = config.b0;
          sim.b1 = config.b1;
          sim.sigma_x = config.sigma_x;
          sim.dt = config.dt;
          const TipDataset data = simulate_tips(tree, truth, sim);
          FitData fd{data.species, data.x, data.y};
          FitConfig fc = config.fit;
          fc.seed = cell_seed;
          fit = fit_model(tree, fd, cell.kind, fc);
          ok = true;
        } catch (const std::exception&) {
          ok = false;  // recorded per row; the study keeps going
        }
        for (const auto& [name, value] : tracked) {
          BiasRow row;
          row.cell = cell;
          row.parameter = name;
          row.truth = value;
          row.estimate = ok ? tracked_estimate(name, fit)
                            : std::numeric_limits<double>::quiet_NaN();
          row.ok = ok;
          rows.push_back(row);
        }
      },
      config.threads);

  BiasStudyResult result;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (sink) sink(per_cell[i]);
    for (auto& row : per_cell[i]) result.rows.push_back(std::move(row));
  }
  result.summaries = summarize_bias_rows(result.rows);
  return result;
}

std::vector<BiasSummary> summarize_bias_rows(const std::vector<BiasRow>& rows) {
  // group keys in first-seen order so output is stable
  struct Group {
    ModelKind kind;
    int n_tips;
    std::string parameter;
    double truth;
    std::vector<double> values;
  };
  std::vector<Group> groups;
  for (const BiasRow& row : rows) {
    if (!row.ok) continue;
    Group* g = nullptr;
    for (auto& cand : groups)
      if (cand.kind == row.cell.kind && cand.n_tips == row.cell.n_tips &&
          cand.parameter == row.parameter) {
        g = &cand;
        break;
      }
    if (!g) {
      groups.push_back(
          {row.cell.kind, row.cell.n_tips, row.parameter, row.truth, {}});
      g = &groups.back();
    }
    g->values.push_back(row.estimate);
  }
  std::vector<BiasSummary> out;
  for (auto& g : groups) {
    BiasSummary s;
    s.kind = g.kind;
    s.n_tips = g.n_tips;
    s.parameter = g.parameter;
    s.truth = g.truth;
    s.count = static_cast<int>(g.values.size());
    const auto q = quartiles(std::move(g.values));
    s.q1 = q[0];
    s.median = q[1];
    s.q3 = q[2];
    out.push_back(s);
  }
  return out;
}

}  // namespace phylosde
