#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "phylosde/fit.hpp"
#include "phylosde/simulate.hpp"
#include "phylosde/tree.hpp"

namespace phylosde {

// small-sample corrected AIC. The default penalty is 2nk/(n - k + 1); the
// conventional flag switches to 2k + 2k(k+1)/(n - k - 1).
double aicc(double log_likelihood, int k, int n, bool conventional = false);

// normalized exp(-delta/2) over the given scores
std::vector<double> akaike_weights(const std::vector<double>& scores);

struct ModelComparison {
  ModelKind kind = ModelKind::BM;
  bool ok = false;    // fit produced a usable likelihood
  std::string error;  // reason when not ok
  FitResult fit;
  double aicc_value = 0.0;
  double delta_aicc = 0.0;
  double weight = 0.0;
};

struct ComparisonReport {
  std::vector<ModelComparison> entries;  // in the order requested
  int selected = -1;                     // index of the lowest AICc entry
  bool any_failed = false;
};

ComparisonReport compare_models(const PhyloTree& tree, const FitData& data,
                                const std::vector<ModelKind>& kinds,
                                const FitConfig& config = {},
                                bool conventional_aicc = false);

// one simulate-and-refit cell of the estimator bias study
struct BiasCell {
  ModelKind kind;
  TreeKind tree_kind;
  int n_tips;
  int replicate;

  bool operator<(const BiasCell& o) const {
    return std::tie(kind, tree_kind, n_tips, replicate) <
           std::tie(o.kind, o.tree_kind, o.n_tips, o.replicate);
  }
};

struct BiasRow {
  BiasCell cell;
  std::string parameter;
  double truth = 0.0;
  double estimate = 0.0;
  bool ok = false;
};

struct BiasSummary {
  ModelKind kind;
  int n_tips;
  std::string parameter;
  double truth = 0.0;
  int count = 0;
  double q1 = 0.0, median = 0.0, q3 = 0.0;
};

struct BiasStudyConfig {
  std::vector<ModelKind> kinds{ModelKind::OUBM, ModelKind::OUOU,
                               ModelKind::OUBMBM, ModelKind::OUOUBM};
  std::vector<TreeKind> tree_kinds{TreeKind::Star, TreeKind::Balanced,
                                   TreeKind::Pectinate, TreeKind::BirthDeath};
  std::vector<int> sample_sizes{16, 32, 64, 128};
  int replicates = 50;
  double tree_depth = 100.0;
  double b0 = 1.20;
  double b1 = 0.72;
  double sigma_x = 1.0;
  double dt = std::numeric_limits<double>::quiet_NaN();  // auto per tree
  std::uint64_t seed = 0;
  int threads = 0;  // 0 reads PHYLOSDE_THREADS, then hardware
  FitConfig fit;
};

// true structural parameters a kind is simulated with in the bias study
ModelParams bias_truth(ModelKind kind, const BiasStudyConfig& config);

struct BiasStudyResult {
  std::vector<BiasRow> rows;
  std::vector<BiasSummary> summaries;
};

// quartile summaries per kind, size and parameter, topologies pooled;
// usable on merged rows when a resumed run is stitched back together
std::vector<BiasSummary> summarize_bias_rows(const std::vector<BiasRow>& rows);

// simulate replicates under each kind and refit the same kind. Cells in
// `done` are skipped (resume support); each finished cell's rows go through
// `sink` as soon as they exist, in deterministic cell order.
BiasStudyResult bias_study(
    const BiasStudyConfig& config, const std::set<BiasCell>& done = {},
    const std::function<void(const std::vector<BiasRow>&)>& sink = {});

}  // namespace phylosde
