#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "phylosde/errors.hpp"

namespace phylosde {

struct TreeNode {
  int parent = -1;       // -1 marks the root
  double length = 0.0;   // branch length to the parent; root stem if any
  std::string label;     // tips must carry one, internal nodes may
  std::vector<int> children;
};

// rooted tree with branch lengths; node 0 need not be the root
class PhyloTree {
public:
  explicit PhyloTree(std::vector<TreeNode> nodes);

  int node_count() const { return static_cast<int>(nodes_.size()); }
  int tip_count() const { return static_cast<int>(tip_nodes_.size()); }
  int root() const { return root_; }
  const TreeNode& node(int i) const { return nodes_[i]; }
  bool is_tip(int i) const { return nodes_[i].children.empty(); }

  // tips in the order they appear in the node list (left to right for
  // parsed newick); all per-tip vectors downstream follow this order
  const std::vector<int>& tip_nodes() const { return tip_nodes_; }
  const std::vector<std::string>& tip_labels() const { return tip_labels_; }
  int tip_node(int tip) const { return tip_nodes_[tip]; }
  int tip_index(const std::string& label) const;  // -1 if absent

  // time from the root; the root stem, if present, is not counted
  double depth(int node) const { return depths_[node]; }
  double tip_depth(int tip) const { return depths_[tip_nodes_[tip]]; }

  int mrca_node(int node_a, int node_b) const;

private:
  std::vector<TreeNode> nodes_;
  std::vector<int> tip_nodes_;
  std::vector<std::string> tip_labels_;
  std::vector<double> depths_;
  std::vector<int> levels_;  // edges from the root
  int root_ = -1;

  void validate_and_index();
};

// divergence geometry for a pair of tips: shared time from the root to the
// ancestor, the two post-divergence spans, and their sum
struct PairTimes {
  double shared;
  double post_i;
  double post_j;
  double divergence;
};

// pairwise shared path lengths, with the tip order the rows refer to
struct SharedPathMatrix {
  Eigen::MatrixXd times;
  std::vector<std::string> tip_order;
};

PhyloTree parse_newick(std::string_view text);
std::string serialize_newick(const PhyloTree& tree);

SharedPathMatrix shared_path_matrix(const PhyloTree& tree);
PairTimes pair_times(const PhyloTree& tree, int tip_i, int tip_j);

enum class TreeKind { Star, Balanced, Pectinate, BirthDeath };

TreeKind tree_kind_from_string(const std::string& name);
std::string to_string(TreeKind kind);

struct TreeGenOptions {
  double birth_rate = 1.0;
  double death_rate = 0.0;
};

// n_tips >= 2; depth > 0; balanced requires n_tips to be a power of two.
// All generators are deterministic in (n_tips, depth, seed, options);
// star/balanced/pectinate ignore the seed.
PhyloTree generate_tree(TreeKind kind, int n_tips, double depth,
                        std::uint64_t seed, const TreeGenOptions& opts = {});

}  // namespace phylosde
