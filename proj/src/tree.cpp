#include "phylosde/tree.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <unordered_map>
#include <unordered_set>

#include "phylosde/rng.hpp"

namespace phylosde {

PhyloTree::PhyloTree(std::vector<TreeNode> nodes) : nodes_(std::move(nodes)) {
  validate_and_index();
}

void PhyloTree::validate_and_index() {
  const int n = static_cast<int>(nodes_.size());
  if (n == 0) throw std::invalid_argument("tree has no nodes");

  root_ = -1;
  for (int i = 0; i < n; ++i) {
    auto& nd = nodes_[i];
    nd.children.clear();
    if (nd.parent == -1) {
      if (root_ != -1) throw std::invalid_argument("tree has more than one root");
      root_ = i;
    } else if (nd.parent < 0 || nd.parent >= n) {
      throw std::invalid_argument("node " + std::to_string(i) +
                                  " has out-of-range parent");
    }
    if (!std::isfinite(nd.length) || nd.length < 0.0)
      throw std::invalid_argument("node " + std::to_string(i) +
                                  " has negative or non-finite branch length");
  }
  if (root_ == -1) throw std::invalid_argument("tree has no root");

  for (int i = 0; i < n; ++i)
    if (i != root_) nodes_[nodes_[i].parent].children.push_back(i);

  // depths and levels by walking from the root; also detects cycles and
  // nodes detached from the root
  depths_.assign(n, 0.0);
  levels_.assign(n, -1);
  levels_[root_] = 0;
  depths_[root_] = 0.0;
  std::vector<int> stack{root_};
  int visited = 0;
  while (!stack.empty()) {
    const int v = stack.back();
    stack.pop_back();
    ++visited;
    for (int c : nodes_[v].children) {
      levels_[c] = levels_[v] + 1;
      depths_[c] = depths_[v] + nodes_[c].length;
      stack.push_back(c);
    }
  }
  if (visited != n)
    throw std::invalid_argument("tree has nodes unreachable from the root");

  tip_nodes_.clear();
  tip_labels_.clear();
  std::unordered_set<std::string> seen;
  for (int i = 0; i < n; ++i) {
    if (!nodes_[i].children.empty()) continue;
    if (nodes_[i].label.empty())
      throw std::invalid_argument("tip node " + std::to_string(i) +
                                  " has no label");
    if (!seen.insert(nodes_[i].label).second)
      throw std::invalid_argument("duplicate tip label '" + nodes_[i].label +
                                  "'");
    tip_nodes_.push_back(i);
    tip_labels_.push_back(nodes_[i].label);
  }
}

int PhyloTree::tip_index(const std::string& label) const {
  for (int i = 0; i < tip_count(); ++i)
    if (tip_labels_[i] == label) return i;
  return -1;
}

int PhyloTree::mrca_node(int a, int b) const {
  while (a != b) {
    if (levels_[a] >= levels_[b])
      a = nodes_[a].parent;
    else
      b = nodes_[b].parent;
  }
  return a;
}

// ---------------------------------------------------------------------------
// newick

namespace {

class NewickParser {
public:
  explicit NewickParser(std::string_view text) : text_(text) {}

  std::vector<TreeNode> parse() {
    skip_space();
    const int root = parse_clade(-1);
    skip_space();
    // optional root stem length
    if (peek() == ':') {
      ++pos_;
      nodes_[root].length = parse_length();
    }
    skip_space();
    if (peek() != ';') fail("expected ';'");
    ++pos_;
    skip_space();
    if (pos_ != text_.size()) fail("trailing characters after ';'");
    return std::move(nodes_);
  }

private:
  std::string_view text_;
  std::size_t pos_ = 0;
  std::vector<TreeNode> nodes_;

  [[noreturn]] void fail(const std::string& msg) const {
    throw ParseError("newick: " + msg, pos_);
  }

  char peek() const { return pos_ < text_.size() ? text_[pos_] : '\0'; }

  void skip_space() {
    while (pos_ < text_.size()) {
      const char c = text_[pos_];
      if (c == '[') {  // bracket comment
        const auto close = text_.find(']', pos_);
        if (close == std::string_view::npos) fail("unterminated comment");
        pos_ = close + 1;
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  static bool is_label_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' ||
           c == '.' || c == '-';
  }

  std::string parse_label() {
    skip_space();
    if (peek() == '\'') {
      ++pos_;
      std::string out;
      while (true) {
        if (pos_ >= text_.size()) fail("unterminated quoted label");
        const char c = text_[pos_++];
        if (c == '\'') {
          if (peek() == '\'') {  // doubled quote escapes a quote
            out.push_back('\'');
            ++pos_;
          } else {
            break;
          }
        } else {
          out.push_back(c);
        }
      }
      return out;
    }
    std::string out;
    while (pos_ < text_.size() && is_label_char(text_[pos_]))
      out.push_back(text_[pos_++]);
    return out;
  }

  double parse_length() {
    skip_space();
    const char* begin = text_.data() + pos_;
    const char* end = text_.data() + text_.size();
    double value = 0.0;
    const auto res = std::from_chars(begin, end, value);
    if (res.ec != std::errc()) fail("expected branch length");
    pos_ += static_cast<std::size_t>(res.ptr - begin);
    if (!std::isfinite(value)) fail("non-finite branch length");
    if (value < 0.0) fail("negative branch length");
    return value;
  }

  // returns the node index; children record their own lengths
  int parse_clade(int parent) {
    skip_space();
    const int index = static_cast<int>(nodes_.size());
    nodes_.emplace_back();
    nodes_[index].parent = parent;
    if (peek() == '(') {
      ++pos_;
      while (true) {
        const int child = parse_clade(index);
        skip_space();
        if (peek() != ':') fail("expected ':' and a branch length");
        ++pos_;
        nodes_[child].length = parse_length();
        skip_space();
        if (peek() == ',') {
          ++pos_;
          continue;
        }
        if (peek() == ')') {
          ++pos_;
          break;
        }
        fail("expected ',' or ')'");
      }
      nodes_[index].label = parse_label();  // optional internal label
    } else {
      const std::size_t at = pos_;
      nodes_[index].label = parse_label();
      if (nodes_[index].label.empty())
        throw ParseError("newick: expected a tip label", at);
    }
    return index;
  }
};

void write_double(std::string& out, double v) {
  char buf[40];
  const auto res =
      std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 12);
  out.append(buf, res.ptr);
}

void write_label(std::string& out, const std::string& label) {
  const bool plain = !label.empty() &&
                     std::all_of(label.begin(), label.end(), [](char c) {
                       return std::isalnum(static_cast<unsigned char>(c)) ||
                              c == '_' || c == '.' || c == '-';
                     });
  if (plain) {
    out += label;
    return;
  }
  out.push_back('\'');
  for (char c : label) {
    out.push_back(c);
    if (c == '\'') out.push_back('\'');
  }
  out.push_back('\'');
}

void write_clade(std::string& out, const PhyloTree& tree, int node) {
  const TreeNode& nd = tree.node(node);
  if (!nd.children.empty()) {
    out.push_back('(');
    for (std::size_t i = 0; i < nd.children.size(); ++i) {
      if (i) out.push_back(',');
      const int child = nd.children[i];
      write_clade(out, tree, child);
      out.push_back(':');
      write_double(out, tree.node(child).length);
    }
    out.push_back(')');
    if (!nd.label.empty()) write_label(out, nd.label);
  } else {
    write_label(out, nd.label);
  }
}

}  // namespace

PhyloTree parse_newick(std::string_view text) {
  return PhyloTree(NewickParser(text).parse());
}

std::string serialize_newick(const PhyloTree& tree) {
  std::string out;
  write_clade(out, tree, tree.root());
  if (tree.node(tree.root()).length > 0.0) {
    out.push_back(':');
    write_double(out, tree.node(tree.root()).length);
  }
  out.push_back(';');
  return out;
}

// ---------------------------------------------------------------------------
// path geometry

SharedPathMatrix shared_path_matrix(const PhyloTree& tree) {
  const int n = tree.tip_count();
  SharedPathMatrix out;
  out.times.setZero(n, n);
  out.tip_order = tree.tip_labels();

  // tip ordinal lookup by node index
  std::vector<int> ordinal(tree.node_count(), -1);
  for (int t = 0; t < n; ++t) ordinal[tree.tip_node(t)] = t;

  // post-order accumulation: tips below each child subtree meet at this
  // node, so every cross pair shares exactly depth(node)
  std::vector<std::vector<int>> below(tree.node_count());
  std::vector<int> order;
  order.reserve(tree.node_count());
  std::vector<int> stack{tree.root()};
  while (!stack.empty()) {
    const int v = stack.back();
    stack.pop_back();
    order.push_back(v);
    for (int c : tree.node(v).children) stack.push_back(c);
  }
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const int v = *it;
    if (tree.is_tip(v)) {
      const int t = ordinal[v];
      out.times(t, t) = tree.depth(v);
      below[v] = {t};
      continue;
    }
    std::vector<int> merged;
    const double d = tree.depth(v);
    for (int c : tree.node(v).children) {
      for (int a : below[c])
        for (int b : merged) {
          out.times(a, b) = d;
          out.times(b, a) = d;
        }
      merged.insert(merged.end(), below[c].begin(), below[c].end());
      below[c].clear();
      below[c].shrink_to_fit();
    }
    below[v] = std::move(merged);
  }
  return out;
}

PairTimes pair_times(const PhyloTree& tree, int tip_i, int tip_j) {
  const int n = tree.tip_count();
  if (tip_i < 0 || tip_i >= n || tip_j < 0 || tip_j >= n)
    throw std::invalid_argument("tip index out of range");
  const int a = tree.tip_node(tip_i);
  const int b = tree.tip_node(tip_j);
  const int anc = tree.mrca_node(a, b);
  PairTimes out;
  out.shared = tree.depth(anc);
  out.post_i = tree.depth(a) - out.shared;
  out.post_j = tree.depth(b) - out.shared;
  out.divergence = out.post_i + out.post_j;
  return out;
}

// ---------------------------------------------------------------------------
// generators

TreeKind tree_kind_from_string(const std::string& name) {
  if (name == "star") return TreeKind::Star;
  if (name == "balanced") return TreeKind::Balanced;
  if (name == "pectinate") return TreeKind::Pectinate;
  if (name == "birth_death" || name == "birth-death")
    return TreeKind::BirthDeath;
  throw std::invalid_argument("unknown tree kind '" + name + "'");
}

std::string to_string(TreeKind kind) {
  switch (kind) {
    case TreeKind::Star: return "star";
    case TreeKind::Balanced: return "balanced";
    case TreeKind::Pectinate: return "pectinate";
    case TreeKind::BirthDeath: return "birth_death";
  }
  return "?";
}

namespace {

std::string tip_name(int i) { return "t" + std::to_string(i + 1); }

PhyloTree make_star(int n, double depth) {
  std::vector<TreeNode> nodes(n + 1);
  for (int i = 0; i < n; ++i) {
    nodes[i + 1].parent = 0;
    nodes[i + 1].length = depth;
    nodes[i + 1].label = tip_name(i);
  }
  return PhyloTree(std::move(nodes));
}

PhyloTree make_balanced(int n, double depth) {
  int levels = 0;
  for (int m = n; m > 1; m >>= 1) ++levels;
  if ((1 << levels) != n)
    throw std::invalid_argument("balanced tree needs a power-of-two tip count");
  const double step = depth / levels;
  std::vector<TreeNode> nodes(1);
  std::vector<int> frontier{0};
  for (int level = 0; level < levels; ++level) {
    std::vector<int> next;
    next.reserve(frontier.size() * 2);
    for (int p : frontier)
      for (int s = 0; s < 2; ++s) {
        const int idx = static_cast<int>(nodes.size());
        nodes.emplace_back();
        nodes[idx].parent = p;
        nodes[idx].length = step;
        next.push_back(idx);
      }
    frontier = std::move(next);
  }
  for (std::size_t i = 0; i < frontier.size(); ++i)
    nodes[frontier[i]].label = tip_name(static_cast<int>(i));
  return PhyloTree(std::move(nodes));
}

PhyloTree make_pectinate(int n, double depth) {
  // ladder: each internal node splits off one tip, splits evenly spaced
  const double step = depth / (n - 1);
  std::vector<TreeNode> nodes(1);
  int spine = 0;
  for (int i = 0; i < n - 1; ++i) {
    const int tip = static_cast<int>(nodes.size());
    nodes.emplace_back();
    nodes[tip].parent = spine;
    nodes[tip].length = depth - i * step;
    nodes[tip].label = tip_name(i);
    if (i < n - 2) {
      const int next = static_cast<int>(nodes.size());
      nodes.emplace_back();
      nodes[next].parent = spine;
      nodes[next].length = step;
      spine = next;
    } else {
      const int last = static_cast<int>(nodes.size());
      nodes.emplace_back();
      nodes[last].parent = spine;
      nodes[last].length = step;
      nodes[last].label = tip_name(n - 1);
    }
  }
  return PhyloTree(std::move(nodes));
}

struct BdLineage {
  int parent = -1;      // index into the event node list
  double born = 0.0;    // time the lineage appeared
  double died = -1.0;   // <0 while alive
  int left = -1, right = -1;
};

PhyloTree make_birth_death(int n, double depth, std::uint64_t seed,
                           const TreeGenOptions& opts) {
  if (opts.birth_rate <= 0.0 || opts.death_rate < 0.0)
    throw std::invalid_argument("birth rate must be positive and death rate non-negative");
  Philox rng(mix64(seed), mix64(0x7472656564726177ULL));
  const double total_rate = opts.birth_rate + opts.death_rate;
  const double p_birth = opts.birth_rate / total_rate;

  for (int attempt = 0; attempt < 1000; ++attempt) {
    // crown start: the root split happens at time zero
    std::vector<BdLineage> lin(3);
    lin[1].parent = 0;
    lin[2].parent = 0;
    std::vector<int> alive{1, 2};
    double now = 0.0;
    double sample_time = -1.0;

    while (true) {
      if (static_cast<int>(alive.size()) == n) {
        // sample uniformly inside the waiting interval before the next event
        const double wait =
            -std::log(rng.next_uniform()) / (total_rate * alive.size());
        sample_time = now + rng.next_uniform() * wait;
        break;
      }
      if (alive.empty()) break;  // clade died, try again
      const double wait =
          -std::log(rng.next_uniform()) / (total_rate * alive.size());
      now += wait;
      const std::size_t pick = static_cast<std::size_t>(
          rng.next_uniform() * static_cast<double>(alive.size()));
      const int who = alive[std::min(pick, alive.size() - 1)];
      if (rng.next_uniform() <= p_birth) {
        const int a = static_cast<int>(lin.size());
        lin.push_back({who, now, -1.0, -1, -1});
        const int b = static_cast<int>(lin.size());
        lin.push_back({who, now, -1.0, -1, -1});
        lin[who].died = now;
        lin[who].left = a;
        lin[who].right = b;
        alive[std::min(pick, alive.size() - 1)] = a;
        alive.push_back(b);
      } else {
        lin[who].died = now;
        alive[std::min(pick, alive.size() - 1)] = alive.back();
        alive.pop_back();
      }
    }
    if (sample_time <= 0.0) continue;

    // keep lineages ancestral to a survivor, collapse single-child chains
    const double scale = depth / sample_time;
    std::vector<char> keep(lin.size(), 0);
    for (std::size_t i = 1; i < lin.size(); ++i) {
      if (lin[i].died >= 0.0) continue;  // alive at the sample time
      for (int v = static_cast<int>(i); v != -1 && !keep[v]; v = lin[v].parent)
        keep[v] = 1;
    }
    if (!keep[1] || !keep[2]) continue;  // survivors all on one root side

    std::vector<TreeNode> nodes(1);
    int next_tip = 0;
    // walk from each root child downward, skipping collapsed nodes
    struct Item {
      int lineage;
      int parent_node;
      double span_start;
    };
    std::vector<Item> work{{1, 0, 0.0}, {2, 0, 0.0}};
    while (!work.empty()) {
      Item it = work.back();
      work.pop_back();
      int v = it.lineage;
      // extend through single-kept-child splits
      while (lin[v].died >= 0.0) {
        const int l = lin[v].left, r = lin[v].right;
        const bool kl = l != -1 && keep[l], kr = r != -1 && keep[r];
        if (kl && kr) break;
        if (kl)
          v = l;
        else if (kr)
          v = r;
        else
          break;  // unreachable for kept lineages
      }
      const double end = lin[v].died >= 0.0 ? lin[v].died : sample_time;
      const int idx = static_cast<int>(nodes.size());
      nodes.emplace_back();
      nodes[idx].parent = it.parent_node;
      nodes[idx].length = (end - it.span_start) * scale;
      if (lin[v].died >= 0.0) {
        work.push_back({lin[v].left, idx, end});
        work.push_back({lin[v].right, idx, end});
      } else {
        nodes[idx].label = tip_name(next_tip++);
      }
    }
    if (next_tip != n) continue;
    return PhyloTree(std::move(nodes));
  }
  throw NumericalError("birth-death sampling failed to reach the tip count");
}

}  // namespace

PhyloTree generate_tree(TreeKind kind, int n_tips, double depth,
                        std::uint64_t seed, const TreeGenOptions& opts) {
  if (n_tips < 2) throw std::invalid_argument("need at least two tips");
  if (!(depth > 0.0) || !std::isfinite(depth))
    throw std::invalid_argument("depth must be positive and finite");
  switch (kind) {
    case TreeKind::Star: return make_star(n_tips, depth);
    case TreeKind::Balanced: return make_balanced(n_tips, depth);
    case TreeKind::Pectinate: return make_pectinate(n_tips, depth);
    case TreeKind::BirthDeath:
      return make_birth_death(n_tips, depth, seed, opts);
  }
  throw std::invalid_argument("unknown tree kind");
}

}  // namespace phylosde
