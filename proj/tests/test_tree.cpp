#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <string>
#include <vector>

#include "phylosde/tree.hpp"

using namespace phylosde;

TEST_SUITE_BEGIN("tree");

namespace {

// independent LCA: climb from a collecting ancestors, then climb from b
int brute_force_mrca(const PhyloTree& tree, int a, int b) {
  std::set<int> seen;
  for (int node = a; node != -1; node = tree.node(node).parent)
    seen.insert(node);
  for (int node = b; node != -1; node = tree.node(node).parent)
    if (seen.count(node)) return node;
  return -1;
}

}  // namespace

TEST_CASE("parse a small tree") {
  const PhyloTree tree = parse_newick("((a:1,b:1):1,c:2);");
  CHECK(tree.node_count() == 5);
  CHECK(tree.tip_count() == 3);
  CHECK(tree.tip_labels() == std::vector<std::string>{"a", "b", "c"});
  CHECK(tree.tip_depth(0) == doctest::Approx(2.0));
  CHECK(tree.tip_depth(1) == doctest::Approx(2.0));
  CHECK(tree.tip_depth(2) == doctest::Approx(2.0));
  CHECK(tree.tip_index("b") == 1);
  CHECK(tree.tip_index("zebra") == -1);
}

TEST_CASE("pair times split shared and private history") {
  const PhyloTree tree = parse_newick("((a:1,b:1):1,c:2);");
  const PairTimes ab = pair_times(tree, 0, 1);
  CHECK(ab.shared == doctest::Approx(1.0));
  CHECK(ab.post_i == doctest::Approx(1.0));
  CHECK(ab.post_j == doctest::Approx(1.0));
  CHECK(ab.divergence == doctest::Approx(2.0));
  const PairTimes ac = pair_times(tree, 0, 2);
  CHECK(ac.shared == doctest::Approx(0.0));
  CHECK(ac.post_i == doctest::Approx(2.0));
  CHECK(ac.post_j == doctest::Approx(2.0));
}

TEST_CASE("shared path matrix on a hand tree") {
  const PhyloTree tree = parse_newick("((a:1,b:1):1,c:2);");
  const SharedPathMatrix g = shared_path_matrix(tree);
  CHECK(g.tip_order == std::vector<std::string>{"a", "b", "c"});
  CHECK(g.times(0, 0) == doctest::Approx(2.0));
  CHECK(g.times(0, 1) == doctest::Approx(1.0));
  CHECK(g.times(1, 0) == doctest::Approx(1.0));
  CHECK(g.times(0, 2) == doctest::Approx(0.0));
  CHECK(g.times(2, 2) == doctest::Approx(2.0));
}

TEST_CASE("non-ultrametric and stemmed trees parse") {
  const PhyloTree tree = parse_newick("((a:1.5,b:0.5):1,c:4):7;");
  CHECK(tree.tip_depth(0) == doctest::Approx(2.5));
  CHECK(tree.tip_depth(1) == doctest::Approx(1.5));
  CHECK(tree.tip_depth(2) == doctest::Approx(4.0));
}

TEST_CASE("quoted labels and comments") {
  const PhyloTree tree =
      parse_newick("[note] ('sp one':1, 'it''s':1) [trailing];");
  CHECK(tree.tip_labels() == std::vector<std::string>{"sp one", "it's"});
  // quoted labels survive a round trip
  const PhyloTree again = parse_newick(serialize_newick(tree));
  CHECK(again.tip_labels() == tree.tip_labels());
}

TEST_CASE("zero length branches are fine") {
  const PhyloTree tree = parse_newick("((a:0,b:0):1,c:1);");
  CHECK(tree.tip_depth(0) == doctest::Approx(1.0));
  CHECK(tree.tip_depth(2) == doctest::Approx(1.0));
}

TEST_CASE("parse errors carry an offset") {
  CHECK_THROWS_AS(parse_newick("((a:1,b:1):1,c:2)"), ParseError);   // no ;
  CHECK_THROWS_AS(parse_newick("((a:1,b):1,c:2);"), ParseError);    // no length
  CHECK_THROWS_AS(parse_newick("((a:1,b:1:1,c:2);"), ParseError);   // unbalanced
  CHECK_THROWS_AS(parse_newick("((a:1,b:-1):1,c:2);"), ParseError); // negative
  // duplicate labels surface from tree validation, not the parser
  CHECK_THROWS_AS(parse_newick("(a:1,a:1);"), std::invalid_argument);
  CHECK_THROWS_AS(parse_newick("(:1,b:1);"), ParseError);           // unlabeled
  CHECK_THROWS_AS(parse_newick("(a:1,b:1); junk"), ParseError);     // trailing
  try {
    parse_newick("((a:1,b):1,c:2);");
    FAIL("should have thrown");
  } catch (const ParseError& e) {
    CHECK(e.offset() > 0);
    CHECK(std::string(e.what()).find("offset") != std::string::npos);
  }
}

TEST_CASE("serialize then parse is an isomorphism") {
  const std::string source = "((a:1.25,b:0.75):0.5,(c:1,d:1.5):2);";
  const PhyloTree tree = parse_newick(source);
  const std::string text = serialize_newick(tree);
  const PhyloTree again = parse_newick(text);
  CHECK(again.tip_labels() == tree.tip_labels());
  const SharedPathMatrix ga = shared_path_matrix(tree);
  const SharedPathMatrix gb = shared_path_matrix(again);
  CHECK((ga.times - gb.times).cwiseAbs().maxCoeff() == doctest::Approx(0.0));
  CHECK(serialize_newick(again) == text);
}

TEST_CASE("mrca agrees with a brute force walk") {
  const PhyloTree tree =
      generate_tree(TreeKind::BirthDeath, 20, 10.0, 99);
  for (int i = 0; i < tree.tip_count(); ++i)
    for (int j = 0; j < tree.tip_count(); ++j) {
      const int a = tree.tip_node(i), b = tree.tip_node(j);
      CHECK(tree.mrca_node(a, b) == brute_force_mrca(tree, a, b));
    }
}

TEST_CASE("shared path matrix equals mrca depths") {
  const PhyloTree tree = generate_tree(TreeKind::BirthDeath, 24, 7.0, 5);
  const SharedPathMatrix g = shared_path_matrix(tree);
  for (int i = 0; i < tree.tip_count(); ++i) {
    CHECK(g.times(i, i) == doctest::Approx(tree.tip_depth(i)));
    for (int j = 0; j < tree.tip_count(); ++j) {
      const int m = brute_force_mrca(tree, tree.tip_node(i), tree.tip_node(j));
      if (i != j) CHECK(g.times(i, j) == doctest::Approx(tree.depth(m)));
      CHECK(g.times(i, j) == g.times(j, i));
    }
  }
}

TEST_CASE("star trees have no shared history") {
  const PhyloTree tree = generate_tree(TreeKind::Star, 5, 3.0, 0);
  CHECK(tree.tip_count() == 5);
  const SharedPathMatrix g = shared_path_matrix(tree);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 5; ++j)
      CHECK(g.times(i, j) == doctest::Approx(i == j ? 3.0 : 0.0));
}

TEST_CASE("balanced trees are ultrametric binary") {
  const PhyloTree tree = generate_tree(TreeKind::Balanced, 8, 4.0, 0);
  CHECK(tree.tip_count() == 8);
  for (int i = 0; i < 8; ++i)
    CHECK(std::abs(tree.tip_depth(i) - 4.0) < 1e-12);
  CHECK_THROWS_AS(generate_tree(TreeKind::Balanced, 6, 4.0, 0),
                  std::invalid_argument);
}

TEST_CASE("pectinate trees are ultrametric ladders") {
  const int n = 6;
  const PhyloTree tree = generate_tree(TreeKind::Pectinate, n, 10.0, 0);
  CHECK(tree.tip_count() == n);
  for (int i = 0; i < n; ++i)
    CHECK(std::abs(tree.tip_depth(i) - 10.0) < 1e-12);
  // split depths are evenly spaced, so the distinct off-diagonal shared
  // times are k * depth / (n - 1)
  const SharedPathMatrix g = shared_path_matrix(tree);
  std::set<double> shared;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) shared.insert(g.times(i, j));
  CHECK(shared.size() == n - 1);
  double expected = 0.0;
  for (double s : shared) {
    CHECK(s == doctest::Approx(expected));
    expected += 10.0 / (n - 1);
  }
}

TEST_CASE("birth death trees honor the request") {
  for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
    const PhyloTree tree = generate_tree(TreeKind::BirthDeath, 16, 10.0, seed);
    CHECK(tree.tip_count() == 16);
    for (int i = 0; i < 16; ++i)
      CHECK(std::abs(tree.tip_depth(i) - 10.0) < 1e-9);
    std::set<std::string> labels(tree.tip_labels().begin(),
                                 tree.tip_labels().end());
    CHECK(labels.size() == 16);
    // deterministic in the seed
    const PhyloTree again =
        generate_tree(TreeKind::BirthDeath, 16, 10.0, seed);
    CHECK(serialize_newick(again) == serialize_newick(tree));
  }
  // extinction enabled still yields the requested tip count
  TreeGenOptions opts;
  opts.birth_rate = 1.0;
  opts.death_rate = 0.4;
  const PhyloTree tree =
      generate_tree(TreeKind::BirthDeath, 12, 6.0, 11, opts);
  CHECK(tree.tip_count() == 12);
  for (int i = 0; i < 12; ++i)
    CHECK(std::abs(tree.tip_depth(i) - 6.0) < 1e-9);
}

TEST_CASE("generator input checks") {
  CHECK_THROWS_AS(generate_tree(TreeKind::Star, 1, 3.0, 0),
                  std::invalid_argument);
  CHECK_THROWS_AS(generate_tree(TreeKind::Star, 4, 0.0, 0),
                  std::invalid_argument);
  CHECK_THROWS_AS(tree_kind_from_string("lattice"), std::invalid_argument);
  CHECK(to_string(TreeKind::BirthDeath) == "birth_death");
  CHECK(tree_kind_from_string("birth_death") == TreeKind::BirthDeath);
}

TEST_SUITE_END();
