#include <doctest.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <sstream>

#include "phylosde/rng.hpp"
#include "phylosde/table.hpp"

using namespace phylosde;

TEST_SUITE_BEGIN("table");

namespace {

double reparse(const std::string& text) {
  double value = 0.0;
  const auto res =
      std::from_chars(text.data(), text.data() + text.size(), value);
  REQUIRE(res.ec == std::errc());
  return value;
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) out.push_back(line);
  return out;
}

std::size_t field_count(const std::string& line) {
  return static_cast<std::size_t>(std::count(line.begin(), line.end(), '\t')) +
         1;
}

}  // namespace

TEST_CASE("number formatting") {
  CHECK(format_number(1.0) == "1");
  CHECK(format_number(0.1) == "0.1");
  CHECK(format_number(-0.0025) == "-0.0025");
  CHECK(format_number(1e20) == "1e+20");

  // shortest text that parses back to the same bits
  Philox rng(42, 0);
  for (int i = 0; i < 1000; ++i) {
    const double v = (rng.next_uniform() - 0.5) *
                     std::exp(40.0 * (rng.next_uniform() - 0.5));
    CHECK(reparse(format_number(v)) == v);
  }
  CHECK(reparse(format_number(1.0 / 3.0)) == 1.0 / 3.0);
}

TEST_CASE("trait tables in both delimiters") {
  std::istringstream tsv("species\tx\ty\na\t1.5\t2\nb\t-0.5\t3.25\n");
  const TraitTable t = read_trait_table(tsv, "tsv");
  REQUIRE(t.species.size() == 2);
  CHECK(t.species[0] == "a");
  CHECK(t.x[1] == -0.5);
  CHECK(t.y[1] == 3.25);
  CHECK(t.ignored_columns.empty());

  std::istringstream csv("Species,Y,X\na,2,1.5\nb,3.25,-0.5\n");
  const TraitTable c = read_trait_table(csv, "csv");
  REQUIRE(c.species.size() == 2);
  CHECK(c.x[0] == 1.5);  // header names matter, not their order
  CHECK(c.y[0] == 2.0);
}

TEST_CASE("extra columns are ignored but reported") {
  std::istringstream in(
      "species\thabitat\tx\ty\tnote\na\tsea\t1\t2\tfast\n");
  const TraitTable t = read_trait_table(in, "t");
  REQUIRE(t.ignored_columns.size() == 2);
  CHECK(t.ignored_columns[0] == "habitat");
  CHECK(t.ignored_columns[1] == "note");
  CHECK(t.x[0] == 1.0);
}

TEST_CASE("blank lines and padding are tolerated") {
  std::istringstream in(
      "species, x, y\r\na, 1, 2\r\n\r\n\nb, 3, 4\n");
  const TraitTable t = read_trait_table(in, "t");
  REQUIRE(t.species.size() == 2);
  CHECK(t.species[1] == "b");
  CHECK(t.x[1] == 3.0);
}

TEST_CASE("table errors carry the row number") {
  std::istringstream bad_number("species\tx\ty\na\t1\t2\nb\toops\t3\n");
  CHECK_THROWS_WITH_AS(read_trait_table(bad_number, "t"),
                       doctest::Contains("row 3"), std::invalid_argument);

  std::istringstream short_row("species\tx\ty\na\t1\n");
  CHECK_THROWS_WITH_AS(read_trait_table(short_row, "t"),
                       doctest::Contains("too few columns"),
                       std::invalid_argument);

  std::istringstream no_species("species\tx\ty\n\t1\t2\n");
  CHECK_THROWS_WITH_AS(read_trait_table(no_species, "t"),
                       doctest::Contains("empty species"),
                       std::invalid_argument);

  std::istringstream missing("species\tx\n");
  CHECK_THROWS_WITH_AS(read_trait_table(missing, "t"),
                       doctest::Contains("header"), std::invalid_argument);

  std::istringstream empty("");
  CHECK_THROWS_WITH_AS(read_trait_table(empty, "t"),
                       doctest::Contains("empty table"),
                       std::invalid_argument);

  std::istringstream header_only("species\tx\ty\n");
  CHECK_THROWS_WITH_AS(read_trait_table(header_only, "t"),
                       doctest::Contains("no data rows"),
                       std::invalid_argument);

  CHECK_THROWS_WITH_AS(read_trait_table_file("/nonexistent/path.tsv"),
                       doctest::Contains("cannot open"),
                       std::invalid_argument);
}

TEST_CASE("tip dataset round trip") {
  TipDataset data;
  data.species = {"a", "b", "c"};
  data.x.resize(3);
  data.x << 0.25, -1.0 / 3.0, 4e-7;
  data.y.resize(3);
  data.y << 1.5, 2.0, -3.75;
  std::ostringstream out;
  write_tip_dataset(out, data);

  std::istringstream in(out.str());
  const TraitTable t = read_trait_table(in, "roundtrip");
  REQUIRE(t.species.size() == 3);
  for (int i = 0; i < 3; ++i) {
    CHECK(t.species[i] == data.species[i]);
    CHECK(t.x[i] == data.x[i]);
    CHECK(t.y[i] == data.y[i]);
  }
}

TEST_CASE("path output shape") {
  SimPath path;
  path.push_back({0.0, 0.0, 0.5, 0.1, 0.02});
  path.push_back({1.0, 0.3, 0.6, 0.2, 0.02});
  std::ostringstream out;
  write_path(out, path);
  const auto lines = lines_of(out.str());
  REQUIRE(lines.size() == 3);
  CHECK(lines[0] == "time\tx\ttheta\ty\tsigma_y");
  CHECK(field_count(lines[1]) == 5);
}

TEST_CASE("bias rows round trip") {
  std::vector<BiasRow> rows(2);
  rows[0].cell = {ModelKind::OUBMBM, TreeKind::Pectinate, 32, 4};
  rows[0].parameter = "tau";
  rows[0].truth = 0.30;
  rows[0].estimate = 0.2857142857142857;
  rows[0].ok = true;
  rows[1].cell = {ModelKind::OUOU, TreeKind::BirthDeath, 64, 0};
  rows[1].parameter = "alpha_theta";
  rows[1].truth = 0.12;
  rows[1].estimate = std::numeric_limits<double>::quiet_NaN();
  rows[1].ok = false;

  std::ostringstream out;
  write_bias_rows(out, rows, true);
  std::istringstream in(out.str());
  const std::vector<BiasRow> back = read_bias_rows(in);
  REQUIRE(back.size() == 2);
  CHECK(back[0].cell.kind == ModelKind::OUBMBM);
  CHECK(back[0].cell.tree_kind == TreeKind::Pectinate);
  CHECK(back[0].cell.n_tips == 32);
  CHECK(back[0].cell.replicate == 4);
  CHECK(back[0].parameter == "tau");
  CHECK(back[0].truth == rows[0].truth);
  CHECK(back[0].estimate == rows[0].estimate);
  CHECK(back[0].ok);
  CHECK(std::isnan(back[1].estimate));
  CHECK_FALSE(back[1].ok);

  // appending without a second header keeps the table readable
  write_bias_rows(out, {rows[0]}, false);
  std::istringstream merged(out.str());
  CHECK(read_bias_rows(merged).size() == 3);

  std::istringstream truncated("header\noubm\tstar\t16\n");
  CHECK_THROWS_WITH_AS(read_bias_rows(truncated),
                       doctest::Contains("too few columns"),
                       std::invalid_argument);
}

TEST_CASE("summary and comparison tables keep their shape") {
  BiasSummary s;
  s.kind = ModelKind::OUOUBM;
  s.n_tips = 128;
  s.parameter = "b1";
  s.truth = 0.72;
  s.count = 50;
  s.q1 = 0.6;
  s.median = 0.7;
  s.q3 = 0.8;
  std::ostringstream sum_out;
  write_bias_summaries(sum_out, {s});
  const auto sum_lines = lines_of(sum_out.str());
  REQUIRE(sum_lines.size() == 2);
  CHECK(field_count(sum_lines[0]) == 8);
  CHECK(field_count(sum_lines[1]) == 8);
  CHECK(sum_lines[1].substr(0, 6) == "ououbm");

  ComparisonReport report;
  report.entries.resize(2);
  report.entries[0].kind = ModelKind::BM;
  report.entries[0].ok = true;
  report.entries[0].fit.coefficients = Eigen::VectorXd::Zero(2);
  report.entries[0].fit.k = 3;
  report.entries[0].fit.n = 16;
  report.entries[0].aicc_value = 10.0;
  report.entries[0].weight = 1.0;
  report.entries[1].kind = ModelKind::OUOU;
  report.entries[1].ok = false;
  report.entries[1].error = "did not converge";
  std::ostringstream cmp_out;
  write_comparison(cmp_out, report);
  const auto cmp_lines = lines_of(cmp_out.str());
  REQUIRE(cmp_lines.size() == 3);
  const std::size_t width = field_count(cmp_lines[0]);
  CHECK(width == 17);
  CHECK(field_count(cmp_lines[1]) == width);
  CHECK(field_count(cmp_lines[2]) == width);
}

TEST_SUITE_END();
