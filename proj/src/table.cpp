#include "phylosde/table.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "phylosde/errors.hpp"

namespace phylosde {

std::string format_number(double value) {
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, res.ptr);
}

namespace {

std::vector<std::string> split(const std::string& line, char delim) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t at = line.find(delim, start);
    if (at == std::string::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, at - start));
    start = at + 1;
  }
  for (auto& cell : out) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' '))
      cell.pop_back();
    std::size_t head = 0;
    while (head < cell.size() && cell[head] == ' ') ++head;
    cell.erase(0, head);
  }
  return out;
}

double parse_cell(const std::string& cell, const std::string& name, int row,
                  const std::string& column) {
  double value = 0.0;
  const auto res =
      std::from_chars(cell.data(), cell.data() + cell.size(), value);
  if (res.ec != std::errc() || res.ptr != cell.data() + cell.size())
    throw std::invalid_argument(name + ": row " + std::to_string(row) +
                                ": column '" + column +
                                "' is not a number: '" + cell + "'");
  return value;
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return s;
}

}  // namespace

TraitTable read_trait_table(std::istream& in, const std::string& name) {
  std::string line;
  if (!std::getline(in, line))
    throw std::invalid_argument(name + ": empty table");
  const char delim = line.find('\t') != std::string::npos ? '\t' : ',';
  const std::vector<std::string> header = split(line, delim);

  int col_species = -1, col_x = -1, col_y = -1;
  TraitTable out;
  for (std::size_t i = 0; i < header.size(); ++i) {
    const std::string h = lower(header[i]);
    if (h == "species")
      col_species = static_cast<int>(i);
    else if (h == "x")
      col_x = static_cast<int>(i);
    else if (h == "y")
      col_y = static_cast<int>(i);
    else
      out.ignored_columns.push_back(header[i]);
  }
  if (col_species < 0 || col_x < 0 || col_y < 0)
    throw std::invalid_argument(name +
                                ": header needs species, x and y columns");

  int row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() || line == "\r") continue;
    const std::vector<std::string> cells = split(line, delim);
    const std::size_t need = static_cast<std::size_t>(
        std::max({col_species, col_x, col_y}) + 1);
    if (cells.size() < need)
      throw std::invalid_argument(name + ": row " + std::to_string(row) +
                                  ": too few columns");
    if (cells[col_species].empty())
      throw std::invalid_argument(name + ": row " + std::to_string(row) +
                                  ": empty species name");
    out.species.push_back(cells[col_species]);
    out.x.push_back(parse_cell(cells[col_x], name, row, "x"));
    out.y.push_back(parse_cell(cells[col_y], name, row, "y"));
  }
  if (out.species.empty())
    throw std::invalid_argument(name + ": no data rows");
  return out;
}

TraitTable read_trait_table_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open '" + path + "'");
  return read_trait_table(in, path);
}

void write_tip_dataset(std::ostream& out, const TipDataset& data) {
  out << "species\tx\ty\n";
  for (std::size_t i = 0; i < data.species.size(); ++i)
    out << data.species[i] << '\t' << format_number(data.x[i]) << '\t'
        << format_number(data.y[i]) << '\n';
}

void write_path(std::ostream& out, const SimPath& path) {
  out << "time\tx\ttheta\ty\tsigma_y\n";
  for (const PathPoint& p : path)
    out << format_number(p.time) << '\t' << format_number(p.x) << '\t'
        << format_number(p.theta) << '\t' << format_number(p.y) << '\t'
        << format_number(p.sigma) << '\n';
}

void write_comparison(std::ostream& out, const ComparisonReport& report) {
  out << "kind\tok\tlogL\tk\tn\taicc\tdelta_aicc\tweight\tr2\tconverged\t"
         "b0\tb1\talpha_y\talpha_theta\tsigma_y\tsigma_theta\ttau\n";
  for (const ModelComparison& e : report.entries) {
    out << to_string(e.kind) << '\t' << (e.ok ? 1 : 0) << '\t';
    if (!e.ok) {
      out << "nan\t0\t0\tnan\tnan\tnan\tnan\t0\tnan\tnan\tnan\tnan\tnan\tnan"
             "\tnan\n";
      continue;
    }
    out << format_number(e.fit.log_likelihood) << '\t' << e.fit.k << '\t'
        << e.fit.n << '\t' << format_number(e.aicc_value) << '\t'
        << format_number(e.delta_aicc) << '\t' << format_number(e.weight)
        << '\t' << format_number(e.fit.r2) << '\t'
        << (e.fit.converged ? 1 : 0) << '\t'
        << format_number(e.fit.coefficients[0]) << '\t'
        << format_number(e.fit.coefficients[1]) << '\t'
        << format_number(e.fit.params.alpha_y) << '\t'
        << format_number(e.fit.params.alpha_theta) << '\t'
        << format_number(e.fit.params.sigma_y0) << '\t'
        << format_number(e.fit.params.sigma_theta) << '\t'
        << format_number(e.fit.params.tau) << '\n';
  }
}

void write_bias_rows(std::ostream& out, const std::vector<BiasRow>& rows,
                     bool header) {
  if (header)
    out << "kind\ttree\tn\treplicate\tparameter\ttruth\testimate\tok\n";
  for (const BiasRow& r : rows)
    out << to_string(r.cell.kind) << '\t' << to_string(r.cell.tree_kind)
        << '\t' << r.cell.n_tips << '\t' << r.cell.replicate << '\t'
        << r.parameter << '\t' << format_number(r.truth) << '\t'
        << format_number(r.estimate) << '\t' << (r.ok ? 1 : 0) << '\n';
}

void write_bias_summaries(std::ostream& out,
                          const std::vector<BiasSummary>& summaries) {
  out << "kind\tn\tparameter\ttruth\tcount\tq1\tmedian\tq3\n";
  for (const BiasSummary& s : summaries)
    out << to_string(s.kind) << '\t' << s.n_tips << '\t' << s.parameter
        << '\t' << format_number(s.truth) << '\t' << s.count << '\t'
        << format_number(s.q1) << '\t' << format_number(s.median) << '\t'
        << format_number(s.q3) << '\n';
}

std::vector<BiasRow> read_bias_rows(std::istream& in) {
  std::vector<BiasRow> rows;
  std::string line;
  if (!std::getline(in, line)) return rows;
  int row_no = 1;
  while (std::getline(in, line)) {
    ++row_no;
    if (line.empty() || line == "\r") continue;
    const auto cells = split(line, '\t');
    if (cells.size() < 8)
      throw std::invalid_argument("bias table: row " +
                                  std::to_string(row_no) +
                                  ": too few columns");
    BiasRow r;
    r.cell.kind = model_kind_from_string(cells[0]);
    r.cell.tree_kind = tree_kind_from_string(cells[1]);
    r.cell.n_tips = static_cast<int>(
        parse_cell(cells[2], "bias table", row_no, "n"));
    r.cell.replicate = static_cast<int>(
        parse_cell(cells[3], "bias table", row_no, "replicate"));
    r.parameter = cells[4];
    r.truth = parse_cell(cells[5], "bias table", row_no, "truth");
    r.estimate = cells[6] == "nan"
                     ? std::numeric_limits<double>::quiet_NaN()
                     : parse_cell(cells[6], "bias table", row_no, "estimate");
    r.ok = cells[7] == "1";
    rows.push_back(r);
  }
  return rows;
}

}  // namespace phylosde
