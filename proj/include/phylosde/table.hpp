#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "phylosde/compare.hpp"
#include "phylosde/fit.hpp"
#include "phylosde/simulate.hpp"

namespace phylosde {

// shortest round-trippable decimal text for a double, locale independent
std::string format_number(double value);

// headered species/x/y table; the delimiter is sniffed from the header
// (tab wins over comma). Extra columns are ignored and reported back.
struct TraitTable {
  std::vector<std::string> species;
  std::vector<double> x;
  std::vector<double> y;
  std::vector<std::string> ignored_columns;
};

TraitTable read_trait_table(std::istream& in, const std::string& name);
TraitTable read_trait_table_file(const std::string& path);

void write_tip_dataset(std::ostream& out, const TipDataset& data);
void write_path(std::ostream& out, const SimPath& path);
void write_comparison(std::ostream& out, const ComparisonReport& report);
void write_bias_rows(std::ostream& out, const std::vector<BiasRow>& rows,
                     bool header);
void write_bias_summaries(std::ostream& out,
                          const std::vector<BiasSummary>& summaries);
std::vector<BiasRow> read_bias_rows(std::istream& in);

}  // namespace phylosde
