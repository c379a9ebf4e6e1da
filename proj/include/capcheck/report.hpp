#pragma once

#include "capcheck/experiment.hpp"

#include <string>
#include <vector>

namespace capcheck::report {

using experiment::CrossCheckTable;
using experiment::SummaryTable;
using experiment::TableRow;

enum class Format { csv, md, txt };

Format format_from_string(const std::string& s);
std::string to_string(Format f);
std::string file_extension(Format f);

// Detail table, one row per (network, data source, method). The csv form is
// the machine interface: full-precision values, stable column order, leading
// schema_version column. md/txt scale F columns by 1e3 like the result
// tables in the docs.
std::string render_detail(const CrossCheckTable& table, Format format);

// Summary table: the two cross pairings for a single method.
std::string render_summary(const SummaryTable& table, Format format);

/// Parses the output of render_detail(..., Format::csv) back into rows.
/// Aggregation-independent fields only; used for round-trip checks and
/// downstream tooling.
std::vector<TableRow> parse_detail_csv(const std::string& csv);

}  // namespace capcheck::report
