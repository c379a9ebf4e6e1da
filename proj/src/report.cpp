#include "capcheck/report.hpp"

#include <cstdio>
#include <cstdlib>
#include <sstream>
#include <stdexcept>

namespace capcheck::report {

namespace {

// %.17g round-trips IEEE doubles exactly through strtod.
std::string full(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string f3(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

std::string f2(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string f1(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.1f", v);
  return buf;
}

constexpr int kDetailSchemaVersion = 1;

const char* kDetailHeader =
    "schema_version,size_class,network,data_source,method,seeds,failed_seeds,"
    "gradient_calls,f_init_median,f_init_mean,f_opt_median,f_opt_mean,"
    "ratio_to_cg,deep_shallow_ratio";

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  fields.push_back(cur);
  return fields;
}

// Human-facing rows: F values displayed multiplied by 1e3, ratios with the
// customary digit counts.
struct DisplayRow {
  std::vector<std::string> cells;
};

std::vector<std::string> detail_display_header() {
  return {"Network",      "Data Source",  "Algorithm",   "# grad calls",
          "F_init x1e-3", "F_opt x1e-3",  "Ratio to CG", "Deep/Shallow"};
}

DisplayRow detail_display_row(const TableRow& r) {
  DisplayRow row;
  row.cells = {r.network,
               r.data_source,
               optim::to_string(r.method),
               std::to_string(r.gradient_calls),
               f3(r.f_init_agg * 1e3),
               f3(r.f_opt_agg * 1e3),
               r.ratio_to_cg ? f2(*r.ratio_to_cg) : "--",
               r.deep_shallow ? f1(*r.deep_shallow) : "--"};
  if (r.failed_seeds > 0) {
    row.cells[2] += " [" + std::to_string(r.failed_seeds) + " failed]";
  }
  return row;
}

std::string render_markdown(const std::vector<std::string>& header,
                            const std::vector<DisplayRow>& rows) {
  std::ostringstream os;
  os << "|";
  for (const auto& h : header) os << " " << h << " |";
  os << "\n|";
  for (std::size_t i = 0; i < header.size(); ++i) os << " --- |";
  os << "\n";
  for (const auto& row : rows) {
    os << "|";
    for (const auto& c : row.cells) os << " " << c << " |";
    os << "\n";
  }
  return os.str();
}

std::string render_text(const std::vector<std::string>& header,
                        const std::vector<DisplayRow>& rows) {
  std::vector<std::size_t> widths(header.size());
  for (std::size_t i = 0; i < header.size(); ++i) widths[i] = header[i].size();
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.cells.size(); ++i) {
      widths[i] = std::max(widths[i], row.cells[i].size());
    }
  }
  std::ostringstream os;
  auto emit = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      os << cells[i];
      if (i + 1 < cells.size()) {
        os << std::string(widths[i] - cells[i].size() + 2, ' ');
      }
    }
    os << "\n";
  };
  emit(header);
  std::size_t total = 0;
  for (std::size_t w : widths) total += w + 2;
  os << std::string(total > 2 ? total - 2 : total, '-') << "\n";
  for (const auto& row : rows) emit(row.cells);
  return os.str();
}

}  // namespace

Format format_from_string(const std::string& s) {
  if (s == "csv") return Format::csv;
  if (s == "md") return Format::md;
  if (s == "txt") return Format::txt;
  throw std::invalid_argument("unknown format: " + s);
}

std::string to_string(Format f) {
  switch (f) {
    case Format::csv: return "csv";
    case Format::md: return "md";
    case Format::txt: return "txt";
  }
  return "?";
}

std::string file_extension(Format f) { return "." + to_string(f); }

std::string render_detail(const CrossCheckTable& table, Format format) {
  if (format == Format::csv) {
    std::ostringstream os;
    os << kDetailHeader << "\n";
    for (const auto& r : table.rows) {
      os << kDetailSchemaVersion << "," << table.size_class << ","
         << r.network << "," << r.data_source << ","
         << optim::to_string(r.method) << "," << r.seeds << ","
         << r.failed_seeds << "," << r.gradient_calls << ","
         << full(r.f_init_median) << "," << full(r.f_init_mean) << ","
         << full(r.f_opt_median) << "," << full(r.f_opt_mean) << ","
         << (r.ratio_to_cg ? full(*r.ratio_to_cg) : "") << ","
         << (r.deep_shallow ? full(*r.deep_shallow) : "") << "\n";
    }
    return os.str();
  }
  std::vector<DisplayRow> rows;
  rows.reserve(table.rows.size());
  for (const auto& r : table.rows) rows.push_back(detail_display_row(r));
  return format == Format::md ? render_markdown(detail_display_header(), rows)
                              : render_text(detail_display_header(), rows);
}

std::string render_summary(const SummaryTable& table, Format format) {
  if (format == Format::csv) {
    std::ostringstream os;
    os << "schema_version,size_class,method,shallow,deep,"
          "data_deep_nn_shallow,data_shallow_nn_deep,ratio_deep_shallow\n";
    for (const auto& r : table.rows) {
      os << kDetailSchemaVersion << "," << table.size_class << ","
         << optim::to_string(table.method) << "," << r.shallow << ","
         << r.deep << "," << full(r.shallow_net_on_deep_data) << ","
         << full(r.deep_net_on_shallow_data) << ","
         << (r.ratio ? full(*r.ratio) : "") << "\n";
    }
    return os.str();
  }
  const std::vector<std::string> header = {
      "Shallow", "Deep", "Data deep -- NN shallow x1e-3",
      "Data shallow -- NN deep x1e-3", "Ratio Deep/Shallow"};
  std::vector<DisplayRow> rows;
  for (const auto& r : table.rows) {
    DisplayRow row;
    row.cells = {r.shallow, r.deep, f3(r.shallow_net_on_deep_data * 1e3),
                 f3(r.deep_net_on_shallow_data * 1e3),
                 r.ratio ? f1(*r.ratio) : "--"};
    rows.push_back(std::move(row));
  }
  return format == Format::md ? render_markdown(header, rows)
                              : render_text(header, rows);
}

std::vector<TableRow> parse_detail_csv(const std::string& csv) {
  std::istringstream in(csv);
  std::string line;
  if (!std::getline(in, line) || line != kDetailHeader) {
    throw std::invalid_argument("unrecognized detail csv header");
  }
  std::vector<TableRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != 14) {
      throw std::invalid_argument("detail csv row needs 14 fields");
    }
    if (std::atoi(fields[0].c_str()) != kDetailSchemaVersion) {
      throw std::invalid_argument("unsupported detail csv schema version");
    }
    TableRow r;
    r.network = fields[2];
    r.data_source = fields[3];
    r.method = optim::method_from_string(fields[4]);
    r.seeds = std::atoi(fields[5].c_str());
    r.failed_seeds = std::atoi(fields[6].c_str());
    r.gradient_calls = std::atoll(fields[7].c_str());
    r.f_init_median = std::strtod(fields[8].c_str(), nullptr);
    r.f_init_mean = std::strtod(fields[9].c_str(), nullptr);
    r.f_opt_median = std::strtod(fields[10].c_str(), nullptr);
    r.f_opt_mean = std::strtod(fields[11].c_str(), nullptr);
    if (!fields[12].empty()) {
      r.ratio_to_cg = std::strtod(fields[12].c_str(), nullptr);
    }
    if (!fields[13].empty()) {
      r.deep_shallow = std::strtod(fields[13].c_str(), nullptr);
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace capcheck::report
