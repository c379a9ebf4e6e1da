#pragma once

#include "capcheck/optim.hpp"
#include "capcheck/probgen.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace capcheck::experiment {

using netcore::ArchitectureSpec;
using optim::Method;
using optim::TrainTrace;

enum class Aggregation { median, mean };

std::string to_string(Aggregation a);
Aggregation aggregation_from_string(const std::string& s);

double aggregate(std::vector<double> values, Aggregation agg);

/// Start-point seed for fitting `network` against the problem generated from
/// `problem_seed`. Independent of the generating parameters and distinct per
/// network geometry, but shared by all methods so method comparisons are
/// paired.
std::uint64_t x0_seed_for(std::uint64_t problem_seed,
                          const ArchitectureSpec& network);

/// One cell of the cross-check matrix: fit `network_arch` with `method` to
/// problems generated from `data_source_arch`, once per seed.
struct CellSpec {
  ArchitectureSpec network_arch;
  ArchitectureSpec data_source_arch;
  Method method = Method::cg;
  std::vector<std::uint64_t> seeds;  // problem seeds, all distinct
  std::int64_t budget = 2000;
  int n_samples = 0;
  probgen::InputDistribution input_distribution =
      probgen::InputDistribution::standard_normal;

  void validate() const;
};

struct SeedRun {
  std::uint64_t problem_seed = 0;
  std::uint64_t x0_seed = 0;
  bool failed = false;
  std::string error;
  TrainTrace trace;
};

struct CellResult {
  CellSpec spec;
  std::vector<SeedRun> runs;  // one per seed, in seed order
  Aggregation aggregation = Aggregation::median;
  // Aggregates over the non-failed runs; *_agg follows `aggregation`.
  double f_init_agg = 0.0, f_opt_agg = 0.0;
  double f_init_median = 0.0, f_init_mean = 0.0;
  double f_opt_median = 0.0, f_opt_mean = 0.0;
  std::int64_t gradient_calls_agg = 0;

  int failed_count() const;
  bool all_failed() const;
};

/// Runs one cell; per-seed failures are recorded, the cell itself only
/// throws when every seed failed.
CellResult run_cell(const CellSpec& spec,
                    Aggregation agg = Aggregation::median);

struct MatrixConfig {
  char size_class = 'A';
  std::vector<Method> methods = {Method::adadelta, Method::rmsprop,
                                 Method::sgd, Method::cg};
  int seed_count = 15;
  std::uint64_t master_seed = 1;
  std::int64_t budget = 2000;
  double saturation_factor = 2.0;
  probgen::InputDistribution input_distribution =
      probgen::InputDistribution::standard_normal;
  Aggregation aggregation = Aggregation::median;
  int workers = 0;  // 0 = all logical cores; affects scheduling only
};

/// Cells of the full cross-check matrix in canonical order: the three
/// self-fit blocks (X_1, X_3, X_5), then the four cross blocks (shallow net
/// on 3- and 5-layer data, 3- and 5-layer nets on shallow data), each block
/// holding one cell per method in config order.
struct MatrixResult {
  MatrixConfig config;
  std::vector<CellResult> cells;
};

MatrixResult run_matrix(const MatrixConfig& config);

// ---------------------------------------------------------------------------
// Derived tables.

std::optional<double> ratio_to_cg(double f_opt_method, double f_opt_cg);
std::optional<double> deep_shallow_ratio(double deep_net_on_shallow_data,
                                         double shallow_net_on_deep_data);

struct TableRow {
  std::string network;
  std::string data_source;
  Method method = Method::cg;
  std::int64_t gradient_calls = 0;
  double f_init_agg = 0.0, f_opt_agg = 0.0;
  double f_init_median = 0.0, f_init_mean = 0.0;
  double f_opt_median = 0.0, f_opt_mean = 0.0;
  std::optional<double> ratio_to_cg;
  std::optional<double> deep_shallow;
  int seeds = 0;
  int failed_seeds = 0;
};

struct CrossCheckTable {
  char size_class = 'A';
  Aggregation aggregation = Aggregation::median;
  std::vector<TableRow> rows;
};

CrossCheckTable build_table(const MatrixResult& result);

struct SummaryRow {
  std::string shallow;
  std::string deep;
  double shallow_net_on_deep_data = 0.0;
  double deep_net_on_shallow_data = 0.0;
  std::optional<double> ratio;
};

struct SummaryTable {
  char size_class = 'A';
  Method method = Method::rmsprop;
  Aggregation aggregation = Aggregation::median;
  std::vector<SummaryRow> rows;
};

/// Table of the two cross pairings for one method (absent cells are skipped).
SummaryTable build_summary(const MatrixResult& result, Method method);

// ---------------------------------------------------------------------------
// Results store: JSON-lines, header record first (format/version/config),
// then one record per run in canonical order. Worker count is deliberately
// not stored; it cannot influence the numbers.

void persist(const MatrixResult& result, const std::filesystem::path& path);
MatrixResult load(const std::filesystem::path& path);

}  // namespace capcheck::experiment
