#include "capcheck/experiment.hpp"

#include "capcheck/rng.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

using namespace capcheck;
using experiment::Aggregation;
using experiment::CellSpec;
using experiment::MatrixConfig;
using optim::Method;

namespace {

std::filesystem::path temp_file(const char* name) {
  return std::filesystem::temp_directory_path() / name;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

CellSpec small_cell(Method method, std::vector<std::uint64_t> seeds,
                    std::int64_t budget = 40) {
  CellSpec spec;
  spec.network_arch = testutil::tiny_arch(6, 3, 1, 4);
  spec.network_arch.label = "net";
  spec.data_source_arch = testutil::tiny_arch(6, 3, 2, 3);
  spec.data_source_arch.label = "src";
  spec.method = method;
  spec.seeds = std::move(seeds);
  spec.budget = budget;
  spec.n_samples = 12;
  return spec;
}

MatrixConfig tiny_matrix_config() {
  MatrixConfig config;
  config.size_class = 'A';
  config.seed_count = 2;
  config.master_seed = 11;
  config.budget = 25;
  config.saturation_factor = 2.0;
  return config;
}

}  // namespace

TEST(Aggregate, MedianAndMean) {
  EXPECT_DOUBLE_EQ(experiment::aggregate({3.0, 1.0, 2.0}, Aggregation::median),
                   2.0);
  EXPECT_DOUBLE_EQ(experiment::aggregate({4.0, 1.0, 2.0, 3.0},
                                         Aggregation::median),
                   2.5);
  EXPECT_DOUBLE_EQ(experiment::aggregate({1.0, 2.0, 6.0}, Aggregation::mean),
                   3.0);
  EXPECT_DOUBLE_EQ(experiment::aggregate({5.0}, Aggregation::median), 5.0);
  EXPECT_THROW(experiment::aggregate({}, Aggregation::median),
               std::invalid_argument);
}

TEST(X0Seed, DistinctPerNetworkAndSeed) {
  const auto a1 = testutil::tiny_arch(100, 50, 1, 20);
  const auto a3 = testutil::tiny_arch(100, 50, 3, 16);
  EXPECT_NE(experiment::x0_seed_for(1, a1), experiment::x0_seed_for(1, a3));
  EXPECT_NE(experiment::x0_seed_for(1, a1), experiment::x0_seed_for(2, a1));
  EXPECT_EQ(experiment::x0_seed_for(1, a1), experiment::x0_seed_for(1, a1));
  // Independent of the generating parameters' stream.
  EXPECT_NE(experiment::x0_seed_for(1, a1),
            rng::derive_seed(1, rng::kStreamWeights));
}

TEST(CellSpec, Validation) {
  auto spec = small_cell(Method::cg, {1, 2});
  EXPECT_NO_THROW(spec.validate());
  spec.seeds = {1, 1};
  EXPECT_THROW(spec.validate(), std::invalid_argument);
  spec = small_cell(Method::cg, {});
  EXPECT_THROW(spec.validate(), std::invalid_argument);
  spec = small_cell(Method::cg, {1});
  spec.data_source_arch.output_dim = 4;
  EXPECT_THROW(spec.validate(), std::invalid_argument);
}

TEST(RunCell, SingletonAggregatesEqualTrace) {
  const auto cell = experiment::run_cell(small_cell(Method::rmsprop, {7}));
  ASSERT_EQ(cell.runs.size(), 1u);
  ASSERT_FALSE(cell.runs[0].failed);
  EXPECT_DOUBLE_EQ(cell.f_opt_agg, cell.runs[0].trace.f_opt);
  EXPECT_DOUBLE_EQ(cell.f_init_agg, cell.runs[0].trace.f_init);
}

TEST(RunCell, DeterministicAcrossCalls) {
  const auto spec = small_cell(Method::cg, {3, 4, 5});
  const auto a = experiment::run_cell(spec);
  const auto b = experiment::run_cell(spec);
  ASSERT_EQ(a.runs.size(), b.runs.size());
  for (std::size_t i = 0; i < a.runs.size(); ++i) {
    EXPECT_EQ(a.runs[i].trace.f_opt, b.runs[i].trace.f_opt);
    EXPECT_EQ(a.runs[i].trace.gradient_calls_used,
              b.runs[i].trace.gradient_calls_used);
  }
  EXPECT_EQ(a.f_opt_agg, b.f_opt_agg);
}

TEST(RunCell, SeedIsolation) {
  // The run for seed 3 must not depend on which other seeds share the cell.
  const auto a = experiment::run_cell(small_cell(Method::adadelta, {3, 4}));
  const auto b = experiment::run_cell(small_cell(Method::adadelta, {3, 9}));
  EXPECT_EQ(a.runs[0].trace.f_opt, b.runs[0].trace.f_opt);
  EXPECT_EQ(a.runs[0].trace.f_init, b.runs[0].trace.f_init);
  EXPECT_NE(a.runs[1].trace.f_init, b.runs[1].trace.f_init);
}

TEST(RunCell, AggregationBetweenMinAndMax) {
  const auto cell =
      experiment::run_cell(small_cell(Method::sgd, {1, 2, 3, 4, 5}));
  double lo = 1e300, hi = -1e300;
  for (const auto& run : cell.runs) {
    lo = std::min(lo, run.trace.f_opt);
    hi = std::max(hi, run.trace.f_opt);
  }
  EXPECT_GE(cell.f_opt_agg, lo);
  EXPECT_LE(cell.f_opt_agg, hi);
  EXPECT_GE(cell.f_opt_median, lo);
  EXPECT_LE(cell.f_opt_mean, hi);
}

TEST(RunCell, CgSelfFitCutsObjectiveByThreeOrders) {
  CellSpec spec;
  spec.network_arch = probgen::size_class_archs('A', 2.0)[0];
  spec.data_source_arch = spec.network_arch;
  spec.method = Method::cg;
  spec.seeds = {700, 701, 702};
  spec.budget = 2000;
  spec.n_samples = probgen::build_size_class('A').data_size;
  const auto cell = experiment::run_cell(spec);
  EXPECT_EQ(cell.failed_count(), 0);
  EXPECT_LT(cell.f_opt_agg, 1e-3 * cell.f_init_agg);
}

TEST(Ratios, RatioToCg) {
  // displayed table inputs are rounded; the true quotient of 0.098e-3 and
  // 0.012e-3 is about 8.17
  const auto r = experiment::ratio_to_cg(0.098e-3, 0.012e-3);
  ASSERT_TRUE(r.has_value());
  EXPECT_NEAR(*r, 8.1667, 1e-3);
  EXPECT_DOUBLE_EQ(*experiment::ratio_to_cg(4.0e-3, 0.5e-3), 8.0);
  EXPECT_DOUBLE_EQ(*experiment::ratio_to_cg(0.7, 0.7), 1.0);
  EXPECT_FALSE(experiment::ratio_to_cg(1.0, 0.0).has_value());
}

TEST(Ratios, DeepShallow) {
  const auto r = experiment::deep_shallow_ratio(4.415e-3, 0.075e-3);
  ASSERT_TRUE(r.has_value());
  EXPECT_NEAR(*r, 58.867, 1e-2);
  const auto r2 = experiment::deep_shallow_ratio(11.353e-3, 0.035e-3);
  ASSERT_TRUE(r2.has_value());
  EXPECT_NEAR(*r2, 324.37, 0.01);
  EXPECT_DOUBLE_EQ(*experiment::deep_shallow_ratio(2.5, 2.5), 1.0);
  EXPECT_FALSE(experiment::deep_shallow_ratio(1.0, 0.0).has_value());
}

TEST(RunMatrix, StructureAndDerivedColumns) {
  const auto result = experiment::run_matrix(tiny_matrix_config());
  // 7 blocks x 4 methods
  ASSERT_EQ(result.cells.size(), 28u);
  const auto table = experiment::build_table(result);
  ASSERT_EQ(table.rows.size(), 28u);

  // canonical block order
  EXPECT_EQ(table.rows[0].network, "A_1");
  EXPECT_EQ(table.rows[0].data_source, "A_1");
  EXPECT_EQ(table.rows[4].network, "A_3");
  EXPECT_EQ(table.rows[4].data_source, "A_3");
  EXPECT_EQ(table.rows[12].network, "A_1");
  EXPECT_EQ(table.rows[12].data_source, "A_3");
  EXPECT_EQ(table.rows[20].network, "A_3");
  EXPECT_EQ(table.rows[20].data_source, "A_1");

  for (const auto& row : table.rows) {
    if (row.method == Method::cg) {
      EXPECT_FALSE(row.ratio_to_cg.has_value());
    } else {
      EXPECT_TRUE(row.ratio_to_cg.has_value());
    }
    const bool deep_on_shallow =
        row.network != "A_1" && row.data_source == "A_1";
    EXPECT_EQ(row.deep_shallow.has_value(), deep_on_shallow)
        << row.network << "/" << row.data_source;
    EXPECT_EQ(row.seeds, 2);
    EXPECT_EQ(row.failed_seeds, 0);
  }

  const auto summary = experiment::build_summary(result, Method::rmsprop);
  ASSERT_EQ(summary.rows.size(), 2u);
  EXPECT_EQ(summary.rows[0].shallow, "A_1");
  EXPECT_EQ(summary.rows[0].deep, "A_3");
  EXPECT_EQ(summary.rows[1].deep, "A_5");
}

TEST(RunMatrix, WorkerCountDoesNotChangeResults) {
  auto config = tiny_matrix_config();
  config.workers = 1;
  const auto a = experiment::run_matrix(config);
  config.workers = 3;
  const auto b = experiment::run_matrix(config);

  const auto pa = temp_file("capcheck_store_w1.jsonl");
  const auto pb = temp_file("capcheck_store_w3.jsonl");
  experiment::persist(a, pa);
  experiment::persist(b, pb);
  EXPECT_EQ(slurp(pa), slurp(pb));
  std::filesystem::remove(pa);
  std::filesystem::remove(pb);
}

TEST(Store, PersistLoadRoundTrip) {
  const auto result = experiment::run_matrix(tiny_matrix_config());
  const auto path = temp_file("capcheck_store_roundtrip.jsonl");
  experiment::persist(result, path);
  const auto loaded = experiment::load(path);

  ASSERT_EQ(loaded.cells.size(), result.cells.size());
  EXPECT_EQ(loaded.config.size_class, result.config.size_class);
  EXPECT_EQ(loaded.config.budget, result.config.budget);
  EXPECT_EQ(loaded.config.master_seed, result.config.master_seed);
  for (std::size_t c = 0; c < result.cells.size(); ++c) {
    const auto& x = result.cells[c];
    const auto& y = loaded.cells[c];
    EXPECT_EQ(x.spec.network_arch.label, y.spec.network_arch.label);
    EXPECT_EQ(x.spec.method, y.spec.method);
    EXPECT_EQ(x.f_opt_agg, y.f_opt_agg);
    EXPECT_EQ(x.f_init_agg, y.f_init_agg);
    EXPECT_EQ(x.f_opt_median, y.f_opt_median);
    EXPECT_EQ(x.f_opt_mean, y.f_opt_mean);
    EXPECT_EQ(x.gradient_calls_agg, y.gradient_calls_agg);
    ASSERT_EQ(x.runs.size(), y.runs.size());
    for (std::size_t s = 0; s < x.runs.size(); ++s) {
      EXPECT_EQ(x.runs[s].problem_seed, y.runs[s].problem_seed);
      EXPECT_EQ(x.runs[s].x0_seed, y.runs[s].x0_seed);
      EXPECT_EQ(x.runs[s].trace.f_opt, y.runs[s].trace.f_opt);
      EXPECT_EQ(x.runs[s].trace.termination, y.runs[s].trace.termination);
    }
  }

  // Persisting the loaded result must reproduce the file byte for byte.
  const auto path2 = temp_file("capcheck_store_roundtrip2.jsonl");
  experiment::persist(loaded, path2);
  EXPECT_EQ(slurp(path), slurp(path2));

  // Ratio columns recomputed from the store match the original table.
  const auto t1 = experiment::build_table(result);
  const auto t2 = experiment::build_table(loaded);
  ASSERT_EQ(t1.rows.size(), t2.rows.size());
  for (std::size_t i = 0; i < t1.rows.size(); ++i) {
    EXPECT_EQ(t1.rows[i].ratio_to_cg.has_value(),
              t2.rows[i].ratio_to_cg.has_value());
    if (t1.rows[i].ratio_to_cg) {
      EXPECT_EQ(*t1.rows[i].ratio_to_cg, *t2.rows[i].ratio_to_cg);
    }
  }

  std::filesystem::remove(path);
  std::filesystem::remove(path2);
}

TEST(Store, HistoryIsDownsampled) {
  auto config = tiny_matrix_config();
  config.seed_count = 1;
  config.budget = 1500;
  config.methods = {Method::sgd};
  const auto result = experiment::run_matrix(config);
  const auto path = temp_file("capcheck_store_downsample.jsonl");
  experiment::persist(result, path);
  const auto loaded = experiment::load(path);
  for (const auto& cell : loaded.cells) {
    for (const auto& run : cell.runs) {
      EXPECT_LE(run.trace.objective_history.size(), 500u);
      EXPECT_GE(run.trace.objective_history.size(), 2u);
      // last point preserved
      EXPECT_EQ(run.trace.objective_history.back().first,
                cell.spec.budget);
    }
  }
  std::filesystem::remove(path);
}

TEST(Store, FutureVersionRejected) {
  const auto path = temp_file("capcheck_store_future.jsonl");
  {
    std::ofstream out(path);
    out << R"({"format":"capcheck-results","version":99})" << "\n";
  }
  try {
    experiment::load(path);
    FAIL() << "expected version error";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("version"), std::string::npos);
  }
  std::filesystem::remove(path);
}

TEST(Store, CorruptFileRejected) {
  const auto path = temp_file("capcheck_store_corrupt.jsonl");
  {
    std::ofstream out(path);
    out << "not json\n";
  }
  EXPECT_THROW(experiment::load(path), std::exception);
  std::filesystem::remove(path);
}
