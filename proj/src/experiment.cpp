#include "capcheck/experiment.hpp"

#include "capcheck/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <map>
#include <stdexcept>
#include <thread>

namespace capcheck::experiment {

using json = nlohmann::ordered_json;

std::string to_string(Aggregation a) {
  return a == Aggregation::median ? "median" : "mean";
}

Aggregation aggregation_from_string(const std::string& s) {
  if (s == "median") return Aggregation::median;
  if (s == "mean") return Aggregation::mean;
  throw std::invalid_argument("unknown aggregation: " + s);
}

double aggregate(std::vector<double> values, Aggregation agg) {
  if (values.empty()) {
    throw std::invalid_argument("aggregate: no values");
  }
  if (agg == Aggregation::mean) {
    double sum = 0.0;
    for (double v : values) sum += v;
    return sum / static_cast<double>(values.size());
  }
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2]
                    : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

namespace {

std::uint64_t arch_fingerprint(const ArchitectureSpec& a) {
  // FNV-1a over the geometry fields.
  std::uint64_t h = 1469598103934665603ull;
  for (std::uint64_t v :
       {static_cast<std::uint64_t>(a.input_dim),
        static_cast<std::uint64_t>(a.output_dim),
        static_cast<std::uint64_t>(a.hidden_count),
        static_cast<std::uint64_t>(a.hidden_width)}) {
    for (int byte = 0; byte < 8; ++byte) {
      h ^= (v >> (8 * byte)) & 0xff;
      h *= 1099511628211ull;
    }
  }
  return h;
}

// Runs `body(i)` for i in [0, n), spread over `workers` threads. Results go
// into per-index slots, so the outcome is independent of scheduling.
void parallel_for(std::size_t n, int workers,
                  const std::function<void(std::size_t)>& body) {
  if (workers <= 0) {
    workers = static_cast<int>(std::thread::hardware_concurrency());
    if (workers <= 0) workers = 1;
  }
  workers = std::min<int>(workers, static_cast<int>(n));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= n) return;
        body(i);
      }
    });
  }
  for (auto& t : pool) t.join();
}

SeedRun run_one_seed(const CellSpec& spec, std::uint64_t problem_seed,
                     const probgen::Problem* cached_problem) {
  SeedRun out;
  out.problem_seed = problem_seed;
  out.x0_seed = x0_seed_for(problem_seed, spec.network_arch);
  try {
    probgen::Problem local;
    const probgen::Problem* problem = cached_problem;
    if (!problem) {
      local = probgen::generate_problem(spec.data_source_arch, spec.n_samples,
                                        spec.input_distribution, problem_seed);
      problem = &local;
    }
    const Eigen::VectorXd x0 =
        probgen::init_weights(spec.network_arch, out.x0_seed);
    auto config = optim::OptimizerConfig::defaults(spec.method);
    config.max_gradient_calls = spec.budget;
    out.trace =
        optim::run_fit(spec.network_arch, problem->dataset, x0, config);
  } catch (const std::exception& e) {
    out.failed = true;
    out.error = e.what();
  }
  return out;
}

void fill_aggregates(CellResult& cell) {
  std::vector<double> f_inits, f_opts, calls;
  for (const auto& run : cell.runs) {
    if (run.failed) continue;
    f_inits.push_back(run.trace.f_init);
    f_opts.push_back(run.trace.f_opt);
    calls.push_back(static_cast<double>(run.trace.gradient_calls_used));
  }
  if (f_inits.empty()) {
    throw std::runtime_error("cell failed for every seed" +
                             (cell.runs.empty() || cell.runs[0].error.empty()
                                  ? std::string()
                                  : ": " + cell.runs[0].error));
  }
  cell.f_init_median = aggregate(f_inits, Aggregation::median);
  cell.f_init_mean = aggregate(f_inits, Aggregation::mean);
  cell.f_opt_median = aggregate(f_opts, Aggregation::median);
  cell.f_opt_mean = aggregate(f_opts, Aggregation::mean);
  const bool median = cell.aggregation == Aggregation::median;
  cell.f_init_agg = median ? cell.f_init_median : cell.f_init_mean;
  cell.f_opt_agg = median ? cell.f_opt_median : cell.f_opt_mean;
  cell.gradient_calls_agg = static_cast<std::int64_t>(
      std::llround(aggregate(calls, cell.aggregation)));
}

// Canonical (network variant, data-source variant) block order; indices are
// 0/1/2 for the 1-, 3- and 5-hidden-layer variants.
constexpr std::pair<int, int> kBlocks[] = {{0, 0}, {1, 1}, {2, 2}, {0, 1},
                                           {0, 2}, {1, 0}, {2, 0}};

}  // namespace

std::uint64_t x0_seed_for(std::uint64_t problem_seed,
                          const ArchitectureSpec& network) {
  return rng::derive_seed(
      problem_seed, rng::kStreamInitialPoint ^ arch_fingerprint(network));
}

void CellSpec::validate() const {
  network_arch.validate();
  data_source_arch.validate();
  if (network_arch.input_dim != data_source_arch.input_dim ||
      network_arch.output_dim != data_source_arch.output_dim) {
    throw std::invalid_argument(
        "network and data source must share input/output dimensions");
  }
  if (seeds.empty()) throw std::invalid_argument("cell needs seeds");
  auto sorted = seeds;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
    throw std::invalid_argument("cell seeds must be distinct");
  }
  if (budget < 1) throw std::invalid_argument("budget must be >= 1");
  if (n_samples < 1) throw std::invalid_argument("n_samples must be >= 1");
}

int CellResult::failed_count() const {
  int n = 0;
  for (const auto& r : runs) n += r.failed ? 1 : 0;
  return n;
}

bool CellResult::all_failed() const {
  return !runs.empty() && failed_count() == static_cast<int>(runs.size());
}

CellResult run_cell(const CellSpec& spec, Aggregation agg) {
  spec.validate();
  CellResult cell;
  cell.spec = spec;
  cell.aggregation = agg;
  cell.runs.resize(spec.seeds.size());
  for (std::size_t i = 0; i < spec.seeds.size(); ++i) {
    cell.runs[i] = run_one_seed(spec, spec.seeds[i], nullptr);
  }
  fill_aggregates(cell);
  return cell;
}

MatrixResult run_matrix(const MatrixConfig& config) {
  const auto archs = probgen::size_class_archs(config.size_class,
                                               config.saturation_factor);
  const auto cls = probgen::build_size_class(config.size_class);
  if (config.seed_count < 1) throw std::invalid_argument("need seeds");

  std::vector<std::uint64_t> seeds(static_cast<std::size_t>(config.seed_count));
  for (int i = 0; i < config.seed_count; ++i) {
    seeds[static_cast<std::size_t>(i)] = config.master_seed +
                                         static_cast<std::uint64_t>(i);
  }

  // Problems are pure functions of (source arch, seed); generate each once
  // and share it across every fitting network and method.
  std::vector<probgen::Problem> problems(archs.size() * seeds.size());
  parallel_for(problems.size(), config.workers, [&](std::size_t i) {
    const std::size_t arch_idx = i / seeds.size();
    const std::size_t seed_idx = i % seeds.size();
    problems[i] =
        probgen::generate_problem(archs[arch_idx], cls.data_size,
                                  config.input_distribution, seeds[seed_idx]);
  });

  struct Task {
    std::size_t cell_index;
    std::size_t seed_index;
  };
  std::vector<CellSpec> cell_specs;
  std::vector<std::size_t> cell_source;  // variant index of the data source
  for (const auto& [net_v, src_v] : kBlocks) {
    for (const Method method : config.methods) {
      CellSpec spec;
      spec.network_arch = archs[static_cast<std::size_t>(net_v)];
      spec.data_source_arch = archs[static_cast<std::size_t>(src_v)];
      spec.method = method;
      spec.seeds = seeds;
      spec.budget = config.budget;
      spec.n_samples = cls.data_size;
      spec.input_distribution = config.input_distribution;
      spec.validate();
      cell_specs.push_back(std::move(spec));
      cell_source.push_back(static_cast<std::size_t>(src_v));
    }
  }

  std::vector<Task> tasks;
  tasks.reserve(cell_specs.size() * seeds.size());
  for (std::size_t c = 0; c < cell_specs.size(); ++c) {
    for (std::size_t s = 0; s < seeds.size(); ++s) tasks.push_back({c, s});
  }

  std::vector<SeedRun> results(tasks.size());
  parallel_for(tasks.size(), config.workers, [&](std::size_t i) {
    const auto& task = tasks[i];
    const auto& spec = cell_specs[task.cell_index];
    const auto& problem =
        problems[cell_source[task.cell_index] * seeds.size() +
                 task.seed_index];
    results[i] = run_one_seed(spec, seeds[task.seed_index], &problem);
  });

  MatrixResult out;
  out.config = config;
  out.cells.resize(cell_specs.size());
  for (std::size_t c = 0; c < cell_specs.size(); ++c) {
    CellResult& cell = out.cells[c];
    cell.spec = cell_specs[c];
    cell.aggregation = config.aggregation;
    cell.runs.resize(seeds.size());
    for (std::size_t s = 0; s < seeds.size(); ++s) {
      cell.runs[s] = std::move(results[c * seeds.size() + s]);
    }
    fill_aggregates(cell);
  }
  return out;
}

std::optional<double> ratio_to_cg(double f_opt_method, double f_opt_cg) {
  if (f_opt_cg <= 0.0) return std::nullopt;
  return f_opt_method / f_opt_cg;
}

std::optional<double> deep_shallow_ratio(double deep_net_on_shallow_data,
                                         double shallow_net_on_deep_data) {
  if (shallow_net_on_deep_data <= 0.0) return std::nullopt;
  return deep_net_on_shallow_data / shallow_net_on_deep_data;
}

namespace {

const CellResult* find_cell(const MatrixResult& r, const std::string& network,
                            const std::string& source, Method method) {
  for (const auto& c : r.cells) {
    if (c.spec.method == method && c.spec.network_arch.label == network &&
        c.spec.data_source_arch.label == source) {
      return &c;
    }
  }
  return nullptr;
}

}  // namespace

CrossCheckTable build_table(const MatrixResult& result) {
  CrossCheckTable table;
  table.size_class = result.config.size_class;
  table.aggregation = result.config.aggregation;
  for (const auto& cell : result.cells) {
    TableRow row;
    row.network = cell.spec.network_arch.label;
    row.data_source = cell.spec.data_source_arch.label;
    row.method = cell.spec.method;
    row.gradient_calls = cell.gradient_calls_agg;
    row.f_init_agg = cell.f_init_agg;
    row.f_opt_agg = cell.f_opt_agg;
    row.f_init_median = cell.f_init_median;
    row.f_init_mean = cell.f_init_mean;
    row.f_opt_median = cell.f_opt_median;
    row.f_opt_mean = cell.f_opt_mean;
    row.seeds = static_cast<int>(cell.runs.size());
    row.failed_seeds = cell.failed_count();

    if (cell.spec.method != Method::cg) {
      if (const auto* cg = find_cell(result, row.network, row.data_source,
                                     Method::cg)) {
        row.ratio_to_cg = ratio_to_cg(cell.f_opt_agg, cg->f_opt_agg);
      }
    }
    // Deep/Shallow applies to deep-network-on-shallow-data rows; the
    // counterpart is the shallow network fitted to this network's own data.
    if (cell.spec.network_arch.hidden_count > 1 &&
        cell.spec.data_source_arch.hidden_count == 1) {
      if (const auto* opposite =
              find_cell(result, cell.spec.data_source_arch.label,
                        cell.spec.network_arch.label, cell.spec.method)) {
        row.deep_shallow =
            deep_shallow_ratio(cell.f_opt_agg, opposite->f_opt_agg);
      }
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

SummaryTable build_summary(const MatrixResult& result, Method method) {
  SummaryTable summary;
  summary.size_class = result.config.size_class;
  summary.method = method;
  summary.aggregation = result.config.aggregation;
  const auto archs = probgen::size_class_archs(
      result.config.size_class, result.config.saturation_factor);
  const std::string shallow = archs[0].label;
  for (std::size_t v = 1; v < archs.size(); ++v) {
    const std::string deep = archs[v].label;
    const auto* shallow_on_deep = find_cell(result, shallow, deep, method);
    const auto* deep_on_shallow = find_cell(result, deep, shallow, method);
    if (!shallow_on_deep || !deep_on_shallow) continue;
    SummaryRow row;
    row.shallow = shallow;
    row.deep = deep;
    row.shallow_net_on_deep_data = shallow_on_deep->f_opt_agg;
    row.deep_net_on_shallow_data = deep_on_shallow->f_opt_agg;
    row.ratio = deep_shallow_ratio(row.deep_net_on_shallow_data,
                                   row.shallow_net_on_deep_data);
    summary.rows.push_back(std::move(row));
  }
  return summary;
}

// ---------------------------------------------------------------------------
// Results store.

namespace {

constexpr const char* kResultsFormat = "capcheck-results";
constexpr int kResultsVersion = 1;
constexpr std::size_t kMaxHistoryPoints = 500;

json history_to_json(
    const std::vector<std::pair<std::int64_t, double>>& history) {
  json out = json::array();
  const std::size_t n = history.size();
  if (n == 0) return out;
  std::size_t stride = 1;
  if (n > kMaxHistoryPoints) {
    stride = (n - 1 + kMaxHistoryPoints - 2) / (kMaxHistoryPoints - 1);
  }
  for (std::size_t i = 0; i < n; i += stride) {
    out.push_back(json::array({history[i].first, history[i].second}));
  }
  if ((n - 1) % stride != 0) {
    out.push_back(json::array({history[n - 1].first, history[n - 1].second}));
  }
  return out;
}

json run_to_json(const CellResult& cell, const SeedRun& run,
                 std::size_t seed_index) {
  const auto& t = run.trace;
  json j;
  j["type"] = "run";
  j["network"] = cell.spec.network_arch.label;
  j["data_source"] = cell.spec.data_source_arch.label;
  j["method"] = optim::to_string(cell.spec.method);
  j["seed_index"] = seed_index;
  j["problem_seed"] = run.problem_seed;
  j["x0_seed"] = run.x0_seed;
  j["failed"] = run.failed;
  if (run.failed) {
    j["error"] = run.error;
    return j;
  }
  j["f_init"] = t.f_init;
  j["f_opt"] = t.f_opt;
  j["f_final"] = t.f_final;
  j["gradient_calls"] = t.gradient_calls_used;
  j["objective_only_calls"] = t.objective_only_calls;
  j["iterations"] = t.iterations;
  j["termination"] = optim::to_string(t.termination);
  j["hit_non_finite"] = t.hit_non_finite;
  j["hyperparams"] = json{{"learning_rate", t.config.learning_rate},
                          {"decay_rho", t.config.decay_rho},
                          {"epsilon", t.config.epsilon},
                          {"max_gradient_calls", t.config.max_gradient_calls},
                          {"cg_gradient_tolerance",
                           t.config.cg_gradient_tolerance}};
  j["history"] = history_to_json(t.objective_history);
  return j;
}

optim::Termination termination_from_string(const std::string& s) {
  if (s == "budget_exhausted") return optim::Termination::budget_exhausted;
  if (s == "gradient_tolerance_met")
    return optim::Termination::gradient_tolerance_met;
  if (s == "line_search_failure")
    return optim::Termination::line_search_failure;
  if (s == "aborted_non_finite")
    return optim::Termination::aborted_non_finite;
  throw std::runtime_error("unknown termination: " + s);
}

}  // namespace

void persist(const MatrixResult& result, const std::filesystem::path& path) {
  json header;
  header["format"] = kResultsFormat;
  header["version"] = kResultsVersion;
  header["size_class"] = std::string(1, result.config.size_class);
  json methods = json::array();
  for (const Method m : result.config.methods) {
    methods.push_back(optim::to_string(m));
  }
  header["methods"] = methods;
  header["seed_count"] = result.config.seed_count;
  header["master_seed"] = result.config.master_seed;
  header["budget"] = result.config.budget;
  header["saturation_factor"] = result.config.saturation_factor;
  header["input_distribution"] =
      probgen::to_string(result.config.input_distribution);
  header["aggregation"] = to_string(result.config.aggregation);

  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << header.dump() << "\n";
  for (const auto& cell : result.cells) {
    for (std::size_t s = 0; s < cell.runs.size(); ++s) {
      out << run_to_json(cell, cell.runs[s], s).dump() << "\n";
    }
  }
  if (!out) throw std::runtime_error("short write to " + path.string());
}

MatrixResult load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line)) {
    throw std::runtime_error(path.string() + ": empty results store");
  }
  const json header = json::parse(line);
  if (header.at("format").get<std::string>() != kResultsFormat) {
    throw std::runtime_error(path.string() + ": not a results store");
  }
  if (header.at("version").get<int>() > kResultsVersion) {
    throw std::runtime_error(
        path.string() + ": results version " +
        std::to_string(header.at("version").get<int>()) +
        " is newer than supported version " + std::to_string(kResultsVersion));
  }

  MatrixConfig config;
  config.size_class = header.at("size_class").get<std::string>().at(0);
  config.methods.clear();
  for (const auto& m : header.at("methods")) {
    config.methods.push_back(optim::method_from_string(m.get<std::string>()));
  }
  config.seed_count = header.at("seed_count").get<int>();
  config.master_seed = header.at("master_seed").get<std::uint64_t>();
  config.budget = header.at("budget").get<std::int64_t>();
  config.saturation_factor = header.at("saturation_factor").get<double>();
  config.input_distribution = probgen::input_distribution_from_string(
      header.at("input_distribution").get<std::string>());
  config.aggregation =
      aggregation_from_string(header.at("aggregation").get<std::string>());

  const auto archs = probgen::size_class_archs(config.size_class,
                                               config.saturation_factor);
  const auto cls = probgen::build_size_class(config.size_class);
  auto arch_by_label = [&](const std::string& label) -> ArchitectureSpec {
    for (const auto& a : archs) {
      if (a.label == label) return a;
    }
    throw std::runtime_error("unknown architecture label: " + label);
  };

  std::vector<std::uint64_t> seeds(static_cast<std::size_t>(config.seed_count));
  for (int i = 0; i < config.seed_count; ++i) {
    seeds[static_cast<std::size_t>(i)] =
        config.master_seed + static_cast<std::uint64_t>(i);
  }

  MatrixResult result;
  result.config = config;

  std::map<std::pair<std::string, std::string>, std::size_t> cell_index;
  auto cell_key = [](const json& j) {
    return std::make_pair(
        j.at("network").get<std::string>() + "|" +
            j.at("data_source").get<std::string>(),
        j.at("method").get<std::string>());
  };

  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const json j = json::parse(line);
    if (j.at("type").get<std::string>() != "run") continue;
    const auto key = cell_key(j);
    auto it = cell_index.find(key);
    if (it == cell_index.end()) {
      CellResult cell;
      cell.spec.network_arch = arch_by_label(j.at("network"));
      cell.spec.data_source_arch = arch_by_label(j.at("data_source"));
      cell.spec.method =
          optim::method_from_string(j.at("method").get<std::string>());
      cell.spec.seeds = seeds;
      cell.spec.budget = config.budget;
      cell.spec.n_samples = cls.data_size;
      cell.spec.input_distribution = config.input_distribution;
      cell.aggregation = config.aggregation;
      cell.runs.resize(seeds.size());
      result.cells.push_back(std::move(cell));
      it = cell_index.emplace(key, result.cells.size() - 1).first;
    }
    CellResult& cell = result.cells[it->second];
    const auto seed_index = j.at("seed_index").get<std::size_t>();
    if (seed_index >= cell.runs.size()) {
      throw std::runtime_error("seed index out of range in results store");
    }
    SeedRun& run = cell.runs[seed_index];
    run.problem_seed = j.at("problem_seed").get<std::uint64_t>();
    run.x0_seed = j.at("x0_seed").get<std::uint64_t>();
    run.failed = j.at("failed").get<bool>();
    if (run.failed) {
      run.error = j.at("error").get<std::string>();
      continue;
    }
    TrainTrace& t = run.trace;
    t.method = cell.spec.method;
    t.config = optim::OptimizerConfig::defaults(cell.spec.method);
    const auto& hp = j.at("hyperparams");
    t.config.learning_rate = hp.at("learning_rate").get<double>();
    t.config.decay_rho = hp.at("decay_rho").get<double>();
    t.config.epsilon = hp.at("epsilon").get<double>();
    t.config.max_gradient_calls =
        hp.at("max_gradient_calls").get<std::int64_t>();
    t.config.cg_gradient_tolerance =
        hp.at("cg_gradient_tolerance").get<double>();
    t.f_init = j.at("f_init").get<double>();
    t.f_opt = j.at("f_opt").get<double>();
    t.f_final = j.at("f_final").get<double>();
    t.gradient_calls_used = j.at("gradient_calls").get<std::int64_t>();
    t.objective_only_calls =
        j.at("objective_only_calls").get<std::int64_t>();
    t.iterations = j.at("iterations").get<std::int64_t>();
    t.termination =
        termination_from_string(j.at("termination").get<std::string>());
    t.hit_non_finite = j.at("hit_non_finite").get<bool>();
    t.objective_history.clear();
    for (const auto& point : j.at("history")) {
      t.objective_history.emplace_back(point.at(0).get<std::int64_t>(),
                                       point.at(1).get<double>());
    }
  }

  for (auto& cell : result.cells) {
    fill_aggregates(cell);
  }
  return result;
}

}  // namespace capcheck::experiment
