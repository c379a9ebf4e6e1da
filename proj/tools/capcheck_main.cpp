// capcheck command line: generate problems, fit networks, run cross-check
// matrices and render result tables.

#include "capcheck/experiment.hpp"
#include "capcheck/netcore.hpp"
#include "capcheck/optim.hpp"
#include "capcheck/probgen.hpp"
#include "capcheck/report.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace capcheck;

namespace {

// Exit codes, also documented in the README.
constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;
constexpr int kExitPartial = 4;

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << content;
  if (!out) throw IoError("short write to " + path.string());
}

std::vector<optim::Method> parse_methods(const std::string& csv) {
  std::vector<optim::Method> methods;
  std::istringstream in(csv);
  std::string token;
  while (std::getline(in, token, ',')) {
    if (!token.empty()) methods.push_back(optim::method_from_string(token));
  }
  if (methods.empty()) throw std::invalid_argument("no methods given");
  return methods;
}

netcore::ArchitectureSpec arch_by_label(const std::string& label,
                                        double saturation_factor) {
  if (label.size() < 3 || label[1] != '_') {
    throw std::invalid_argument("network spec must look like A_1, B_3, C_5");
  }
  const char size = label[0];
  const int depth = std::stoi(label.substr(2));
  const auto cls = probgen::build_size_class(size);
  for (int i = 0; i < static_cast<int>(cls.variants.size()); ++i) {
    if (cls.variants[static_cast<std::size_t>(i)].first == depth) {
      return probgen::make_arch(cls, i, saturation_factor);
    }
  }
  throw std::invalid_argument("unknown depth variant in " + label);
}

// --- gen ---------------------------------------------------------------

struct GenOptions {
  std::string size = "A";
  int seeds = 15;
  std::uint64_t master_seed = 1;
  double wf = 2.0;
  std::string input_dist = "normal";
  std::string out;
  bool no_arrays = false;
};

int cmd_gen(const GenOptions& opt) {
  const auto dist = probgen::input_distribution_from_string(opt.input_dist);
  const auto cls = probgen::build_size_class(opt.size.at(0));
  const auto archs = probgen::size_class_archs(opt.size.at(0), opt.wf);

  const fs::path dir(opt.out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string());

  std::ostringstream manifest;
  for (const auto& arch : archs) {
    for (int s = 0; s < opt.seeds; ++s) {
      const std::uint64_t seed = opt.master_seed + static_cast<std::uint64_t>(s);
      const auto problem =
          probgen::generate_problem(arch, cls.data_size, dist, seed);
      char name[64];
      std::snprintf(name, sizeof name, "%s_seed%03d.problem.json",
                    arch.label.c_str(), s);
      const fs::path path = dir / name;
      probgen::save_problem(problem, path, !opt.no_arrays);
      const std::string bytes = read_file(path);
      char line[160];
      std::snprintf(line, sizeof line, "%s  %zu bytes  fnv64:%016llx\n", name,
                    bytes.size(),
                    static_cast<unsigned long long>(fnv1a64(bytes)));
      manifest << line;
    }
  }
  write_file(dir / "manifest.txt", manifest.str());
  std::cout << manifest.str();
  std::cout << "wrote " << archs.size() * static_cast<std::size_t>(opt.seeds)
            << " problem files to " << dir.string() << "\n";
  return kExitOk;
}

// --- fit ---------------------------------------------------------------

struct FitOptions {
  std::string problem;
  std::string network;
  std::string method = "cg";
  std::int64_t budget = 2000;
  std::uint64_t x0_seed = 0;
  bool x0_seed_set = false;
  std::string out;
};

int cmd_fit(const FitOptions& opt) {
  if (!fs::exists(opt.problem)) {
    throw IoError("cannot read " + opt.problem);
  }
  const auto problem = probgen::load_problem(opt.problem);
  const auto network =
      arch_by_label(opt.network, problem.arch.saturation_factor);
  if (network.input_dim != problem.arch.input_dim ||
      network.output_dim != problem.arch.output_dim) {
    std::ostringstream os;
    os << "network " << network.label << " ("
       << network.input_dim << " in, " << network.output_dim
       << " out) does not fit problem " << problem.arch.label << " ("
       << problem.arch.input_dim << " in, " << problem.arch.output_dim
       << " out)";
    throw netcore::DimensionError(os.str());
  }

  const std::uint64_t x0_seed =
      opt.x0_seed_set ? opt.x0_seed
                      : experiment::x0_seed_for(problem.seed, network);
  const Eigen::VectorXd x0 = probgen::init_weights(network, x0_seed);
  auto config = optim::OptimizerConfig::defaults(
      optim::method_from_string(opt.method));
  config.max_gradient_calls = opt.budget;

  const auto trace = optim::run_fit(network, problem.dataset, x0, config);

  std::cout << "network " << network.label << "  data " << problem.arch.label
            << "  method " << opt.method << "\n";
  std::cout << "f_init " << trace.f_init << "  f_opt " << trace.f_opt
            << "  gradient_calls " << trace.gradient_calls_used
            << "  termination " << optim::to_string(trace.termination)
            << "\n";

  if (!opt.out.empty()) {
    nlohmann::ordered_json j;
    j["type"] = "fit";
    j["network"] = network.label;
    j["data_source"] = problem.arch.label;
    j["problem_seed"] = problem.seed;
    j["x0_seed"] = x0_seed;
    j["method"] = opt.method;
    j["budget"] = opt.budget;
    j["f_init"] = trace.f_init;
    j["f_opt"] = trace.f_opt;
    j["f_final"] = trace.f_final;
    j["gradient_calls"] = trace.gradient_calls_used;
    j["iterations"] = trace.iterations;
    j["termination"] = optim::to_string(trace.termination);
    std::ofstream out(opt.out, std::ios::app);
    if (!out) throw IoError("cannot write " + opt.out);
    out << j.dump() << "\n";
  }
  return kExitOk;
}

// --- crosscheck / report -------------------------------------------------

struct CrosscheckOptions {
  std::string size = "A";
  std::string methods = "adadelta,rmsprop,sgd,cg";
  int seeds = 15;
  std::int64_t budget = 2000;
  double wf = 2.0;
  std::string input_dist = "normal";
  std::string agg = "median";
  std::uint64_t master_seed = 1;
  std::string out;
  int workers = 0;
  std::string format = "txt";
};

void write_tables(const experiment::MatrixResult& result, const fs::path& dir,
                  report::Format fmt, bool echo) {
  const auto table = experiment::build_table(result);
  optim::Method summary_method = result.config.methods.front();
  for (const auto m : result.config.methods) {
    if (m == optim::Method::rmsprop) summary_method = m;
  }
  const auto summary = experiment::build_summary(result, summary_method);

  const std::string detail = report::render_detail(table, fmt);
  const std::string sum = report::render_summary(summary, fmt);
  write_file(dir / ("detail" + report::file_extension(fmt)), detail);
  write_file(dir / ("summary" + report::file_extension(fmt)), sum);
  if (echo) {
    std::cout << report::render_detail(table, report::Format::txt) << "\n"
              << "summary (" << optim::to_string(summary_method) << ")\n"
              << report::render_summary(summary, report::Format::txt);
  }
}

int cmd_crosscheck(const CrosscheckOptions& opt) {
  experiment::MatrixConfig config;
  config.size_class = opt.size.at(0);
  config.methods = parse_methods(opt.methods);
  config.seed_count = opt.seeds;
  config.master_seed = opt.master_seed;
  config.budget = opt.budget;
  config.saturation_factor = opt.wf;
  config.input_distribution =
      probgen::input_distribution_from_string(opt.input_dist);
  config.aggregation = experiment::aggregation_from_string(opt.agg);
  config.workers = opt.workers;

  const fs::path dir(opt.out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string());

  const auto result = experiment::run_matrix(config);
  experiment::persist(result, dir / "results.jsonl");
  write_tables(result, dir, report::format_from_string(opt.format), true);

  int failed = 0;
  for (const auto& cell : result.cells) failed += cell.failed_count();
  if (failed > 0) {
    std::cerr << failed << " seed runs failed; see results.jsonl\n";
    return kExitPartial;
  }
  return kExitOk;
}

struct ReportOptions {
  std::string store;
  std::string format = "txt";
  std::string out;
};

int cmd_report(const ReportOptions& opt) {
  if (!fs::exists(opt.store)) {
    throw IoError("cannot read " + opt.store);
  }
  const auto result = experiment::load(opt.store);
  if (result.cells.empty()) {
    throw IoError("results store " + opt.store + " contains no runs");
  }
  const auto fmt = report::format_from_string(opt.format);
  if (!opt.out.empty()) {
    const fs::path dir(opt.out);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string());
    write_tables(result, dir, fmt, false);
    std::cout << "wrote detail" << report::file_extension(fmt)
              << " and summary" << report::file_extension(fmt) << " to "
              << dir.string() << "\n";
  } else {
    const auto table = experiment::build_table(result);
    optim::Method summary_method = result.config.methods.front();
    for (const auto m : result.config.methods) {
      if (m == optim::Method::rmsprop) summary_method = m;
    }
    std::cout << report::render_detail(table, fmt);
    std::cout << report::render_summary(
        experiment::build_summary(result, summary_method), fmt);
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"capcheck: known-minimum regression benchmarks for shallow "
               "and deep fully connected networks"};
  app.require_subcommand(1);
  app.set_config("--config", "", "read defaults from a key/value file");

  GenOptions gen;
  auto* cmd_g = app.add_subcommand("gen", "generate problem files");
  cmd_g->add_option("--size", gen.size, "size class: A, B or C")
      ->check(CLI::IsMember({"A", "B", "C"}));
  cmd_g->add_option("--seeds", gen.seeds, "seeds per architecture")
      ->check(CLI::PositiveNumber);
  cmd_g->add_option("--master-seed", gen.master_seed, "base seed");
  cmd_g->add_option("--wf", gen.wf, "saturation factor w_f")
      ->check(CLI::PositiveNumber);
  cmd_g->add_option("--input-dist", gen.input_dist, "normal or uniform");
  cmd_g->add_option("--out", gen.out, "output directory")
      ->envname("CAPCHECK_OUT")
      ->required();
  cmd_g->add_flag("--no-arrays", gen.no_arrays,
                  "store only (spec, seed); arrays are regenerated on load");

  FitOptions fit;
  auto* cmd_f = app.add_subcommand("fit", "fit one network to one problem");
  cmd_f->add_option("--problem", fit.problem, "problem file")->required();
  cmd_f->add_option("--network", fit.network, "network spec, e.g. A_3")
      ->required();
  cmd_f->add_option("--method", fit.method, "sgd|rmsprop|adadelta|cg");
  cmd_f->add_option("--budget", fit.budget, "gradient-call budget")
      ->check(CLI::PositiveNumber);
  cmd_f->add_option("--x0-seed", fit.x0_seed, "override start-point seed")
      ->each([&fit](const std::string&) { fit.x0_seed_set = true; });
  cmd_f->add_option("--out", fit.out, "append trace record to this file");

  CrosscheckOptions cc;
  auto* cmd_c =
      app.add_subcommand("crosscheck", "run the full cross-check matrix");
  cmd_c->add_option("--size", cc.size, "size class: A, B or C")
      ->check(CLI::IsMember({"A", "B", "C"}));
  cmd_c->add_option("--methods", cc.methods, "comma list of methods");
  cmd_c->add_option("--seeds", cc.seeds, "seeds per cell")
      ->check(CLI::PositiveNumber);
  cmd_c->add_option("--budget", cc.budget, "gradient-call budget")
      ->check(CLI::PositiveNumber);
  cmd_c->add_option("--wf", cc.wf, "saturation factor w_f")
      ->check(CLI::PositiveNumber);
  cmd_c->add_option("--input-dist", cc.input_dist, "normal or uniform");
  cmd_c->add_option("--agg", cc.agg, "median or mean");
  cmd_c->add_option("--master-seed", cc.master_seed, "base seed");
  cmd_c->add_option("--out", cc.out, "output directory")
      ->envname("CAPCHECK_OUT")
      ->required();
  cmd_c->add_option("--workers", cc.workers,
                    "worker threads (0 = logical cores)");
  cmd_c->add_option("--format", cc.format, "csv, md or txt")
      ->check(CLI::IsMember({"csv", "md", "txt"}));

  ReportOptions rep;
  auto* cmd_r =
      app.add_subcommand("report", "render tables from a results store");
  cmd_r->add_option("--store", rep.store, "results.jsonl path")->required();
  cmd_r->add_option("--format", rep.format, "csv, md or txt")
      ->check(CLI::IsMember({"csv", "md", "txt"}));
  cmd_r->add_option("--out", rep.out, "output directory (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (app.got_subcommand(cmd_g)) return cmd_gen(gen);
    if (app.got_subcommand(cmd_f)) return cmd_fit(fit);
    if (app.got_subcommand(cmd_c)) return cmd_crosscheck(cc);
    if (app.got_subcommand(cmd_r)) return cmd_report(rep);
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitConfig;
}
