#include "capcheck/probgen.hpp"

#include "capcheck/rng.hpp"

#include <json.hpp>

#include <fstream>
#include <stdexcept>

namespace capcheck::probgen {

using json = nlohmann::ordered_json;

std::string to_string(InputDistribution d) {
  return d == InputDistribution::standard_normal ? "standard_normal"
                                                 : "uniform_pm1";
}

InputDistribution input_distribution_from_string(const std::string& s) {
  if (s == "standard_normal" || s == "normal")
    return InputDistribution::standard_normal;
  if (s == "uniform_pm1" || s == "uniform")
    return InputDistribution::uniform_pm1;
  throw std::invalid_argument("unknown input distribution: " + s);
}

ParameterVector init_weights(const ArchitectureSpec& arch,
                             std::uint64_t seed) {
  arch.validate();
  rng::Rng gen(seed);
  ParameterVector values(netcore::param_count(arch));
  Eigen::Index offset = 0;
  for (const auto& shape : netcore::layer_shapes(arch)) {
    const double bound =
        arch.saturation_factor / std::sqrt(static_cast<double>(shape.cols) + 1.0);
    const Eigen::Index n =
        static_cast<Eigen::Index>(shape.rows) * shape.cols + shape.rows;
    for (Eigen::Index i = 0; i < n; ++i) {
      values[offset + i] = gen.uniform(-bound, bound);
    }
    offset += n;
  }
  return values;
}

Problem generate_problem(const ArchitectureSpec& arch, int n_samples,
                         InputDistribution distribution, std::uint64_t seed) {
  arch.validate();
  if (n_samples < 1) throw std::invalid_argument("n_samples must be >= 1");

  Problem p;
  p.arch = arch;
  p.seed = seed;
  p.input_distribution = distribution;
  p.generating_params =
      init_weights(arch, rng::derive_seed(seed, rng::kStreamWeights));

  rng::Rng gen(rng::derive_seed(seed, rng::kStreamInputs));
  Eigen::MatrixXd inputs(n_samples, arch.input_dim);
  // Row-major fill so the draw order is documented: sample by sample.
  for (int i = 0; i < n_samples; ++i) {
    for (int j = 0; j < arch.input_dim; ++j) {
      inputs(i, j) = distribution == InputDistribution::standard_normal
                         ? gen.gaussian()
                         : gen.uniform(-1.0, 1.0);
    }
  }
  p.dataset.inputs = std::move(inputs);
  p.dataset.targets =
      netcore::forward(arch, p.generating_params, p.dataset.inputs);
  return p;
}

SizeClassSpec build_size_class(char name) {
  switch (name) {
    case 'A':
      return {'A', 100, 50, 80, {{1, 20}, {3, 16}, {5, 14}}};
    case 'B':
      return {'B', 300, 150, 240, {{1, 60}, {3, 49}, {5, 43}}};
    case 'C':
      return {'C', 1000, 500, 800, {{1, 200}, {3, 164}, {5, 144}}};
    default:
      throw std::invalid_argument(std::string("unknown size class: ") + name);
  }
}

ArchitectureSpec make_arch(const SizeClassSpec& cls, int variant_index,
                           double saturation_factor) {
  if (variant_index < 0 ||
      variant_index >= static_cast<int>(cls.variants.size())) {
    throw std::invalid_argument("variant index out of range");
  }
  const auto [hidden_count, hidden_width] = cls.variants[variant_index];
  ArchitectureSpec arch;
  arch.input_dim = cls.input_dim;
  arch.output_dim = cls.output_dim;
  arch.hidden_count = hidden_count;
  arch.hidden_width = hidden_width;
  arch.saturation_factor = saturation_factor;
  arch.label = std::string(1, cls.name) + "_" + std::to_string(hidden_count);
  return arch;
}

std::vector<ArchitectureSpec> size_class_archs(char name,
                                               double saturation_factor) {
  const auto cls = build_size_class(name);
  std::vector<ArchitectureSpec> archs;
  for (int i = 0; i < static_cast<int>(cls.variants.size()); ++i) {
    archs.push_back(make_arch(cls, i, saturation_factor));
  }
  return archs;
}

namespace {

constexpr const char* kProblemFormat = "capcheck-problem";
constexpr int kProblemVersion = 1;

json arch_to_json(const ArchitectureSpec& a) {
  return json{{"input_dim", a.input_dim},
              {"output_dim", a.output_dim},
              {"hidden_count", a.hidden_count},
              {"hidden_width", a.hidden_width},
              {"saturation_factor", a.saturation_factor},
              {"output_activation",
               a.output_activation == netcore::OutputActivation::identity
                   ? "identity"
                   : "symmetric_sigmoid"},
              {"label", a.label}};
}

ArchitectureSpec arch_from_json(const json& j) {
  ArchitectureSpec a;
  a.input_dim = j.at("input_dim").get<int>();
  a.output_dim = j.at("output_dim").get<int>();
  a.hidden_count = j.at("hidden_count").get<int>();
  a.hidden_width = j.at("hidden_width").get<int>();
  a.saturation_factor = j.at("saturation_factor").get<double>();
  a.output_activation = j.at("output_activation").get<std::string>() ==
                                "identity"
                            ? netcore::OutputActivation::identity
                            : netcore::OutputActivation::symmetric_sigmoid;
  a.label = j.at("label").get<std::string>();
  return a;
}

json matrix_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const json& j) {
  const Eigen::Index rows = static_cast<Eigen::Index>(j.size());
  if (rows == 0) return Eigen::MatrixXd(0, 0);
  const Eigen::Index cols = static_cast<Eigen::Index>(j.at(0).size());
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const auto& row = j.at(static_cast<std::size_t>(i));
    if (static_cast<Eigen::Index>(row.size()) != cols) {
      throw std::runtime_error("ragged matrix in problem file");
    }
    for (Eigen::Index c = 0; c < cols; ++c) {
      m(i, c) = row.at(static_cast<std::size_t>(c)).get<double>();
    }
  }
  return m;
}

}  // namespace

void save_problem(const Problem& p, const std::filesystem::path& path,
                  bool with_arrays) {
  json j;
  j["format"] = kProblemFormat;
  j["version"] = kProblemVersion;
  j["arch"] = arch_to_json(p.arch);
  j["seed"] = p.seed;
  j["input_distribution"] = to_string(p.input_distribution);
  j["n_samples"] = static_cast<std::int64_t>(p.dataset.n_samples());
  j["with_arrays"] = with_arrays;
  if (with_arrays) {
    j["generating_params"] = std::vector<double>(
        p.generating_params.data(),
        p.generating_params.data() + p.generating_params.size());
    j["inputs"] = matrix_to_json(p.dataset.inputs);
    j["targets"] = matrix_to_json(p.dataset.targets);
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump() << "\n";
  if (!out) throw std::runtime_error("short write to " + path.string());
}

Problem load_problem(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  json j;
  in >> j;
  if (j.at("format").get<std::string>() != kProblemFormat) {
    throw std::runtime_error(path.string() + ": not a problem file");
  }
  if (j.at("version").get<int>() > kProblemVersion) {
    throw std::runtime_error(
        path.string() + ": problem file version " +
        std::to_string(j.at("version").get<int>()) +
        " is newer than supported version " + std::to_string(kProblemVersion));
  }
  const auto arch = arch_from_json(j.at("arch"));
  const auto seed = j.at("seed").get<std::uint64_t>();
  const auto dist =
      input_distribution_from_string(j.at("input_distribution"));
  const auto n_samples = j.at("n_samples").get<int>();

  if (!j.at("with_arrays").get<bool>()) {
    return generate_problem(arch, n_samples, dist, seed);
  }

  Problem p;
  p.arch = arch;
  p.seed = seed;
  p.input_distribution = dist;
  const auto& w = j.at("generating_params");
  p.generating_params.resize(static_cast<Eigen::Index>(w.size()));
  for (Eigen::Index i = 0; i < p.generating_params.size(); ++i) {
    p.generating_params[i] = w.at(static_cast<std::size_t>(i)).get<double>();
  }
  p.dataset.inputs = matrix_from_json(j.at("inputs"));
  p.dataset.targets = matrix_from_json(j.at("targets"));
  p.dataset.validate();
  return p;
}

}  // namespace capcheck::probgen
