#pragma once

#include "capcheck/netcore.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace capcheck::probgen {

using netcore::ArchitectureSpec;
using netcore::Dataset;
using netcore::ParameterVector;

enum class InputDistribution { standard_normal, uniform_pm1 };

std::string to_string(InputDistribution d);
InputDistribution input_distribution_from_string(const std::string& s);

/// A generated training problem: the dataset plus everything needed to
/// reproduce it bit for bit. By construction the squared-error objective of
/// `arch` at `generating_params` is exactly zero.
struct Problem {
  ArchitectureSpec arch;
  Dataset dataset;
  ParameterVector generating_params;  // w_0
  std::uint64_t seed = 0;
  InputDistribution input_distribution = InputDistribution::standard_normal;
};

/// Uniform init of every weight and bias of a layer with fan-in n from the
/// open interval (-w_f/sqrt(n+1), +w_f/sqrt(n+1)), where w_f is the
/// architecture's saturation factor. Draws happen in flat-layout order.
ParameterVector init_weights(const ArchitectureSpec& arch, std::uint64_t seed);

/// Draws w_0 and random inputs, computes targets with the network itself.
/// Sub-seeds for weights and inputs are derived from `seed` (see rng.hpp),
/// so the result is a pure function of (arch, n_samples, distribution, seed).
Problem generate_problem(const ArchitectureSpec& arch, int n_samples,
                         InputDistribution distribution, std::uint64_t seed);

/// One of the three benchmark size classes with its depth variants.
struct SizeClassSpec {
  char name = 0;  // 'A', 'B' or 'C'
  int input_dim = 0;
  int output_dim = 0;
  int data_size = 0;
  // (hidden_count, hidden_width) for the 1-, 3- and 5-layer variants.
  std::vector<std::pair<int, int>> variants;
};

/// Hard-coded benchmark geometry for size classes A, B and C.
SizeClassSpec build_size_class(char name);

/// ArchitectureSpec for one depth variant of a size class, labelled "X_d".
ArchitectureSpec make_arch(const SizeClassSpec& cls, int variant_index,
                           double saturation_factor);

/// All depth variants of a size class.
std::vector<ArchitectureSpec> size_class_archs(char name,
                                               double saturation_factor);

// ---------------------------------------------------------------------------
// Problem files. JSON, one object per file, version field "capcheck-problem".
// With `with_arrays` false only (spec, seed) are stored and the loader
// regenerates the arrays, which is exact because generation is pure.

void save_problem(const Problem& p, const std::filesystem::path& path,
                  bool with_arrays = true);
Problem load_problem(const std::filesystem::path& path);

}  // namespace capcheck::probgen
