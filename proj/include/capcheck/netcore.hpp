#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace capcheck::netcore {

/// Thrown when matrix/vector shapes do not fit the architecture. The message
/// names the layer (or input) that failed so CLI users can act on it.
class DimensionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class OutputActivation {
  identity,          // affine output layer (default for MSE regression)
  symmetric_sigmoid  // same squashing as the hidden layers, for sensitivity runs
};

/// Geometry of one fully connected network: input/output widths plus a stack
/// of equally wide hidden layers. `saturation_factor` scales the uniform
/// weight-initialization interval and thereby how nonlinear the hidden units
/// start out.
struct ArchitectureSpec {
  int input_dim = 0;
  int output_dim = 0;
  int hidden_count = 0;  // 0 hidden layers = plain affine map (tests only)
  int hidden_width = 0;  // ignored when hidden_count == 0
  double saturation_factor = 2.0;
  OutputActivation output_activation = OutputActivation::identity;
  std::string label;  // display name, e.g. "A_1"; not used in computation

  /// Widths of all layers, input first, output last.
  std::vector<int> layer_dims() const;

  /// Throws std::invalid_argument when any field is out of range.
  void validate() const;

  std::string display_name() const;
};

bool same_geometry(const ArchitectureSpec& a, const ArchitectureSpec& b);

/// All weights and biases of one network as a single flat vector.
///
/// Layout contract (layer-major, row-major, weights then bias):
///   for each layer l = 1..L:
///     weight matrix W_l, shape (fan_out x fan_in), rows concatenated
///     bias vector b_l, length fan_out
/// A layer maps activations a to act(W_l a + b_l); the output layer applies
/// the configured output activation instead.
using ParameterVector = Eigen::VectorXd;

struct LayerShape {
  int rows = 0;  // fan_out
  int cols = 0;  // fan_in; bias length equals rows
};

std::vector<LayerShape> layer_shapes(const ArchitectureSpec& arch);

/// Closed-form parameter count: sum over layers of (fan_in + 1) * fan_out.
std::int64_t param_count(const ArchitectureSpec& arch);

struct LayerParams {
  Eigen::MatrixXd weights;  // fan_out x fan_in
  Eigen::VectorXd bias;     // fan_out
};
using StructuredParams = std::vector<LayerParams>;

ParameterVector flatten(const StructuredParams& layers);
StructuredParams unflatten(const ParameterVector& values,
                           const ArchitectureSpec& arch);

/// One training set: rows of `inputs` are sample vectors u_i, rows of
/// `targets` the corresponding y_i.
struct Dataset {
  Eigen::MatrixXd inputs;   // n_samples x input_dim
  Eigen::MatrixXd targets;  // n_samples x output_dim

  Eigen::Index n_samples() const { return inputs.rows(); }
  std::int64_t constraint_count() const {
    return static_cast<std::int64_t>(targets.rows()) * targets.cols();
  }
  void validate() const;
};

struct EvalResult {
  double objective = 0.0;
  std::optional<ParameterVector> gradient;
};

enum class Normalization {
  mean,  // average over all n_samples * output_dim residual components
  sum    // raw sum of squared residuals
};

/// Rescaled symmetric sigmoid 2/(1 + exp(-2x)) - 1: odd, unit slope at the
/// origin, saturates to +-1 without overflow.
double activation(double x);

/// Derivative expressed through the activation value a: 1 - a^2.
inline double activation_slope_from_value(double a) { return 1.0 - a * a; }

/// Batch forward pass; rows of `inputs` are samples.
Eigen::MatrixXd forward(const ArchitectureSpec& arch,
                        const ParameterVector& params,
                        const Eigen::MatrixXd& inputs);

/// Mean (or raw-sum) squared error of the network outputs against targets.
EvalResult objective(const ArchitectureSpec& arch, const ParameterVector& params,
                     const Dataset& data,
                     Normalization norm = Normalization::mean);

/// Objective plus its exact gradient via backpropagation, aligned with the
/// flat layout above.
EvalResult gradient(const ArchitectureSpec& arch, const ParameterVector& params,
                    const Dataset& data,
                    Normalization norm = Normalization::mean);

}  // namespace capcheck::netcore
