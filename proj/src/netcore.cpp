#include "capcheck/netcore.hpp"

#include <cmath>
#include <sstream>

namespace capcheck::netcore {

namespace {

using RowMajorMap =
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                   Eigen::RowMajor>>;
using RowMajorMutMap =
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                             Eigen::RowMajor>>;

[[noreturn]] void throw_layer_mismatch(int layer, const std::string& what,
                                       Eigen::Index expected,
                                       Eigen::Index actual) {
  std::ostringstream os;
  os << "layer " << layer << ": " << what << " expected " << expected
     << ", got " << actual;
  throw DimensionError(os.str());
}

void check_params_length(const ArchitectureSpec& arch,
                         const ParameterVector& params) {
  const auto expected = param_count(arch);
  if (params.size() != expected) {
    std::ostringstream os;
    os << "parameter vector length " << params.size() << " does not match "
       << "architecture (" << expected << " parameters)";
    throw DimensionError(os.str());
  }
}

void check_input_cols(const ArchitectureSpec& arch,
                      const Eigen::MatrixXd& inputs) {
  if (inputs.cols() != arch.input_dim) {
    throw_layer_mismatch(1, "input width", arch.input_dim, inputs.cols());
  }
}

}  // namespace

std::vector<int> ArchitectureSpec::layer_dims() const {
  std::vector<int> dims;
  dims.reserve(static_cast<std::size_t>(hidden_count) + 2);
  dims.push_back(input_dim);
  for (int i = 0; i < hidden_count; ++i) dims.push_back(hidden_width);
  dims.push_back(output_dim);
  return dims;
}

void ArchitectureSpec::validate() const {
  if (input_dim < 1) throw std::invalid_argument("input_dim must be >= 1");
  if (output_dim < 1) throw std::invalid_argument("output_dim must be >= 1");
  if (hidden_count < 0)
    throw std::invalid_argument("hidden_count must be >= 0");
  if (hidden_count > 0 && hidden_width < 1)
    throw std::invalid_argument("hidden_width must be >= 1");
  if (!(saturation_factor > 0.0))
    throw std::invalid_argument("saturation_factor must be > 0");
}

std::string ArchitectureSpec::display_name() const {
  if (!label.empty()) return label;
  std::ostringstream os;
  os << input_dim << "-" << hidden_count << "x" << hidden_width << "-"
     << output_dim;
  return os.str();
}

bool same_geometry(const ArchitectureSpec& a, const ArchitectureSpec& b) {
  return a.input_dim == b.input_dim && a.output_dim == b.output_dim &&
         a.hidden_count == b.hidden_count && a.hidden_width == b.hidden_width;
}

std::vector<LayerShape> layer_shapes(const ArchitectureSpec& arch) {
  arch.validate();
  const auto dims = arch.layer_dims();
  std::vector<LayerShape> shapes(dims.size() - 1);
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    shapes[l] = LayerShape{dims[l + 1], dims[l]};
  }
  return shapes;
}

std::int64_t param_count(const ArchitectureSpec& arch) {
  std::int64_t total = 0;
  for (const auto& s : layer_shapes(arch)) {
    total += static_cast<std::int64_t>(s.cols) * s.rows + s.rows;
  }
  return total;
}

ParameterVector flatten(const StructuredParams& layers) {
  Eigen::Index total = 0;
  for (const auto& l : layers) total += l.weights.size() + l.bias.size();
  ParameterVector out(total);
  Eigen::Index offset = 0;
  for (const auto& l : layers) {
    if (l.bias.size() != l.weights.rows()) {
      throw DimensionError("bias length does not match weight rows");
    }
    RowMajorMutMap(out.data() + offset, l.weights.rows(), l.weights.cols()) =
        l.weights;
    offset += l.weights.size();
    out.segment(offset, l.bias.size()) = l.bias;
    offset += l.bias.size();
  }
  return out;
}

StructuredParams unflatten(const ParameterVector& values,
                           const ArchitectureSpec& arch) {
  check_params_length(arch, values);
  StructuredParams layers;
  const auto shapes = layer_shapes(arch);
  layers.reserve(shapes.size());
  Eigen::Index offset = 0;
  for (const auto& s : shapes) {
    LayerParams lp;
    lp.weights = RowMajorMap(values.data() + offset, s.rows, s.cols);
    offset += static_cast<Eigen::Index>(s.rows) * s.cols;
    lp.bias = values.segment(offset, s.rows);
    offset += s.rows;
    layers.push_back(std::move(lp));
  }
  return layers;
}

void Dataset::validate() const {
  if (inputs.rows() < 1) throw DimensionError("dataset needs n_samples >= 1");
  if (inputs.rows() != targets.rows()) {
    std::ostringstream os;
    os << "inputs have " << inputs.rows() << " rows, targets "
       << targets.rows();
    throw DimensionError(os.str());
  }
}

double activation(double x) {
  // 2 s(2x) - 1 with s the logistic function. exp(-2x) may round to inf for
  // very negative x; the expression then evaluates to exactly -1.
  const double e = std::exp(-2.0 * x);
  return 2.0 / (1.0 + e) - 1.0;
}

namespace {

// Shared forward sweep. When `keep` is non-null, stores the post-activation
// of every layer (input first) for backpropagation.
Eigen::MatrixXd forward_impl(const ArchitectureSpec& arch,
                             const ParameterVector& params,
                             const Eigen::MatrixXd& inputs,
                             std::vector<Eigen::MatrixXd>* keep) {
  const auto shapes = layer_shapes(arch);
  check_params_length(arch, params);
  check_input_cols(arch, inputs);

  Eigen::MatrixXd acts = inputs;
  if (keep) keep->push_back(acts);
  Eigen::Index offset = 0;
  for (std::size_t l = 0; l < shapes.size(); ++l) {
    const auto& s = shapes[l];
    if (acts.cols() != s.cols) {
      throw_layer_mismatch(static_cast<int>(l) + 1, "fan-in", s.cols,
                           acts.cols());
    }
    RowMajorMap weights(params.data() + offset, s.rows, s.cols);
    offset += static_cast<Eigen::Index>(s.rows) * s.cols;
    const auto bias = params.segment(offset, s.rows);
    offset += s.rows;
    Eigen::MatrixXd z = acts * weights.transpose();
    z.rowwise() += bias.transpose();
    const bool squash = l + 1 < shapes.size() ||
                        arch.output_activation ==
                            OutputActivation::symmetric_sigmoid;
    if (squash) {
      acts = z.unaryExpr([](double v) { return activation(v); });
    } else {
      acts = std::move(z);
    }
    if (keep) keep->push_back(acts);
  }
  return acts;
}

double residual_scale(const Dataset& data, Normalization norm) {
  return norm == Normalization::mean
             ? 1.0 / static_cast<double>(data.constraint_count())
             : 1.0;
}

}  // namespace

Eigen::MatrixXd forward(const ArchitectureSpec& arch,
                        const ParameterVector& params,
                        const Eigen::MatrixXd& inputs) {
  return forward_impl(arch, params, inputs, nullptr);
}

EvalResult objective(const ArchitectureSpec& arch, const ParameterVector& params,
                     const Dataset& data, Normalization norm) {
  data.validate();
  if (data.targets.cols() != arch.output_dim) {
    throw_layer_mismatch(arch.hidden_count + 1, "target width",
                         arch.output_dim, data.targets.cols());
  }
  const Eigen::MatrixXd out = forward(arch, params, data.inputs);
  const Eigen::MatrixXd residual = out - data.targets;
  EvalResult res;
  res.objective = residual.squaredNorm() * residual_scale(data, norm);
  return res;
}

EvalResult gradient(const ArchitectureSpec& arch, const ParameterVector& params,
                    const Dataset& data, Normalization norm) {
  data.validate();
  if (data.targets.cols() != arch.output_dim) {
    throw_layer_mismatch(arch.hidden_count + 1, "target width",
                         arch.output_dim, data.targets.cols());
  }
  std::vector<Eigen::MatrixXd> acts;
  const Eigen::MatrixXd out = forward_impl(arch, params, data.inputs, &acts);

  const double scale = residual_scale(data, norm);
  Eigen::MatrixXd residual = out - data.targets;

  EvalResult res;
  res.objective = residual.squaredNorm() * scale;

  const auto shapes = layer_shapes(arch);
  ParameterVector grad(params.size());

  // dE/d(output) for the squared-error objective.
  Eigen::MatrixXd delta = (2.0 * scale) * residual;
  if (arch.output_activation == OutputActivation::symmetric_sigmoid) {
    delta = delta.cwiseProduct(
        acts.back().unaryExpr([](double a) { return 1.0 - a * a; }));
  }

  // Walk the layers backwards; `offsets[l]` is the flat index of layer l.
  std::vector<Eigen::Index> offsets(shapes.size());
  Eigen::Index offset = 0;
  for (std::size_t l = 0; l < shapes.size(); ++l) {
    offsets[l] = offset;
    offset += static_cast<Eigen::Index>(shapes[l].rows) * shapes[l].cols +
              shapes[l].rows;
  }

  for (std::size_t l = shapes.size(); l-- > 0;) {
    const auto& s = shapes[l];
    const Eigen::MatrixXd& below = acts[l];  // input to layer l
    RowMajorMutMap grad_w(grad.data() + offsets[l], s.rows, s.cols);
    grad_w = delta.transpose() * below;
    grad.segment(offsets[l] + static_cast<Eigen::Index>(s.rows) * s.cols,
                 s.rows) = delta.colwise().sum();
    if (l > 0) {
      // `below` is the squashed output of layer l-1, so the slope of its
      // activation is available as 1 - a^2 without keeping pre-activations.
      RowMajorMap weights(params.data() + offsets[l], s.rows, s.cols);
      delta = (delta * weights)
                  .cwiseProduct(below.unaryExpr(
                      [](double a) { return 1.0 - a * a; }));
    }
  }

  res.gradient = std::move(grad);
  return res;
}

}  // namespace capcheck::netcore
