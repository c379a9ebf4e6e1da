#pragma once

// Shared test oracles. Everything here is deliberately independent of the
// library's computation paths: finite differences for gradients, dense
// linear solves for quadratic minimizers.

#include "capcheck/netcore.hpp"
#include "capcheck/optim.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <random>

namespace testutil {

// Central finite differences of an arbitrary scalar function.
template <typename F>
Eigen::VectorXd central_difference_gradient(const F& f,
                                            const Eigen::VectorXd& x,
                                            double step = 1e-6) {
  Eigen::VectorXd grad(x.size());
  Eigen::VectorXd probe = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + step;
    const double fp = f(probe);
    probe[i] = orig - step;
    const double fm = f(probe);
    probe[i] = orig;
    grad[i] = (fp - fm) / (2.0 * step);
  }
  return grad;
}

// Relative disagreement between analytic and finite-difference gradients.
// The floor keeps finite-difference roundoff (~1e-10 absolute here) from
// dominating coordinates whose true value is essentially zero.
inline double gradient_rel_error(const Eigen::VectorXd& analytic,
                                 const Eigen::VectorXd& fd,
                                 double floor = 1e-4) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < analytic.size(); ++i) {
    const double denom =
        std::max(std::abs(analytic[i]) + std::abs(fd[i]), floor);
    worst = std::max(worst, std::abs(analytic[i] - fd[i]) / denom);
  }
  return worst;
}

// Random SPD quadratic 0.5 x'Ax - b'x with eigenvalues drawn uniformly from
// [1, cond] (extremes pinned), rotated by a random orthogonal basis.
struct Quadratic {
  Eigen::MatrixXd A;
  Eigen::VectorXd b;

  double eval(const Eigen::VectorXd& x, Eigen::VectorXd* grad) const {
    Eigen::VectorXd Ax = A * x;
    if (grad) *grad = Ax - b;
    return 0.5 * x.dot(Ax) - b.dot(x);
  }

  Eigen::VectorXd minimizer() const { return A.ldlt().solve(b); }

  capcheck::optim::ObjectiveFn objective() const {
    return [this](const Eigen::VectorXd& x, Eigen::VectorXd* g) {
      return eval(x, g);
    };
  }
};

inline Quadratic make_quadratic(int dim, double cond, unsigned seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd m(dim, dim);
  for (int i = 0; i < dim; ++i) {
    for (int j = 0; j < dim; ++j) m(i, j) = normal(gen);
  }
  const Eigen::HouseholderQR<Eigen::MatrixXd> qr(m);
  Eigen::MatrixXd q = qr.householderQ();

  Eigen::VectorXd eigs(dim);
  std::uniform_real_distribution<double> uni(1.0, cond);
  for (int i = 0; i < dim; ++i) eigs[i] = uni(gen);
  if (dim > 0) eigs[0] = 1.0;
  if (dim > 1) eigs[1] = cond;

  Quadratic quad;
  quad.A = q * eigs.asDiagonal() * q.transpose();
  quad.A = 0.5 * (quad.A + quad.A.transpose()).eval();
  quad.b.resize(dim);
  for (int i = 0; i < dim; ++i) quad.b[i] = normal(gen);
  return quad;
}

// Small dense architecture for gradient checks.
inline capcheck::netcore::ArchitectureSpec tiny_arch(int in, int out,
                                                     int hidden_count,
                                                     int width) {
  capcheck::netcore::ArchitectureSpec arch;
  arch.input_dim = in;
  arch.output_dim = out;
  arch.hidden_count = hidden_count;
  arch.hidden_width = width;
  arch.saturation_factor = 2.0;
  return arch;
}

}  // namespace testutil
