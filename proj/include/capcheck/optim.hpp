#pragma once

#include "capcheck/netcore.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

namespace capcheck::optim {

enum class Method { sgd, rmsprop, adadelta, cg };

std::string to_string(Method m);
Method method_from_string(const std::string& s);

enum class Termination {
  budget_exhausted,
  gradient_tolerance_met,
  line_search_failure,
  aborted_non_finite
};

std::string to_string(Termination t);

enum class CgBetaRule { polak_ribiere_plus, fletcher_reeves };

/// Strong-Wolfe line search knobs. `refine_slope` controls the optional
/// secant refinement toward the one-dimensional stationary point: once an
/// acceptable step is found, refinement continues while
/// |phi'(alpha)| > refine_slope * |phi'(0)|. The default 1.0 keeps the first
/// acceptable step (budget-friendly for the network fits); near-zero values
/// make the search effectively exact, which conjugate gradient needs for its
/// finite-termination behaviour on quadratics.
struct LineSearchParams {
  double c1 = 1e-4;
  double c2 = 0.4;
  int max_bracket_steps = 60;
  double initial_step = 1.0;
  double refine_slope = 1.0;
};

struct OptimizerConfig {
  Method method = Method::cg;
  double learning_rate = 0.0;
  double decay_rho = 0.0;
  double epsilon = 0.0;
  std::int64_t max_gradient_calls = 2000;
  double cg_gradient_tolerance = 1e-5;  // infinity norm
  CgBetaRule beta_rule = CgBetaRule::polak_ribiere_plus;
  LineSearchParams line_search;

  void validate() const;

  /// Framework-default hyperparameters per method:
  ///   sgd       lr 0.01
  ///   rmsprop   lr 0.001, rho 0.9,  eps 1e-7
  ///   adadelta  lr 1.0,   rho 0.95, eps 1e-7
  ///   cg        tol 1e-5, PR+ with Wolfe c1 1e-4 / c2 0.4
  static OptimizerConfig defaults(Method m);
};

/// Objective closure: returns f(x); when `grad` is non-null it must also be
/// filled, and the call counts as one gradient call against the budget.
using ObjectiveFn =
    std::function<double(const Eigen::VectorXd& x, Eigen::VectorXd* grad)>;

/// Record of one optimization run. `objective_history` holds (cumulative
/// gradient calls, objective at the accepted iterate); `f_opt` is the best
/// value seen at any evaluated point, line-search probes included.
struct TrainTrace {
  Method method = Method::cg;
  std::int64_t gradient_calls_used = 0;
  std::int64_t objective_only_calls = 0;
  std::int64_t iterations = 0;
  double f_init = 0.0;
  double f_opt = 0.0;
  double f_final = 0.0;
  std::vector<std::pair<std::int64_t, double>> objective_history;
  Termination termination = Termination::budget_exhausted;
  bool hit_non_finite = false;
  OptimizerConfig config;  // hyperparameters actually used
  Eigen::VectorXd final_params;
};

struct LineSearchResult {
  enum class Status {
    wolfe,        // both strong Wolfe inequalities hold at alpha
    approximate,  // derivative window holds, f flat to rounding (see optim.cpp)
    failed
  };
  Status status = Status::failed;
  double alpha = 0.0;
  double f = 0.0;
  double slope = 0.0;          // phi'(alpha)
  Eigen::VectorXd gradient;    // gradient at x + alpha * direction
  int gradient_evals = 0;
  int objective_evals = 0;
};

/// Bracket/zoom strong-Wolfe search along `direction` from `x`, where `f0`
/// and `g0` are the objective and gradient at `x`. Throws
/// std::invalid_argument when `direction` is not a descent direction.
/// Every probe evaluates objective and gradient together (one gradient call).
LineSearchResult wolfe_line_search(const ObjectiveFn& fn,
                                   const Eigen::VectorXd& x, double f0,
                                   const Eigen::VectorXd& g0,
                                   const Eigen::VectorXd& direction,
                                   const LineSearchParams& params,
                                   double initial_trial = 0.0);

TrainTrace sgd_run(const ObjectiveFn& fn, const Eigen::VectorXd& x0,
                   const OptimizerConfig& config);
TrainTrace rmsprop_run(const ObjectiveFn& fn, const Eigen::VectorXd& x0,
                       const OptimizerConfig& config);
TrainTrace adadelta_run(const ObjectiveFn& fn, const Eigen::VectorXd& x0,
                        const OptimizerConfig& config);
TrainTrace cg_run(const ObjectiveFn& fn, const Eigen::VectorXd& x0,
                  const OptimizerConfig& config);

/// Builds the mean-squared-error closure for (arch, data) and dispatches on
/// config.method.
TrainTrace run_fit(const netcore::ArchitectureSpec& arch,
                   const netcore::Dataset& data, const Eigen::VectorXd& x0,
                   const OptimizerConfig& config);

}  // namespace capcheck::optim
