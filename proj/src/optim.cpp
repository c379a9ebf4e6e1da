#include "capcheck/optim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace capcheck::optim {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Objective values are trusted only to this relative resolution; below it the
// line search switches to derivative-driven decisions (see zoom()).
constexpr double kObjectiveNoiseRel = 1e-12;

// The approximate acceptance path is allowed only when the first-order
// decrease estimate alpha*|phi'(0)| is this far below the objective scale,
// i.e. when sufficient decrease is genuinely unresolvable in doubles.
constexpr double kDecreaseFloorRel = 1e-10;

struct Counter {
  const ObjectiveFn* fn = nullptr;
  std::int64_t grad_calls = 0;
  std::int64_t obj_calls = 0;
  double best = kInf;

  double eval(const Eigen::VectorXd& x, Eigen::VectorXd* g) {
    const double f = (*fn)(x, g);
    if (g) {
      ++grad_calls;
    } else {
      ++obj_calls;
    }
    if (f < best) best = f;  // NaN compares false, so best stays finite
    return f;
  }

  ObjectiveFn as_objective() {
    return [this](const Eigen::VectorXd& x, Eigen::VectorXd* g) {
      return eval(x, g);
    };
  }
};

double inf_norm(const Eigen::VectorXd& v) {
  return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff();
}

// Minimizer of the Hermite cubic through (a, fa, da) and (b, fb, db);
// NaN when the data admits none.
double cubic_minimizer(double a, double fa, double da, double b, double fb,
                       double db) {
  const double d1 = da + db - 3.0 * (fa - fb) / (a - b);
  const double disc = d1 * d1 - da * db;
  if (!(disc >= 0.0)) return std::numeric_limits<double>::quiet_NaN();
  const double d2 = std::sqrt(disc) * (b >= a ? 1.0 : -1.0);
  const double denom = db - da + 2.0 * d2;
  if (denom == 0.0) return std::numeric_limits<double>::quiet_NaN();
  return b - (b - a) * (db + d2 - d1) / denom;
}

}  // namespace

std::string to_string(Method m) {
  switch (m) {
    case Method::sgd: return "sgd";
    case Method::rmsprop: return "rmsprop";
    case Method::adadelta: return "adadelta";
    case Method::cg: return "cg";
  }
  return "?";
}

Method method_from_string(const std::string& s) {
  if (s == "sgd") return Method::sgd;
  if (s == "rmsprop") return Method::rmsprop;
  if (s == "adadelta") return Method::adadelta;
  if (s == "cg") return Method::cg;
  throw std::invalid_argument("unknown method: " + s);
}

std::string to_string(Termination t) {
  switch (t) {
    case Termination::budget_exhausted: return "budget_exhausted";
    case Termination::gradient_tolerance_met: return "gradient_tolerance_met";
    case Termination::line_search_failure: return "line_search_failure";
    case Termination::aborted_non_finite: return "aborted_non_finite";
  }
  return "?";
}

void OptimizerConfig::validate() const {
  if (max_gradient_calls < 1) {
    throw std::invalid_argument("max_gradient_calls must be >= 1");
  }
  if (method == Method::sgd || method == Method::rmsprop ||
      method == Method::adadelta) {
    if (!(learning_rate >= 0.0)) {
      throw std::invalid_argument("learning_rate must be >= 0");
    }
  }
  if (method == Method::rmsprop || method == Method::adadelta) {
    if (!(decay_rho > 0.0 && decay_rho < 1.0)) {
      throw std::invalid_argument("decay_rho must be in (0, 1)");
    }
    if (!(epsilon > 0.0)) throw std::invalid_argument("epsilon must be > 0");
  }
  if (method == Method::cg) {
    if (!(cg_gradient_tolerance > 0.0)) {
      throw std::invalid_argument("cg_gradient_tolerance must be > 0");
    }
    if (!(line_search.c1 > 0.0 && line_search.c1 < line_search.c2 &&
          line_search.c2 < 1.0)) {
      throw std::invalid_argument("need 0 < c1 < c2 < 1");
    }
  }
}

OptimizerConfig OptimizerConfig::defaults(Method m) {
  OptimizerConfig c;
  c.method = m;
  switch (m) {
    case Method::sgd:
      c.learning_rate = 0.01;
      break;
    case Method::rmsprop:
      c.learning_rate = 0.001;
      c.decay_rho = 0.9;
      c.epsilon = 1e-7;
      break;
    case Method::adadelta:
      c.learning_rate = 1.0;
      c.decay_rho = 0.95;
      c.epsilon = 1e-7;
      break;
    case Method::cg:
      break;
  }
  return c;
}

// ---------------------------------------------------------------------------
// Strong-Wolfe line search (bracketing + zoom). Probes evaluate objective and
// gradient together. Trial points inside the zoom interval come from, in
// order of preference: a secant step on phi' when the bracket has a slope
// sign change (clamped to the interior), the Hermite-cubic minimizer, and
// bisection. When objective differences inside the bracket fall below the
// floating-point resolution kObjectiveNoiseRel*|f0|, interval updates switch
// from objective comparisons to the sign of phi', which keeps full precision
// arbitrarily close to the one-dimensional minimizer.

namespace {

struct Probe {
  double a = 0.0;
  double f = kInf;
  double slope = 0.0;
  Eigen::VectorXd g;
};

class WolfeSearch {
 public:
  WolfeSearch(const ObjectiveFn& fn, const Eigen::VectorXd& x, double f0,
              double d0, const Eigen::VectorXd& dir,
              const LineSearchParams& p)
      : fn_(fn), x_(x), dir_(dir), p_(p), f0_(f0), d0_(d0),
        eps_f_(kObjectiveNoiseRel * std::abs(f0)) {}

  LineSearchResult run(double first_trial) {
    double a_prev = 0.0, f_prev = f0_, d_prev = d0_;
    double a = first_trial;
    for (int i = 0; i < p_.max_bracket_steps; ++i) {
      Probe pr = eval(a);
      if (!(pr.f <= f0_ + p_.c1 * a * d0_) || (i > 0 && !(pr.f < f_prev))) {
        return zoom(a_prev, f_prev, d_prev, pr);
      }
      if (std::abs(pr.slope) <= p_.c2 * std::abs(d0_)) {
        return finish(std::move(pr));
      }
      if (pr.slope >= 0.0) {
        return zoom_from_probe(std::move(pr), a_prev, f_prev, d_prev);
      }
      a_prev = a;
      f_prev = pr.f;
      d_prev = pr.slope;
      a *= 2.0;
      if (!(a < 1e20)) break;
    }
    return failed();
  }

  int gradient_evals() const { return evals_; }

 private:
  Probe eval(double a) {
    Probe pr;
    pr.a = a;
    pr.f = fn_(x_ + a * dir_, &pr.g);
    pr.slope = pr.g.dot(dir_);
    ++evals_;
    return pr;
  }

  bool wolfe_ok(const Probe& pr) const {
    return pr.f <= f0_ + p_.c1 * pr.a * d0_ &&
           std::abs(pr.slope) <= p_.c2 * std::abs(d0_);
  }

  // Derivative window plus "no measurable increase": used only where the
  // expected decrease is below what doubles can resolve.
  bool approx_ok(const Probe& pr) const {
    return std::abs(pr.slope) <= p_.c2 * std::abs(d0_) &&
           pr.f <= f0_ + eps_f_ &&
           pr.a * std::abs(d0_) <=
               kDecreaseFloorRel * std::max(std::abs(f0_), 1e-300);
  }

  LineSearchResult failed() const {
    LineSearchResult r;
    r.status = LineSearchResult::Status::failed;
    r.gradient_evals = evals_;
    return r;
  }

  LineSearchResult pack(Probe pr) const {
    LineSearchResult r;
    r.status = wolfe_ok(pr) ? LineSearchResult::Status::wolfe
                            : LineSearchResult::Status::approximate;
    r.alpha = pr.a;
    r.f = pr.f;
    r.slope = pr.slope;
    r.gradient = std::move(pr.g);
    r.gradient_evals = evals_;
    return r;
  }

  // Optional secant refinement toward phi' = 0. Keeps the best acceptable
  // point; never returns a worse one than it was handed.
  LineSearchResult finish(Probe accepted) {
    if (std::abs(accepted.slope) <= p_.refine_slope * std::abs(d0_)) {
      return pack(std::move(accepted));
    }
    Probe best = accepted;
    double pa = 0.0, pd = d0_;
    double ra = accepted.a, rd = accepted.slope;
    for (int i = 0; i < 10; ++i) {
      if (std::abs(rd) <= p_.refine_slope * std::abs(d0_)) break;
      if (rd == pd) break;
      const double a2 = ra - rd * (ra - pa) / (rd - pd);
      if (!(a2 > 0.0) || !std::isfinite(a2)) break;
      Probe pr = eval(a2);
      pa = ra;
      pd = rd;
      ra = pr.a;
      rd = pr.slope;
      if ((wolfe_ok(pr) || approx_ok(pr)) &&
          std::abs(pr.slope) < std::abs(best.slope)) {
        best = std::move(pr);
      }
    }
    return pack(std::move(best));
  }

  LineSearchResult zoom_from_probe(Probe lo, double hi_a, double hi_f,
                                   double hi_d) {
    return zoom_impl(lo.a, lo.f, lo.slope, hi_a, hi_f, hi_d);
  }

  LineSearchResult zoom(double lo_a, double lo_f, double lo_d,
                        const Probe& hi) {
    return zoom_impl(lo_a, lo_f, lo_d, hi.a, hi.f, hi.slope);
  }

  LineSearchResult zoom_impl(double lo, double flo, double dlo, double hi,
                             double fhi, double dhi) {
    for (int j = 0; j < p_.max_bracket_steps; ++j) {
      const double width = hi - lo;
      double a = std::numeric_limits<double>::quiet_NaN();
      if (dlo * dhi < 0.0) {
        a = lo - dlo * width / (dhi - dlo);
        const double margin = 1e-3 * std::abs(width);
        a = std::clamp(a, std::min(lo, hi) + margin,
                       std::max(lo, hi) - margin);
      }
      if (!std::isfinite(a)) {
        a = cubic_minimizer(lo, flo, dlo, hi, fhi, dhi);
        const double margin = 0.1 * std::abs(width);
        if (!std::isfinite(a) || a < std::min(lo, hi) + margin ||
            a > std::max(lo, hi) - margin) {
          a = lo + 0.5 * width;
        }
      }
      Probe pr = eval(a);
      if (wolfe_ok(pr) || approx_ok(pr)) {
        return finish(std::move(pr));
      }
      const bool f_noise = std::abs(pr.f - flo) <= eps_f_;
      if (!f_noise &&
          (!(pr.f <= f0_ + p_.c1 * pr.a * d0_) || !(pr.f < flo))) {
        hi = pr.a;
        fhi = pr.f;
        dhi = pr.slope;
      } else if (f_noise) {
        // Objective flat to rounding: bracket the root of phi' instead.
        if ((pr.slope < 0.0) == (dlo < 0.0)) {
          lo = pr.a;
          flo = pr.f;
          dlo = pr.slope;
        } else {
          hi = pr.a;
          fhi = pr.f;
          dhi = pr.slope;
        }
      } else {
        if (pr.slope * (hi - lo) >= 0.0) {
          hi = lo;
          fhi = flo;
          dhi = dlo;
        }
        lo = pr.a;
        flo = pr.f;
        dlo = pr.slope;
      }
      if (std::abs(hi - lo) <= 1e-14 * std::max(1.0, std::abs(lo))) break;
    }
    return failed();
  }

  const ObjectiveFn& fn_;
  const Eigen::VectorXd& x_;
  const Eigen::VectorXd& dir_;
  const LineSearchParams& p_;
  const double f0_;
  const double d0_;
  const double eps_f_;
  int evals_ = 0;
};

}  // namespace

LineSearchResult wolfe_line_search(const ObjectiveFn& fn,
                                   const Eigen::VectorXd& x, double f0,
                                   const Eigen::VectorXd& g0,
                                   const Eigen::VectorXd& direction,
                                   const LineSearchParams& params,
                                   double initial_trial) {
  const double d0 = g0.dot(direction);
  if (!(d0 < 0.0)) {
    throw std::invalid_argument(
        "wolfe_line_search: direction is not a descent direction");
  }
  WolfeSearch search(fn, x, f0, d0, direction, params);
  const double trial =
      initial_trial > 0.0 ? initial_trial : params.initial_step;
  return search.run(trial);
}

// ---------------------------------------------------------------------------
// First-order methods. One full-batch gradient call per iteration; the value
// at the final iterate is recorded with a free objective-only evaluation.

namespace {

TrainTrace first_order_run(const ObjectiveFn& fn, const Eigen::VectorXd& x0,
                           const OptimizerConfig& config,
                           void (*step)(Eigen::VectorXd&, const Eigen::VectorXd&,
                                        const OptimizerConfig&,
                                        Eigen::VectorXd&, Eigen::VectorXd&)) {
  config.validate();
  Counter counter{&fn};
  TrainTrace trace;
  trace.method = config.method;
  trace.config = config;

  Eigen::VectorXd x = x0;
  Eigen::VectorXd grad(x.size());
  Eigen::VectorXd acc_sq = Eigen::VectorXd::Zero(x.size());
  Eigen::VectorXd acc_update = Eigen::VectorXd::Zero(x.size());

  bool first = true;
  while (counter.grad_calls < config.max_gradient_calls) {
    const double f = counter.eval(x, &grad);
    if (first) {
      trace.f_init = f;
      first = false;
    }
    trace.objective_history.emplace_back(counter.grad_calls, f);
    if (!std::isfinite(f)) {
      trace.hit_non_finite = true;
      trace.termination = Termination::aborted_non_finite;
      trace.f_final = f;
      trace.f_opt = counter.best;
      trace.gradient_calls_used = counter.grad_calls;
      trace.objective_only_calls = counter.obj_calls;
      trace.final_params = std::move(x);
      return trace;
    }
    step(x, grad, config, acc_sq, acc_update);
    ++trace.iterations;
  }

  trace.f_final = counter.eval(x, nullptr);
  trace.termination = Termination::budget_exhausted;
  trace.f_opt = counter.best;
  trace.gradient_calls_used = counter.grad_calls;
  trace.objective_only_calls = counter.obj_calls;
  trace.final_params = std::move(x);
  return trace;
}

void sgd_step(Eigen::VectorXd& x, const Eigen::VectorXd& g,
              const OptimizerConfig& c, Eigen::VectorXd&, Eigen::VectorXd&) {
  x -= c.learning_rate * g;
}

void rmsprop_step(Eigen::VectorXd& x, const Eigen::VectorXd& g,
                  const OptimizerConfig& c, Eigen::VectorXd& acc_sq,
                  Eigen::VectorXd&) {
  acc_sq = c.decay_rho * acc_sq.array() +
           (1.0 - c.decay_rho) * g.array().square();
  x.array() -=
      c.learning_rate * g.array() / (acc_sq.array().sqrt() + c.epsilon);
}

void adadelta_step(Eigen::VectorXd& x, const Eigen::VectorXd& g,
                   const OptimizerConfig& c, Eigen::VectorXd& acc_sq,
                   Eigen::VectorXd& acc_update) {
  acc_sq = c.decay_rho * acc_sq.array() +
           (1.0 - c.decay_rho) * g.array().square();
  const Eigen::ArrayXd step = -((acc_update.array() + c.epsilon).sqrt() /
                                (acc_sq.array() + c.epsilon).sqrt()) *
                              g.array();
  acc_update =
      c.decay_rho * acc_update.array() + (1.0 - c.decay_rho) * step.square();
  x.array() += c.learning_rate * step;
}

}  // namespace

TrainTrace sgd_run(const ObjectiveFn& fn, const Eigen::VectorXd& x0,
                   const OptimizerConfig& config) {
  return first_order_run(fn, x0, config, sgd_step);
}

TrainTrace rmsprop_run(const ObjectiveFn& fn, const Eigen::VectorXd& x0,
                       const OptimizerConfig& config) {
  return first_order_run(fn, x0, config, rmsprop_step);
}

TrainTrace adadelta_run(const ObjectiveFn& fn, const Eigen::VectorXd& x0,
                        const OptimizerConfig& config) {
  return first_order_run(fn, x0, config, adadelta_step);
}

// ---------------------------------------------------------------------------
// Nonlinear conjugate gradient, Polak-Ribiere-plus by default. Budget is
// checked before a line search starts; a search in progress may finish, so
// the reported call count can overdraw the cap by one search's evaluations.

TrainTrace cg_run(const ObjectiveFn& fn, const Eigen::VectorXd& x0,
                  const OptimizerConfig& config) {
  config.validate();
  Counter counter{&fn};
  const ObjectiveFn counted = counter.as_objective();

  TrainTrace trace;
  trace.method = Method::cg;
  trace.config = config;

  auto finalize = [&](Termination t, Eigen::VectorXd x, double f_final) {
    trace.termination = t;
    trace.f_opt = counter.best;
    trace.f_final = f_final;
    trace.gradient_calls_used = counter.grad_calls;
    trace.objective_only_calls = counter.obj_calls;
    trace.final_params = std::move(x);
    return trace;
  };

  Eigen::VectorXd x = x0;
  Eigen::VectorXd g(x.size());
  double f = counter.eval(x, &g);
  trace.f_init = f;
  trace.objective_history.emplace_back(counter.grad_calls, f);
  if (!std::isfinite(f) || !g.allFinite()) {
    trace.hit_non_finite = true;
    return finalize(Termination::aborted_non_finite, std::move(x), f);
  }
  if (inf_norm(g) <= config.cg_gradient_tolerance) {
    return finalize(Termination::gradient_tolerance_met, std::move(x), f);
  }

  const auto dim = x.size();
  Eigen::VectorXd dir = -g;
  std::int64_t since_restart = 0;
  bool restarted_after_failure = false;

  while (counter.grad_calls < config.max_gradient_calls) {
    double d0 = g.dot(dir);
    if (d0 >= 0.0 || since_restart >= dim) {
      dir = -g;
      d0 = -g.squaredNorm();
      since_restart = 0;
    }
    const double trial =
        trace.iterations == 0
            ? config.line_search.initial_step / g.norm()
            : config.line_search.initial_step;

    LineSearchResult ls =
        wolfe_line_search(counted, x, f, g, dir, config.line_search, trial);
    ++trace.iterations;
    ++since_restart;

    if (ls.status == LineSearchResult::Status::failed) {
      if (restarted_after_failure) {
        return finalize(Termination::line_search_failure, std::move(x), f);
      }
      restarted_after_failure = true;
      dir = -g;
      since_restart = 0;
      continue;
    }
    restarted_after_failure = false;

    x += ls.alpha * dir;
    Eigen::VectorXd g_new = std::move(ls.gradient);
    const double f_new = ls.f;
    trace.objective_history.emplace_back(counter.grad_calls, f_new);
    if (!std::isfinite(f_new) || !g_new.allFinite()) {
      trace.hit_non_finite = true;
      return finalize(Termination::aborted_non_finite, std::move(x), f_new);
    }
    if (inf_norm(g_new) <= config.cg_gradient_tolerance) {
      return finalize(Termination::gradient_tolerance_met, std::move(x),
                      f_new);
    }

    double beta = 0.0;
    const double denom = g.squaredNorm();
    if (config.beta_rule == CgBetaRule::polak_ribiere_plus) {
      beta = std::max(0.0, g_new.dot(g_new - g) / denom);
    } else {
      beta = g_new.squaredNorm() / denom;
    }
    dir = -g_new + beta * dir;
    g = std::move(g_new);
    f = f_new;
  }
  return finalize(Termination::budget_exhausted, std::move(x), f);
}

TrainTrace run_fit(const netcore::ArchitectureSpec& arch,
                   const netcore::Dataset& data, const Eigen::VectorXd& x0,
                   const OptimizerConfig& config) {
  const ObjectiveFn fn = [&arch, &data](const Eigen::VectorXd& x,
                                        Eigen::VectorXd* grad) -> double {
    if (grad) {
      auto res = netcore::gradient(arch, x, data);
      *grad = std::move(*res.gradient);
      return res.objective;
    }
    return netcore::objective(arch, x, data).objective;
  };
  switch (config.method) {
    case Method::sgd: return sgd_run(fn, x0, config);
    case Method::rmsprop: return rmsprop_run(fn, x0, config);
    case Method::adadelta: return adadelta_run(fn, x0, config);
    case Method::cg: return cg_run(fn, x0, config);
  }
  throw std::invalid_argument("unknown method");
}

}  // namespace capcheck::optim
