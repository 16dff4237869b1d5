#pragma once

#include <cmath>
#include <concepts>
#include <cstddef>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "critpt/catalog.hpp"
#include "critpt/dlae.hpp"
#include "critpt/errors.hpp"
#include "critpt/minres.hpp"
#include "critpt/steihaug.hpp"
#include "critpt/vec.hpp"

namespace critpt {

enum class FinderMethod { gnm, newton_mr, newton_tr };

inline std::string method_name(FinderMethod m) {
  switch (m) {
    case FinderMethod::gnm: return "gnm";
    case FinderMethod::newton_mr: return "newton-mr";
    case FinderMethod::newton_tr: return "newton-tr";
  }
  return "?";
}

inline FinderMethod method_from_name(const std::string& s) {
  if (s == "gnm") return FinderMethod::gnm;
  if (s == "newton-mr") return FinderMethod::newton_mr;
  if (s == "newton-tr") return FinderMethod::newton_tr;
  throw invalid_input("unknown finder method: " + s);
}

struct LineSearchConfig {
  double init_step = 1.0;
  double shrink = 0.5;
  double sufficient_decrease = 1e-4;
  double min_step = 1e-20;
};

struct MinresConfig {
  double rel_tol = 1e-6;
  std::size_t max_iters = 0;  // 0 resolves to the problem dimension
};

struct TrustRegionConfig {
  double initial_radius = 1.0;
  double max_radius = 1e3;
  double shrink = 0.25;
  double grow = 2.0;
  double accept_rho = 0.1;
  double shrink_rho = 0.25;
  double grow_rho = 0.75;
  double min_radius = 1e-14;
};

struct FinderConfig {
  FinderMethod method = FinderMethod::gnm;
  double epsilon_crit = 1e-10;  // termination threshold on g
  std::size_t max_epochs = 500;
  LineSearchConfig line_search;
  MinresConfig minres;
  TrustRegionConfig trust_region;
  /// Barzilai-Borwein initial step for the GNM line search (still safeguarded
  /// by Armijo backtracking, so accepted iterates stay strictly monotone).
  bool gnm_bb_init = true;
};

enum class RunStatus { converged, max_epochs, step_underflow, radius_underflow, inner_breakdown };

inline std::string status_name(RunStatus s) {
  switch (s) {
    case RunStatus::converged: return "converged";
    case RunStatus::max_epochs: return "max_epochs";
    case RunStatus::step_underflow: return "step_underflow";
    case RunStatus::radius_underflow: return "radius_underflow";
    case RunStatus::inner_breakdown: return "inner_breakdown";
  }
  return "?";
}

struct TraceRecord {
  std::size_t epoch = 0;
  double sq_grad_norm = 0.0;
  double loss = 0.0;
  double step_norm = 0.0;
  double radius = 0.0;  // trust-region runs only
  std::size_t inner_iters = 0;
  bool accepted = false;
  bool inner_breakdown = false;  // MINRES broke down; epoch fell back to a descent step
};

struct FinderRunTrace {
  std::vector<TraceRecord> records;
  RunStatus status = RunStatus::max_epochs;
};

struct FinderOutcome {
  FinderRunTrace trace;
  Vec terminal;
  double terminal_g = 0.0;
  double terminal_loss = 0.0;
};

/// What a finder needs from an objective: the residual r = grad L, a
/// symmetric Jacobian-of-residual product H v, and the underlying loss for
/// the trace. g = 1/2 ||r||^2 and grad g = H r are derived here.
template <class P>
concept MeritProblem = requires(const P& p, const Vec& x, const Vec& v) {
  { p.dim() } -> std::convertible_to<std::size_t>;
  { p.loss(x) } -> std::convertible_to<double>;
  { p.residual(x) } -> std::convertible_to<Vec>;
  { p.apply_hessian(x, v) } -> std::convertible_to<Vec>;
};

namespace detail {

inline double merit_of(const Vec& r) { return 0.5 * dot(r, r); }

/// Backtracking Armijo search on g along `dir` with slope `slope` < 0.
/// Returns {step, g_new, evals}; step 0 means underflow.
template <MeritProblem P>
std::pair<double, double> armijo(const P& problem, const Vec& x, double g0,
                                 const Vec& dir, double slope,
                                 const LineSearchConfig& ls, double alpha0,
                                 Vec& x_new_out) {
  double alpha = alpha0;
  while (alpha >= ls.min_step) {
    Vec trial = x;
    axpy(alpha, dir, trial);
    const Vec r = problem.residual(trial);
    const double g_trial = all_finite(r) ? merit_of(r) : std::numeric_limits<double>::infinity();
    if (g_trial <= g0 + ls.sufficient_decrease * alpha * slope) {
      x_new_out = std::move(trial);
      return {alpha, g_trial};
    }
    alpha *= ls.shrink;
  }
  return {0.0, g0};
}

}  // namespace detail

/// Gradient-norm minimization: steepest descent on g with grad g = H r from
/// one Hessian-vector product per epoch, globalized by a backtracking line
/// search.
template <MeritProblem P>
FinderOutcome gnm_run(const P& problem, const Vec& start, const FinderConfig& config) {
  if (!all_finite(start)) throw invalid_input("gnm_run: non-finite start");
  FinderOutcome out;
  Vec x = start;

  Vec prev_x, prev_grad_g;
  bool have_prev = false;

  for (std::size_t epoch = 0; epoch <= config.max_epochs; ++epoch) {
    const Vec r = problem.residual(x);
    const double g = detail::merit_of(r);
    const double l = problem.loss(x);

    if (g <= config.epsilon_crit) {
      out.trace.records.push_back({epoch, g, l, 0.0, 0.0, 0, true});
      out.trace.status = RunStatus::converged;
      break;
    }
    if (epoch == config.max_epochs) {
      out.trace.records.push_back({epoch, g, l, 0.0, 0.0, 0, false});
      out.trace.status = RunStatus::max_epochs;
      break;
    }

    const Vec grad_g = problem.apply_hessian(x, r);
    const Vec dir = scaled(grad_g, -1.0);
    const double slope = -dot(grad_g, grad_g);
    if (!(slope < 0.0)) {
      // g above threshold but grad g numerically zero: a gradient-flat point.
      out.trace.records.push_back({epoch, g, l, 0.0, 0.0, 0, false});
      out.trace.status = RunStatus::step_underflow;
      break;
    }

    double alpha0 = config.line_search.init_step;
    if (config.gnm_bb_init) {
      if (have_prev) {
        const Vec s = sub(x, prev_x);
        const Vec y = sub(grad_g, prev_grad_g);
        const double sy = dot(s, y);
        if (sy > 0.0) {
          const double bb = dot(s, s) / sy;
          if (std::isfinite(bb) && bb > 0.0) alpha0 = bb;
        }
      } else {
        // First epoch: cap the trial step at unit parameter-space length so
        // the search does not leap across basins of g.
        alpha0 = std::min(alpha0, 1.0 / norm2(grad_g));
      }
    }

    Vec x_new;
    const auto [alpha, g_new] =
        detail::armijo(problem, x, g, dir, slope, config.line_search, alpha0, x_new);
    if (alpha == 0.0) {
      out.trace.records.push_back({epoch, g, l, 0.0, 0.0, 0, false});
      out.trace.status = RunStatus::step_underflow;
      break;
    }

    out.trace.records.push_back({epoch, g, l, alpha * norm2(dir), 0.0, 0, true});
    prev_x = std::move(x);
    prev_grad_g = grad_g;
    have_prev = true;
    x = std::move(x_new);
  }

  out.terminal = std::move(x);
  const Vec r_final = problem.residual(out.terminal);
  out.terminal_g = detail::merit_of(r_final);
  out.terminal_loss = problem.loss(out.terminal);
  return out;
}

/// Newton-MR: the epoch direction is the MINRES least-squares solution of
/// H p = -r (valid for indefinite or singular H), accepted by Armijo
/// backtracking on g; falls back to the steepest-descent direction on g when
/// MINRES breaks down or p fails the descent test.
template <MeritProblem P>
FinderOutcome newton_mr_run(const P& problem, const Vec& start, const FinderConfig& config) {
  if (!all_finite(start)) throw invalid_input("newton_mr_run: non-finite start");
  FinderOutcome out;
  Vec x = start;
  const std::size_t inner_cap =
      config.minres.max_iters ? config.minres.max_iters : problem.dim();

  for (std::size_t epoch = 0; epoch <= config.max_epochs; ++epoch) {
    const Vec r = problem.residual(x);
    const double g = detail::merit_of(r);
    const double l = problem.loss(x);

    if (g <= config.epsilon_crit) {
      out.trace.records.push_back({epoch, g, l, 0.0, 0.0, 0, true});
      out.trace.status = RunStatus::converged;
      break;
    }
    if (epoch == config.max_epochs) {
      out.trace.records.push_back({epoch, g, l, 0.0, 0.0, 0, false});
      out.trace.status = RunStatus::max_epochs;
      break;
    }

    const Vec grad_g = problem.apply_hessian(x, r);
    MinresOutcome inner = minres(
        [&](const Vec& v) { return problem.apply_hessian(x, v); },
        scaled(r, -1.0), config.minres.rel_tol, inner_cap);
    const bool broke = inner.flag == MinresFlag::breakdown;

    Vec dir;
    double slope = 0.0;
    bool have_dir = false;
    if (!broke) {
      slope = dot(grad_g, inner.solution);
      if (slope < 0.0) {
        dir = inner.solution;
        have_dir = true;
      }
    }
    if (!have_dir) {
      // Fall back to a plain descent epoch on g.
      slope = -dot(grad_g, grad_g);
      if (!(slope < 0.0)) {
        out.trace.records.push_back({epoch, g, l, 0.0, 0.0, inner.iterations, false, broke});
        out.trace.status = broke ? RunStatus::inner_breakdown : RunStatus::step_underflow;
        break;
      }
      dir = scaled(grad_g, -1.0);
    }

    Vec x_new;
    const auto [alpha, g_new] = detail::armijo(problem, x, g, dir, slope, config.line_search,
                                               config.line_search.init_step, x_new);
    if (alpha == 0.0) {
      out.trace.records.push_back({epoch, g, l, 0.0, 0.0, inner.iterations, false, broke});
      out.trace.status = RunStatus::step_underflow;
      break;
    }

    out.trace.records.push_back({epoch, g, l, alpha * norm2(dir), 0.0, inner.iterations, true, broke});
    x = std::move(x_new);
  }

  out.terminal = std::move(x);
  const Vec r_final = problem.residual(out.terminal);
  out.terminal_g = detail::merit_of(r_final);
  out.terminal_loss = problem.loss(out.terminal);
  return out;
}

/// Newton-TR: trust-region descent on g with the positive-semidefinite
/// Gauss-Newton model m(s) = g + <grad g, s> + 1/2 <s, H^2 s>, the subproblem
/// solved by Steihaug-CG, and the radius adapted through the agreement ratio.
template <MeritProblem P>
FinderOutcome newton_tr_run(const P& problem, const Vec& start, const FinderConfig& config) {
  if (!all_finite(start)) throw invalid_input("newton_tr_run: non-finite start");
  const TrustRegionConfig& tr = config.trust_region;
  FinderOutcome out;
  Vec x = start;
  double radius = tr.initial_radius;
  const std::size_t inner_cap =
      config.minres.max_iters ? config.minres.max_iters : problem.dim();

  for (std::size_t epoch = 0; epoch <= config.max_epochs; ++epoch) {
    const Vec r = problem.residual(x);
    const double g = detail::merit_of(r);
    const double l = problem.loss(x);

    if (g <= config.epsilon_crit) {
      out.trace.records.push_back({epoch, g, l, 0.0, radius, 0, true});
      out.trace.status = RunStatus::converged;
      break;
    }
    if (epoch == config.max_epochs) {
      out.trace.records.push_back({epoch, g, l, 0.0, radius, 0, false});
      out.trace.status = RunStatus::max_epochs;
      break;
    }
    if (radius < tr.min_radius) {
      out.trace.records.push_back({epoch, g, l, 0.0, radius, 0, false});
      out.trace.status = RunStatus::radius_underflow;
      break;
    }

    const Vec grad_g = problem.apply_hessian(x, r);
    SteihaugResult sub = steihaug_cg(
        [&](const Vec& v) { return problem.apply_hessian(x, problem.apply_hessian(x, v)); },
        grad_g, radius, config.minres.rel_tol, inner_cap);

    const Vec b_step = problem.apply_hessian(x, problem.apply_hessian(x, sub.step));
    const double predicted = -(dot(grad_g, sub.step) + 0.5 * dot(sub.step, b_step));
    const double step_norm = norm2(sub.step);

    double rho = -std::numeric_limits<double>::infinity();
    double g_trial = g;
    Vec trial;
    if (predicted > 0.0) {
      trial = x;
      axpy(1.0, sub.step, trial);
      const Vec r_trial = problem.residual(trial);
      g_trial = all_finite(r_trial) ? detail::merit_of(r_trial)
                                    : std::numeric_limits<double>::infinity();
      rho = (g - g_trial) / predicted;
    }

    const bool accepted = rho > tr.accept_rho;
    out.trace.records.push_back({epoch, g, l, step_norm, radius, sub.iterations, accepted});

    if (rho < tr.shrink_rho) {
      radius *= tr.shrink;
    } else if (rho > tr.grow_rho && step_norm >= 0.99 * radius) {
      radius = std::min(radius * tr.grow, tr.max_radius);
    }
    if (accepted) x = std::move(trial);
  }

  out.terminal = std::move(x);
  const Vec r_final = problem.residual(out.terminal);
  out.terminal_g = detail::merit_of(r_final);
  out.terminal_loss = problem.loss(out.terminal);
  return out;
}

template <MeritProblem P>
FinderOutcome run_finder(const P& problem, const Vec& start, const FinderConfig& config) {
  switch (config.method) {
    case FinderMethod::gnm: return gnm_run(problem, start, config);
    case FinderMethod::newton_mr: return newton_mr_run(problem, start, config);
    case FinderMethod::newton_tr: return newton_tr_run(problem, start, config);
  }
  throw invalid_input("run_finder: unknown method");
}

/// The deep linear autoencoder as a merit problem over flattened parameters.
struct DlaeProblem {
  const Architecture* arch;
  const Dataset* data;

  std::size_t dim() const { return arch->param_count(); }

  double loss(const Vec& x) const {
    return critpt::loss(NetworkParams::unflatten(*arch, x), *data);
  }

  Vec residual(const Vec& x) const {
    return gradient(NetworkParams::unflatten(*arch, x), *data).flatten();
  }

  Vec apply_hessian(const Vec& x, const Vec& v) const {
    return hvp(NetworkParams::unflatten(*arch, x), NetworkParams::unflatten(*arch, v), *data)
        .flatten();
  }
};

/// Terminal point of one finder run, classified against the Hessian spectrum.
struct CriticalPointRecord {
  FinderMethod method = FinderMethod::gnm;
  std::size_t trajectory_id = 0;
  std::size_t seed_id = 0;
  double terminal_sq_grad_norm = 0.0;
  double loss = 0.0;
  std::size_t index = 0;
  std::size_t nullity = 0;
  bool converged = false;
  bool matched = false;
  /// Matched entry's subset. "0" denotes the empty subset (the all-zero
  /// point), since ranks are 1-based; empty string means unmatched.
  std::string matched_subset;
  bool ambiguous_match = false;
};

inline CriticalPointRecord classify_terminal(const NetworkParams& terminal, const Dataset& data,
                                             double tau_rel, double terminal_g,
                                             double epsilon_crit,
                                             std::size_t param_cap = 2048) {
  Classification c = classify_point(terminal, data, tau_rel, param_cap);
  CriticalPointRecord rec;
  rec.terminal_sq_grad_norm = terminal_g;
  rec.loss = loss(terminal, data);
  rec.index = c.index;
  rec.nullity = c.nullity;
  rec.converged = terminal_g <= epsilon_crit;
  return rec;
}

}  // namespace critpt
