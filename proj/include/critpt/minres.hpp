#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "critpt/errors.hpp"
#include "critpt/vec.hpp"

namespace critpt {

enum class MinresFlag { converged, max_iters, breakdown };

struct MinresOutcome {
  Vec solution;
  /// Estimate of ||A x - b|| carried by the recurrence (phibar).
  double residual_norm = 0.0;
  std::size_t iterations = 0;
  MinresFlag flag = MinresFlag::converged;
  /// residual_history[k] is the residual-norm estimate after k solution
  /// updates; entry 0 is ||b||. Non-increasing by the minimization property.
  std::vector<double> residual_history;
};

/// MINRES (Paige & Saunders) for symmetric, possibly indefinite or singular
/// systems A x = b, started from x = 0.
///
/// Returns the iterate minimizing ||A x - b|| over the explored Krylov space.
/// Stops when ||r|| <= rel_tol * ||b||, or when ||A r|| <= rel_tol * ||A b||
/// (the least-squares criterion for inconsistent systems), or at max_iters.
/// A vanishing Lanczos beta means the Krylov space is invariant and the
/// current iterate is the exact least-squares minimizer, which counts as
/// converged. The least-squares test fires before the solution update of the
/// current iteration: at that point the final Givens rotation is degenerate
/// for an inconsistent exhausted system and must not be applied.
template <class ApplyA>
MinresOutcome minres(ApplyA&& apply_a, const Vec& b, double rel_tol,
                     std::size_t max_iters) {
  if (!(rel_tol > 0.0 && rel_tol < 1.0))
    throw invalid_input("minres: rel_tol must lie in (0,1)");
  if (!all_finite(b)) throw invalid_input("minres: non-finite right-hand side");

  const std::size_t n = b.size();
  MinresOutcome out;
  out.solution.assign(n, 0.0);

  const double beta1 = norm2(b);
  out.residual_history.push_back(beta1);
  out.residual_norm = beta1;
  if (beta1 == 0.0) return out;

  // Lanczos state.
  Vec r1 = b;
  Vec r2 = b;
  Vec w(n, 0.0), w1(n, 0.0), w2(n, 0.0);
  Vec prev_v;
  double oldb = 0.0, beta = beta1;
  double dbar = 0.0, epsln = 0.0, phibar = beta1;
  double cs = -1.0, sn = 0.0;
  double tnorm2 = 0.0;
  double ab_norm = 0.0;  // ||A b||, fixed at the first iteration

  out.flag = MinresFlag::max_iters;
  std::size_t itn = 0;

  while (itn < max_iters) {
    ++itn;

    // Krylov exhaustion: the explored space is invariant, nothing to add.
    if (itn >= 2 && beta <= 1e-14 * std::sqrt(tnorm2)) {
      out.flag = MinresFlag::converged;
      --itn;
      break;
    }

    const double s = 1.0 / beta;
    Vec v = scaled(r2, s);
    Vec y = apply_a(v);
    if (!all_finite(y)) {
      out.flag = MinresFlag::breakdown;
      --itn;
      break;
    }
    if (itn == 1) ab_norm = beta1 * norm2(y);
    if (itn >= 2) {
      // Symmetry diagnostic: the Lanczos identity <A v_k, v_{k-1}> = beta_k
      // holds up to roundoff for a symmetric operator.
      const double coupling = dot(y, prev_v);
      const double anorm_est = std::sqrt(tnorm2);
      if (std::fabs(coupling - beta) > 1e-6 * (anorm_est + std::fabs(beta))) {
        out.flag = MinresFlag::breakdown;
        --itn;
        break;
      }
      axpy(-beta / oldb, r1, y);
    }
    prev_v = v;
    const double alfa = dot(v, y);
    axpy(-alfa / beta, r2, y);
    r1 = r2;
    r2 = y;
    oldb = beta;
    beta = norm2(r2);
    tnorm2 += alfa * alfa + oldb * oldb + beta * beta;

    // Plane rotation coefficients for the new tridiagonal column.
    const double oldeps = epsln;
    const double delta = cs * dbar + sn * alfa;
    const double gbar = sn * dbar - cs * alfa;
    epsln = sn * beta;
    dbar = -cs * beta;

    // ||A r_{k-1}|| = phibar_{k-1} * sqrt(gbar^2 + dbar^2): the least-squares
    // test, checked before this iteration's solution update.
    const double ar_norm = phibar * std::sqrt(gbar * gbar + dbar * dbar);
    if (ar_norm <= rel_tol * ab_norm) {
      out.flag = MinresFlag::converged;
      --itn;
      break;
    }

    double gamma = std::sqrt(gbar * gbar + beta * beta);
    gamma = std::max(gamma, 1e-300);
    cs = gbar / gamma;
    sn = beta / gamma;
    const double phi = cs * phibar;
    phibar = sn * phibar;

    w1 = w2;
    w2 = w;
    for (std::size_t i = 0; i < n; ++i)
      w[i] = (v[i] - oldeps * w1[i] - delta * w2[i]) / gamma;
    axpy(phi, w, out.solution);

    if (!std::isfinite(phibar) || !all_finite(out.solution)) {
      out.flag = MinresFlag::breakdown;
      break;
    }
    out.residual_history.push_back(phibar);

    if (phibar <= rel_tol * beta1) {
      out.flag = MinresFlag::converged;
      break;
    }
  }

  out.iterations = itn;
  out.residual_norm = out.residual_history.back();
  return out;
}

}  // namespace critpt
