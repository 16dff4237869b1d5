#pragma once

#include <cmath>
#include <cstddef>

#include "critpt/errors.hpp"
#include "critpt/vec.hpp"

namespace critpt {

enum class SteihaugExit { interior, boundary, negative_curvature, max_iters };

struct SteihaugResult {
  Vec step;
  std::size_t iterations = 0;
  SteihaugExit exit = SteihaugExit::interior;
};

namespace detail {

/// Positive tau with ||s + tau d|| = radius.
inline double boundary_tau(const Vec& s, const Vec& d, double radius) {
  const double dd = dot(d, d);
  if (dd == 0.0) return 0.0;
  const double sd = dot(s, d);
  const double ss = dot(s, s);
  const double disc = std::max(0.0, sd * sd + dd * (radius * radius - ss));
  return (-sd + std::sqrt(disc)) / dd;
}

inline void clamp_to_radius(Vec& s, double radius) {
  const double ns = norm2(s);
  if (ns > radius) scale(s, radius / ns);
}

}  // namespace detail

/// Steihaug-Toint truncated conjugate gradient for the trust-region
/// subproblem  min  <grad, s> + 1/2 <s, B s>  subject to  ||s|| <= radius.
///
/// B only enters through apply_b and is assumed symmetric positive
/// semidefinite (the Gauss-Newton curvature used by the trust-region finder
/// is a square, so this holds by construction). The step never exceeds the
/// radius and its model decrease is at least the Cauchy-point decrease.
template <class ApplyB>
SteihaugResult steihaug_cg(ApplyB&& apply_b, const Vec& grad, double radius,
                           double rel_tol, std::size_t max_iters) {
  if (!(radius > 0.0)) throw invalid_input("steihaug_cg: radius must be positive");
  if (!all_finite(grad)) throw invalid_input("steihaug_cg: non-finite gradient");

  const std::size_t n = grad.size();
  SteihaugResult res;
  res.step.assign(n, 0.0);

  const double g_norm = norm2(grad);
  if (g_norm == 0.0) return res;
  const double stop = rel_tol * g_norm;

  Vec r = grad;          // model gradient at s
  Vec d = scaled(grad, -1.0);
  double rr = dot(r, r);

  for (std::size_t k = 1; k <= max_iters; ++k) {
    res.iterations = k;
    Vec bd = apply_b(d);
    const double dbd = dot(d, bd);
    if (!(dbd > 0.0)) {
      // Zero or (numerically) negative curvature: follow d to the boundary.
      const double tau = detail::boundary_tau(res.step, d, radius);
      axpy(tau, d, res.step);
      detail::clamp_to_radius(res.step, radius);
      res.exit = SteihaugExit::negative_curvature;
      return res;
    }
    const double alpha = rr / dbd;
    Vec s_next = res.step;
    axpy(alpha, d, s_next);
    if (norm2(s_next) >= radius) {
      const double tau = detail::boundary_tau(res.step, d, radius);
      axpy(tau, d, res.step);
      detail::clamp_to_radius(res.step, radius);
      res.exit = SteihaugExit::boundary;
      return res;
    }
    res.step = std::move(s_next);
    axpy(alpha, bd, r);
    const double rr_new = dot(r, r);
    if (std::sqrt(rr_new) <= stop) {
      res.exit = SteihaugExit::interior;
      return res;
    }
    const double beta = rr_new / rr;
    rr = rr_new;
    for (std::size_t i = 0; i < n; ++i) d[i] = -r[i] + beta * d[i];
  }
  res.exit = SteihaugExit::max_iters;
  return res;
}

}  // namespace critpt
