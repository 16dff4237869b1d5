#pragma once

// Independent oracles used by the test suites: finite differences for the
// derivatives, a dense More-Sorensen solver for the trust-region subproblem,
// and small synthetic merit problems for the finder harness. Everything here
// is deliberately separate from the implementation paths it checks.

#include <cmath>
#include <cstdint>
#include <vector>

#include "critpt/dlae.hpp"
#include "critpt/matrix.hpp"
#include "critpt/rng.hpp"
#include "critpt/sym_eig.hpp"
#include "critpt/vec.hpp"

namespace oracles {

using critpt::Architecture;
using critpt::Dataset;
using critpt::Matrix;
using critpt::NetworkParams;
using critpt::SeededRng;
using critpt::Vec;

inline double rel_err(double got, double want) {
  return std::fabs(got - want) / std::max(1.0, std::fabs(want));
}

inline double max_rel_err(const Vec& got, const Vec& want) {
  double scale = 1.0;
  for (double v : want) scale = std::max(scale, std::fabs(v));
  double err = 0.0;
  for (std::size_t i = 0; i < got.size(); ++i)
    err = std::max(err, std::fabs(got[i] - want[i]) / scale);
  return err;
}

// --- finite differences ----------------------------------------------------

inline double fd_step(const Vec& theta) {
  return 1e-5 * std::max(1.0, critpt::max_abs(theta));
}

inline Vec fd_gradient(const NetworkParams& params, const Dataset& data) {
  const Vec theta = params.flatten();
  const double h = fd_step(theta);
  Vec grad(theta.size());
  for (std::size_t i = 0; i < theta.size(); ++i) {
    Vec plus = theta, minus = theta;
    plus[i] += h;
    minus[i] -= h;
    grad[i] = (critpt::loss(NetworkParams::unflatten(params.arch, plus), data) -
               critpt::loss(NetworkParams::unflatten(params.arch, minus), data)) /
              (2.0 * h);
  }
  return grad;
}

inline Vec fd_hvp(const NetworkParams& params, const Vec& direction, const Dataset& data) {
  const Vec theta = params.flatten();
  const double h = fd_step(theta);
  Vec plus = theta, minus = theta;
  critpt::axpy(h, direction, plus);
  critpt::axpy(-h, direction, minus);
  const Vec gp = critpt::gradient(NetworkParams::unflatten(params.arch, plus), data).flatten();
  const Vec gm = critpt::gradient(NetworkParams::unflatten(params.arch, minus), data).flatten();
  Vec out(theta.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (gp[i] - gm[i]) / (2.0 * h);
  return out;
}

inline Matrix fd_hessian(const NetworkParams& params, const Dataset& data) {
  const Vec theta = params.flatten();
  const std::size_t n = theta.size();
  const double h = 1e-4 * std::max(1.0, critpt::max_abs(theta));
  auto eval = [&](Vec t) { return critpt::loss(NetworkParams::unflatten(params.arch, t), data); };
  Matrix hess(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) {
      Vec pp = theta, pm = theta, mp = theta, mm = theta;
      pp[i] += h; pp[j] += h;
      pm[i] += h; pm[j] -= h;
      mp[i] -= h; mp[j] += h;
      mm[i] -= h; mm[j] -= h;
      const double v = (eval(pp) - eval(pm) - eval(mp) + eval(mm)) / (4.0 * h * h);
      hess(i, j) = v;
      hess(j, i) = v;
    }
  }
  return hess;
}

// --- random instances -------------------------------------------------------

/// Architecture with d in [2,8], L in [2,4], mixed hidden widths.
inline Architecture random_architecture(SeededRng& rng) {
  const std::size_t d = 2 + std::size_t(rng.below(7));
  const std::size_t depth = 2 + std::size_t(rng.below(3));
  std::vector<std::size_t> widths{d};
  for (std::size_t i = 1; i < depth; ++i) widths.push_back(1 + std::size_t(rng.below(d)));
  widths.push_back(d);
  return Architecture(widths);
}

inline NetworkParams random_params(const Architecture& arch, SeededRng& rng, double scale = 0.8) {
  NetworkParams p = NetworkParams::zeros(arch);
  for (Matrix& w : p.layers)
    for (double& v : w.data()) v = scale * rng.normal();
  return p;
}

/// Symmetric matrix with a prescribed spectrum and a random seeded basis.
inline Matrix symmetric_from_spectrum(const std::vector<double>& eigenvalues, SeededRng& rng) {
  const std::size_t n = eigenvalues.size();
  Matrix q = critpt::detail::orthonormal_columns(critpt::detail::gaussian_matrix(n, n, rng));
  Matrix a(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < n; ++k) acc += q(i, k) * eigenvalues[k] * q(j, k);
      a(i, j) = acc;
    }
  // exact symmetry regardless of rounding
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double s = 0.5 * (a(i, j) + a(j, i));
      a(i, j) = s;
      a(j, i) = s;
    }
  return a;
}

/// Dataset with Sigma exactly diag(lambdas) (descending) and basis = I.
/// X = diag(sqrt(lambda_i * N)) reproduces Sigma to roundoff, within the
/// documented 1e-12 storage tolerance.
inline Dataset diag_dataset(const std::vector<double>& lambdas_desc) {
  const std::size_t d = lambdas_desc.size();
  Dataset ds;
  ds.x = Matrix(d, d);
  ds.sigma = Matrix(d, d);
  ds.basis = Matrix::identity(d);
  ds.spectrum = lambdas_desc;
  for (std::size_t i = 0; i < d; ++i) {
    ds.x(i, i) = std::sqrt(lambdas_desc[i] * double(d));
    ds.sigma(i, i) = lambdas_desc[i];
  }
  return ds;
}

// --- exact trust-region subproblem (More-Sorensen via eigendecomposition) ---

struct TrOracle {
  Vec step;
  double model_decrease = 0.0;
};

inline double model_value(const Matrix& b, const Vec& grad, const Vec& s) {
  const Vec bs = b.apply(s);
  return critpt::dot(grad, s) + 0.5 * critpt::dot(s, bs);
}

/// Exact minimizer of <g,s> + 1/2 <s,Bs> over ||s|| <= radius for small dense
/// symmetric B, via bisection on the shifted system in the eigenbasis.
inline TrOracle exact_tr_subproblem(const Matrix& b, const Vec& grad, double radius) {
  const auto eig = critpt::sym_eig(b);
  const std::size_t n = grad.size();
  Vec g_hat(n, 0.0);
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t i = 0; i < n; ++i) g_hat[k] += eig.eigenvectors(i, k) * grad[i];

  const double lambda_min = eig.eigenvalues.front();
  auto step_norm = [&](double mu) {
    double acc = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      const double denom = eig.eigenvalues[k] + mu;
      acc += (g_hat[k] / denom) * (g_hat[k] / denom);
    }
    return std::sqrt(acc);
  };
  auto build_step = [&](double mu) {
    Vec s(n, 0.0);
    for (std::size_t k = 0; k < n; ++k) {
      const double coeff = -g_hat[k] / (eig.eigenvalues[k] + mu);
      for (std::size_t i = 0; i < n; ++i) s[i] += coeff * eig.eigenvectors(i, k);
    }
    return s;
  };

  TrOracle out;
  if (lambda_min > 0.0 && step_norm(0.0) <= radius) {
    out.step = build_step(0.0);
  } else {
    // Generic case only (no hard case): ||s(mu)|| decreases from above the
    // radius to zero as mu grows past max(0, -lambda_min).
    double lo = std::max(0.0, -lambda_min) + 1e-14;
    double hi = std::max(1.0, lo * 2.0);
    while (step_norm(hi) > radius) hi *= 2.0;
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (lo + hi);
      (step_norm(mid) > radius ? lo : hi) = mid;
    }
    out.step = build_step(hi);
  }
  out.model_decrease = -model_value(b, grad, out.step);
  return out;
}

/// Cauchy point (best step along -grad inside the radius) model decrease.
inline double cauchy_decrease(const Matrix& b, const Vec& grad, double radius) {
  const double gg = critpt::dot(grad, grad);
  if (gg == 0.0) return 0.0;
  const Vec bg = b.apply(grad);
  const double gbg = critpt::dot(grad, bg);
  const double g_norm = std::sqrt(gg);
  double t;
  if (gbg <= 0.0) {
    t = radius / g_norm;
  } else {
    t = std::min(gg / gbg, radius / g_norm);
  }
  Vec s = critpt::scaled(grad, -t);
  return -model_value(b, grad, s);
}

// --- synthetic merit problems for the finder harness ------------------------

/// Quadratic loss with constant Hessian A: residual A x - b. One exact Newton
/// step reaches the critical point.
struct QuadraticProblem {
  Matrix a;
  Vec b;

  std::size_t dim() const { return b.size(); }
  double loss(const Vec& x) const {
    const Vec ax = a.apply(x);
    return 0.5 * critpt::dot(x, ax) - critpt::dot(b, x);
  }
  Vec residual(const Vec& x) const { return critpt::sub(a.apply(x), b); }
  Vec apply_hessian(const Vec&, const Vec& v) const { return a.apply(v); }
};

/// One-dimensional quartic surrogate: g(x) = 1/2 x^4 via residual x^2.
struct QuarticProblem {
  std::size_t dim() const { return 1; }
  double loss(const Vec& x) const { return 0.25 * x[0] * x[0] * x[0] * x[0]; }
  Vec residual(const Vec& x) const { return {x[0] * x[0]}; }
  Vec apply_hessian(const Vec& x, const Vec& v) const { return {2.0 * x[0] * v[0]}; }
};

}  // namespace oracles
