#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <vector>

#include "critpt/errors.hpp"
#include "critpt/matrix.hpp"

namespace critpt {

/// Eigendecomposition of a symmetric matrix. Eigenvalues ascending,
/// eigenvector i stored as column i of `eigenvectors`.
struct SymEigResult {
  std::vector<double> eigenvalues;
  Matrix eigenvectors;
};

/// Dense symmetric eigensolver via cyclic Jacobi rotations.
///
/// The input may be asymmetric up to 1e-8 * max|entry| (it is symmetrized
/// internally as (A + A^T)/2); larger asymmetry is rejected. Fully
/// deterministic: identical input, identical output.
inline SymEigResult sym_eig(const Matrix& input) {
  if (input.rows() != input.cols())
    throw dimension_error("sym_eig: matrix must be square");
  if (!input.all_finite())
    throw invalid_input("sym_eig: non-finite entry");

  const std::size_t n = input.rows();
  const double scale = input.max_abs();
  double asym = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      asym = std::max(asym, std::fabs(input(i, j) - input(j, i)));
  if (asym > 1e-8 * std::max(scale, 1e-300))
    throw invalid_input("sym_eig: input asymmetry exceeds tolerance");

  Matrix a(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      a(i, j) = 0.5 * (input(i, j) + input(j, i));
  Matrix v = Matrix::identity(n);

  const int max_sweeps = 64;
  for (int sweep = 1; sweep <= max_sweeps; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off += std::fabs(a(p, q));
    if (off == 0.0) break;

    // Skip tiny rotations during the first sweeps.
    const double thresh = (sweep < 4) ? 0.2 * off / (double(n) * double(n)) : 0.0;

    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        const double g = 100.0 * std::fabs(apq);
        if (sweep > 4 && std::fabs(a(p, p)) + g == std::fabs(a(p, p)) &&
            std::fabs(a(q, q)) + g == std::fabs(a(q, q))) {
          a(p, q) = 0.0;
          a(q, p) = 0.0;
          continue;
        }
        if (std::fabs(apq) <= thresh) continue;

        const double h = a(q, q) - a(p, p);
        double t;
        if (std::fabs(h) + g == std::fabs(h)) {
          t = apq / h;
        } else {
          const double theta = 0.5 * h / apq;
          t = 1.0 / (std::fabs(theta) + std::sqrt(1.0 + theta * theta));
          if (theta < 0.0) t = -t;
        }
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = t * c;
        const double tau = s / (1.0 + c);
        const double tapq = t * apq;

        a(p, p) -= tapq;
        a(q, q) += tapq;
        a(p, q) = 0.0;
        a(q, p) = 0.0;
        for (std::size_t r = 0; r < n; ++r) {
          if (r != p && r != q) {
            const double arp = a(r, p), arq = a(r, q);
            a(r, p) = arp - s * (arq + tau * arp);
            a(p, r) = a(r, p);
            a(r, q) = arq + s * (arp - tau * arq);
            a(q, r) = a(r, q);
          }
          const double vrp = v(r, p), vrq = v(r, q);
          v(r, p) = vrp - s * (vrq + tau * vrp);
          v(r, q) = vrq + s * (vrp - tau * vrq);
        }
      }
    }
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return a(i, i) < a(j, j); });

  SymEigResult result;
  result.eigenvalues.resize(n);
  result.eigenvectors = Matrix(n, n);
  for (std::size_t k = 0; k < n; ++k) {
    result.eigenvalues[k] = a(order[k], order[k]);
    for (std::size_t r = 0; r < n; ++r) result.eigenvectors(r, k) = v(r, order[k]);
  }
  return result;
}

/// Minimum-norm least-squares solve via the eigendecomposition,
/// x = Q pinv(L) Q^T b. Used as the dense oracle against MINRES.
inline Vec pinv_solve(const SymEigResult& eig, const Vec& b, double rank_tol_rel = 1e-12) {
  const std::size_t n = eig.eigenvalues.size();
  if (b.size() != n) throw dimension_error("pinv_solve: length mismatch");
  double lmax = 0.0;
  for (double l : eig.eigenvalues) lmax = std::max(lmax, std::fabs(l));
  const double cut = rank_tol_rel * std::max(lmax, 1e-300);

  Vec x(n, 0.0);
  for (std::size_t k = 0; k < n; ++k) {
    const double lambda = eig.eigenvalues[k];
    if (std::fabs(lambda) <= cut) continue;
    double qk_b = 0.0;
    for (std::size_t i = 0; i < n; ++i) qk_b += eig.eigenvectors(i, k) * b[i];
    const double coeff = qk_b / lambda;
    for (std::size_t i = 0; i < n; ++i) x[i] += coeff * eig.eigenvectors(i, k);
  }
  return x;
}

}  // namespace critpt
