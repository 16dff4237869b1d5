#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

namespace critpt {

/// Flat coordinate vector used by the Krylov solvers and the finders.
using Vec = std::vector<double>;

inline double dot(const Vec& a, const Vec& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm2(const Vec& a) { return std::sqrt(dot(a, a)); }

/// y += alpha * x
inline void axpy(double alpha, const Vec& x, Vec& y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

inline void scale(Vec& x, double alpha) {
  for (double& v : x) v *= alpha;
}

inline Vec scaled(const Vec& x, double alpha) {
  Vec y = x;
  scale(y, alpha);
  return y;
}

inline Vec add(const Vec& a, const Vec& b) {
  Vec c = a;
  axpy(1.0, b, c);
  return c;
}

inline Vec sub(const Vec& a, const Vec& b) {
  Vec c = a;
  axpy(-1.0, b, c);
  return c;
}

inline bool all_finite(const Vec& a) {
  for (double v : a)
    if (!std::isfinite(v)) return false;
  return true;
}

inline double max_abs(const Vec& a) {
  double m = 0.0;
  for (double v : a) m = std::max(m, std::fabs(v));
  return m;
}

}  // namespace critpt
