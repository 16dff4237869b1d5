#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "critpt/errors.hpp"
#include "critpt/matrix.hpp"
#include "critpt/rng.hpp"
#include "critpt/sym_eig.hpp"
#include "critpt/vec.hpp"

namespace critpt {

/// Layer widths (n_0, ..., n_L) of a deep linear autoencoder. n_0 = n_L = d,
/// and layer i is an n_i x n_{i-1} weight matrix.
struct Architecture {
  std::vector<std::size_t> widths;

  Architecture() = default;
  explicit Architecture(std::vector<std::size_t> w) : widths(std::move(w)) {
    if (widths.size() < 3)
      throw invalid_input("architecture: need at least two weight matrices");
    for (std::size_t n : widths)
      if (n == 0) throw invalid_input("architecture: zero width");
    if (widths.front() != widths.back())
      throw invalid_input("architecture: first and last width must agree");
  }

  std::size_t d() const { return widths.front(); }
  std::size_t depth() const { return widths.size() - 1; }  // L

  std::size_t bottleneck() const {
    std::size_t p = widths.front();
    for (std::size_t n : widths) p = std::min(p, n);
    return p;
  }

  std::size_t param_count() const {
    std::size_t total = 0;
    for (std::size_t i = 1; i < widths.size(); ++i) total += widths[i] * widths[i - 1];
    return total;
  }

  bool operator==(const Architecture& o) const { return widths == o.widths; }
};

/// The point theta = (W_1, ..., W_L) in parameter space.
struct NetworkParams {
  Architecture arch;
  std::vector<Matrix> layers;  // layers[k] is W_{k+1}, shape widths[k+1] x widths[k]

  NetworkParams() = default;

  static NetworkParams zeros(const Architecture& a) {
    NetworkParams p;
    p.arch = a;
    for (std::size_t k = 0; k + 1 < a.widths.size(); ++k)
      p.layers.emplace_back(a.widths[k + 1], a.widths[k]);
    return p;
  }

  static NetworkParams identity(const Architecture& a) {
    NetworkParams p = zeros(a);
    for (std::size_t k = 0; k < p.layers.size(); ++k) {
      Matrix& w = p.layers[k];
      for (std::size_t i = 0; i < std::min(w.rows(), w.cols()); ++i) w(i, i) = 1.0;
    }
    return p;
  }

  /// Layer-by-layer row-major flattening; the coordinate order used by the
  /// Hessian, the Krylov solvers, and every serialized vector.
  Vec flatten() const {
    Vec out;
    out.reserve(arch.param_count());
    for (const Matrix& w : layers) out.insert(out.end(), w.data().begin(), w.data().end());
    return out;
  }

  static NetworkParams unflatten(const Architecture& a, const Vec& coords) {
    if (coords.size() != a.param_count())
      throw dimension_error("unflatten: coordinate count mismatch");
    NetworkParams p;
    p.arch = a;
    std::size_t pos = 0;
    for (std::size_t k = 0; k + 1 < a.widths.size(); ++k) {
      const std::size_t r = a.widths[k + 1], c = a.widths[k];
      std::vector<double> block(coords.begin() + pos, coords.begin() + pos + r * c);
      p.layers.emplace_back(r, c, std::move(block));
      pos += r * c;
    }
    return p;
  }

  bool shapes_match(const Architecture& a) const {
    if (!(arch == a) || layers.size() != a.depth()) return false;
    for (std::size_t k = 0; k < layers.size(); ++k)
      if (layers[k].rows() != a.widths[k + 1] || layers[k].cols() != a.widths[k])
        return false;
    return true;
  }
};

enum class SpectrumRule { powers_of_two, linear, explicit_list };

inline std::string spectrum_rule_name(SpectrumRule r) {
  switch (r) {
    case SpectrumRule::powers_of_two: return "powers-of-two";
    case SpectrumRule::linear: return "linear";
    case SpectrumRule::explicit_list: return "explicit";
  }
  return "?";
}

/// Input data X with its second-moment matrix Sigma = X X^T / N and the
/// spectrum lambda_1 > ... > lambda_d > 0 with eigenvector basis U
/// (column i pairs with lambda_i).
struct Dataset {
  Matrix x;                      // d x N
  Matrix sigma;                  // d x d, equals X X^T / N
  std::vector<double> spectrum;  // strictly decreasing
  Matrix basis;                  // U, d x d orthogonal
  std::uint64_t seed = 0;
  std::string spectrum_rule = "explicit";
  std::string generator_id = SeededRng::generator_id();

  std::size_t d() const { return x.rows(); }
  std::size_t n_samples() const { return x.cols(); }

  /// Build a dataset from raw samples; spectrum and basis come out of the
  /// eigendecomposition of X X^T / N (descending order).
  static Dataset from_samples(Matrix samples) {
    Dataset ds;
    ds.sigma = second_moment(samples);
    SymEigResult eig = sym_eig(ds.sigma);
    const std::size_t d = samples.rows();
    ds.spectrum.resize(d);
    ds.basis = Matrix(d, d);
    for (std::size_t k = 0; k < d; ++k) {
      ds.spectrum[k] = eig.eigenvalues[d - 1 - k];
      for (std::size_t i = 0; i < d; ++i) ds.basis(i, k) = eig.eigenvectors(i, d - 1 - k);
    }
    ds.x = std::move(samples);
    return ds;
  }

  static Matrix second_moment(const Matrix& samples) {
    const std::size_t d = samples.rows(), n = samples.cols();
    Matrix s(d, d);
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = i; j < d; ++j) {
        double acc = 0.0;
        for (std::size_t k = 0; k < n; ++k) acc += samples(i, k) * samples(j, k);
        s(i, j) = acc / double(n);
        s(j, i) = s(i, j);
      }
    return s;
  }
};

namespace detail {

/// Modified Gram-Schmidt with one reorthogonalization pass; columns of the
/// result are orthonormal to machine precision.
inline Matrix orthonormal_columns(Matrix g) {
  const std::size_t rows = g.rows(), cols = g.cols();
  if (rows < cols) throw invalid_input("orthonormalize: more columns than rows");
  for (std::size_t j = 0; j < cols; ++j) {
    for (int pass = 0; pass < 2; ++pass) {
      for (std::size_t k = 0; k < j; ++k) {
        double proj = 0.0;
        for (std::size_t i = 0; i < rows; ++i) proj += g(i, k) * g(i, j);
        for (std::size_t i = 0; i < rows; ++i) g(i, j) -= proj * g(i, k);
      }
    }
    double nrm = 0.0;
    for (std::size_t i = 0; i < rows; ++i) nrm += g(i, j) * g(i, j);
    nrm = std::sqrt(nrm);
    if (nrm < 1e-12) throw invalid_input("orthonormalize: rank-deficient input");
    for (std::size_t i = 0; i < rows; ++i) g(i, j) /= nrm;
  }
  return g;
}

inline Matrix gaussian_matrix(std::size_t rows, std::size_t cols, SeededRng& rng) {
  Matrix m(rows, cols);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) m(i, j) = rng.normal();
  return m;
}

}  // namespace detail

inline std::vector<double> make_spectrum(std::size_t d, SpectrumRule rule,
                                         const std::vector<double>& explicit_values = {}) {
  std::vector<double> lam;
  switch (rule) {
    case SpectrumRule::powers_of_two:
      for (std::size_t i = 1; i <= d; ++i) lam.push_back(std::ldexp(1.0, int(d - i)));
      break;
    case SpectrumRule::linear:
      for (std::size_t i = 1; i <= d; ++i) lam.push_back(double(d - i + 1));
      break;
    case SpectrumRule::explicit_list:
      lam = explicit_values;
      break;
  }
  if (lam.size() != d) throw invalid_input("spectrum: need exactly d eigenvalues");
  for (double v : lam)
    if (!(v > 0.0) || !std::isfinite(v)) throw invalid_input("spectrum: eigenvalues must be positive");
  std::vector<double> sorted = lam;
  std::sort(sorted.begin(), sorted.end(), std::greater<double>());
  for (std::size_t i = 1; i < sorted.size(); ++i)
    if (sorted[i] == sorted[i - 1]) throw invalid_input("spectrum: eigenvalues must be distinct");
  return sorted;
}

/// Generate X = U D Z with U a seeded random orthogonal matrix, D = diag
/// sqrt(lambda_i), and Z built from orthonormalized rows scaled by sqrt(N),
/// so that X X^T / N carries exactly the requested spectrum.
inline Dataset generate_dataset(std::size_t d, std::size_t n_samples, SpectrumRule rule,
                                std::uint64_t seed,
                                const std::vector<double>& explicit_spectrum = {}) {
  if (d < 2) throw invalid_input("generate_dataset: d must be at least 2");
  if (n_samples < d) throw invalid_input("generate_dataset: need n_samples >= d");

  Dataset ds;
  ds.spectrum = make_spectrum(d, rule, explicit_spectrum);
  ds.seed = seed;
  ds.spectrum_rule = spectrum_rule_name(rule);

  SeededRng rng(seed);
  ds.basis = detail::orthonormal_columns(detail::gaussian_matrix(d, d, rng));
  // Orthonormal columns of an N x d factor give Z = sqrt(N) Q^T with
  // orthonormal rows, hence Z Z^T = N I.
  Matrix q = detail::orthonormal_columns(detail::gaussian_matrix(n_samples, d, rng));

  const double root_n = std::sqrt(double(n_samples));
  Matrix ud(d, d);  // U D
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) ud(i, j) = ds.basis(i, j) * std::sqrt(ds.spectrum[j]);

  ds.x = Matrix(d, n_samples);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t k = 0; k < n_samples; ++k) {
      double acc = 0.0;
      for (std::size_t j = 0; j < d; ++j) acc += ud(i, j) * q(k, j) * root_n;
      ds.x(i, k) = acc;
    }
  ds.sigma = Dataset::second_moment(ds.x);
  return ds;
}

namespace detail {

/// Partial products of consecutive layers. partial(a, b) is
/// W_{b+1} ... W_{a+1} in 0-based layer indices (layers a..b applied in
/// order), mapping width[a] to width[b+1]; an empty range (a > b) is the
/// identity.
struct ChainProducts {
  const NetworkParams& params;
  std::vector<std::vector<Matrix>> table;  // table[a][b-a] for b >= a

  explicit ChainProducts(const NetworkParams& p) : params(p) {
    const std::size_t depth = p.layers.size();
    table.resize(depth);
    for (std::size_t a = 0; a < depth; ++a) {
      table[a].reserve(depth - a);
      table[a].push_back(p.layers[a]);
      for (std::size_t b = a + 1; b < depth; ++b)
        table[a].push_back(p.layers[b] * table[a][b - a - 1]);
    }
  }

  Matrix partial(std::size_t a, std::size_t b) const {  // a > b means empty
    if (a > b) return Matrix::identity(params.arch.widths[a]);
    return table[a][b - a];
  }

  Matrix end_to_end() const { return partial(0, params.layers.size() - 1); }
  // A_k = layers above k, B_k = layers below k (empty products are identity).
  Matrix above(std::size_t k) const { return partial(k + 1, params.layers.size() - 1); }
  Matrix below(std::size_t k) const { return k == 0 ? Matrix::identity(params.arch.widths[0]) : partial(0, k - 1); }
};

inline void require_shapes(const NetworkParams& params, const Dataset& data) {
  if (!params.shapes_match(params.arch))
    throw dimension_error("params: layer shapes inconsistent with architecture");
  if (params.arch.d() != data.d())
    throw dimension_error("params/data: data dimension mismatch");
}

}  // namespace detail

/// L(theta) = 1/2 tr((W - I) Sigma (W - I)^T), W = W_L ... W_1.
inline double loss(const NetworkParams& params, const Dataset& data) {
  detail::require_shapes(params, data);
  detail::ChainProducts chain(params);
  Matrix e = chain.end_to_end();
  for (std::size_t i = 0; i < e.rows(); ++i) e(i, i) -= 1.0;
  const Matrix es = e * data.sigma;
  double acc = 0.0;
  for (std::size_t i = 0; i < e.rows(); ++i)
    for (std::size_t j = 0; j < e.cols(); ++j) acc += es(i, j) * e(i, j);
  return 0.5 * acc;
}

/// Gradient block i is A_i^T (W - I) Sigma B_i^T.
inline NetworkParams gradient(const NetworkParams& params, const Dataset& data) {
  detail::require_shapes(params, data);
  detail::ChainProducts chain(params);
  const std::size_t depth = params.layers.size();

  Matrix e = chain.end_to_end();
  for (std::size_t i = 0; i < e.rows(); ++i) e(i, i) -= 1.0;
  const Matrix m = e * data.sigma;  // (W - I) Sigma

  NetworkParams g;
  g.arch = params.arch;
  g.layers.reserve(depth);
  for (std::size_t k = 0; k < depth; ++k)
    g.layers.push_back(chain.above(k).transpose() * m * chain.below(k).transpose());
  return g;
}

/// Exact Hessian-vector product: the directional derivative of `gradient`
/// along `direction`, from the closed-form product rule over the layer chain.
inline NetworkParams hvp(const NetworkParams& params, const NetworkParams& direction,
                         const Dataset& data) {
  detail::require_shapes(params, data);
  if (!direction.shapes_match(params.arch))
    throw dimension_error("hvp: direction shapes inconsistent with point");

  detail::ChainProducts chain(params);
  const std::size_t depth = params.layers.size();

  Matrix e = chain.end_to_end();
  for (std::size_t i = 0; i < e.rows(); ++i) e(i, i) -= 1.0;
  const Matrix e_sigma = e * data.sigma;

  // dW = sum_j A_j V_j B_j
  Matrix dw(params.arch.d(), params.arch.d());
  for (std::size_t j = 0; j < depth; ++j)
    dw += chain.above(j) * direction.layers[j] * chain.below(j);
  const Matrix dw_sigma = dw * data.sigma;

  NetworkParams out;
  out.arch = params.arch;
  out.layers.reserve(depth);
  for (std::size_t k = 0; k < depth; ++k) {
    const Matrix a_t = chain.above(k).transpose();
    const Matrix b_t = chain.below(k).transpose();

    Matrix block = a_t * dw_sigma * b_t;

    // (dA_k)^T (W - I) Sigma B_k^T, substituting V_j for each layer above k.
    for (std::size_t j = k + 1; j < depth; ++j) {
      const Matrix da = chain.partial(j + 1, depth - 1) * direction.layers[j] *
                        chain.partial(k + 1, j - 1);
      block += da.transpose() * e_sigma * b_t;
    }
    // A_k^T (W - I) Sigma (dB_k)^T, substituting V_j for each layer below k.
    for (std::size_t j = 0; j < k; ++j) {
      const Matrix db = chain.partial(j + 1, k - 1) * direction.layers[j] *
                        chain.below(j);
      block += a_t * e_sigma * db.transpose();
    }
    out.layers.push_back(std::move(block));
  }
  return out;
}

/// Assemble the full P x P Hessian column-by-column from HVPs and symmetrize.
inline Matrix hessian(const NetworkParams& params, const Dataset& data,
                      std::size_t param_cap = 2048) {
  detail::require_shapes(params, data);
  const std::size_t p = params.arch.param_count();
  if (p > param_cap)
    throw size_error("hessian: parameter count exceeds cap; reduce the architecture");

  Matrix h(p, p);
  Vec basis(p, 0.0);
  for (std::size_t j = 0; j < p; ++j) {
    basis[j] = 1.0;
    const Vec column = hvp(params, NetworkParams::unflatten(params.arch, basis), data).flatten();
    basis[j] = 0.0;
    for (std::size_t i = 0; i < p; ++i) h(i, j) = column[i];
  }
  for (std::size_t i = 0; i < p; ++i)
    for (std::size_t j = i + 1; j < p; ++j) {
      const double s = 0.5 * (h(i, j) + h(j, i));
      h(i, j) = s;
      h(j, i) = s;
    }
  return h;
}

/// g(theta) = 1/2 ||grad L||^2, the merit function every finder drives to zero.
inline double sq_grad_norm(const NetworkParams& params, const Dataset& data) {
  const NetworkParams g = gradient(params, data);
  double acc = 0.0;
  for (const Matrix& block : g.layers)
    for (double v : block.data()) acc += v * v;
  return 0.5 * acc;
}

/// 1/2 sum_{i>p} lambda_i: the loss of the best rank-p approximation, a lower
/// bound for the loss everywhere.
inline double min_loss(const Architecture& arch, const Dataset& data) {
  double acc = 0.0;
  for (std::size_t i = arch.bottleneck(); i < data.spectrum.size(); ++i)
    acc += data.spectrum[i];
  return 0.5 * acc;
}

}  // namespace critpt
