#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "critpt/dlae.hpp"
#include "critpt/errors.hpp"
#include "critpt/sym_eig.hpp"

namespace critpt {

/// One ground-truth critical point family: an eigenvalue subset with a
/// canonical representative and its numerically certified classification.
struct CatalogEntry {
  std::vector<std::size_t> subset;  // 1-based eigenvalue ranks, sorted
  std::size_t rank = 0;             // |subset|
  double analytic_loss = 0.0;       // 1/2 sum of the left-out eigenvalues
  NetworkParams representative;
  std::size_t index = 0;    // Hessian eigenvalues < -tau
  std::size_t nullity = 0;  // |eigenvalue| <= tau
  double tau = 0.0;
  std::vector<double> hessian_eigenvalues;
};

struct Classification {
  std::size_t index = 0;
  std::size_t nullity = 0;
  std::vector<double> eigenvalues;
  double tau = 0.0;
};

/// All subsets of {1..d} of size 0..p, ordered by size then lexicographically.
inline std::vector<std::vector<std::size_t>> enumerate_subsets(std::size_t d, std::size_t p) {
  if (p > d) throw invalid_input("enumerate_subsets: p exceeds d");
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t r = 0; r <= p; ++r) {
    if (r == 0) {
      out.push_back({});
      continue;
    }
    // first combination 1..r, then lexicographic successor
    std::vector<std::size_t> comb(r);
    for (std::size_t i = 0; i < r; ++i) comb[i] = i + 1;
    while (true) {
      out.push_back(comb);
      std::size_t i = r;
      while (i > 0 && comb[i - 1] == d - r + i) --i;
      if (i == 0) break;
      ++comb[i - 1];
      for (std::size_t j = i; j < r; ++j) comb[j] = comb[j - 1] + 1;
    }
  }
  return out;
}

inline std::string subset_to_string(const std::vector<std::size_t>& subset) {
  std::string s;
  for (std::size_t i = 0; i < subset.size(); ++i) {
    if (i) s += ';';
    s += std::to_string(subset[i]);
  }
  return s;
}

/// Canonical critical point for an eigenvalue subset I:
///   W_1 = S_1 U_I^T,  W_j = S_j S_{j-1}^T (1 < j < L),  W_L = U_I S_{L-1}^T,
/// where S_k selects the first r coordinates of layer k. The end-to-end map
/// is the orthogonal projector U_I U_I^T and every gradient block vanishes
/// (each contains a U_{I^c}^T U_I factor). Entries are copied verbatim from
/// the dataset basis, so the representative is exact to the basis itself.
inline NetworkParams build_representative(const Architecture& arch, const Dataset& data,
                                          const std::vector<std::size_t>& subset) {
  const std::size_t r = subset.size();
  if (r > arch.bottleneck())
    throw invalid_input("build_representative: subset larger than the bottleneck");
  if (arch.d() != data.d())
    throw dimension_error("build_representative: architecture/data dimension mismatch");
  for (std::size_t rank : subset)
    if (rank < 1 || rank > data.d())
      throw invalid_input("build_representative: eigenvalue rank out of range");

  const std::size_t depth = arch.depth();
  NetworkParams params = NetworkParams::zeros(arch);

  if (r == 0) return params;  // the all-zero critical point

  // W_1: rows 0..r-1 are the selected eigenvectors transposed.
  for (std::size_t k = 0; k < r; ++k) {
    const std::size_t col = subset[k] - 1;
    for (std::size_t i = 0; i < data.d(); ++i) params.layers[0](k, i) = data.basis(i, col);
  }
  // Interior selectors S_j S_{j-1}^T: leading r x r identity.
  for (std::size_t j = 1; j + 1 < depth; ++j)
    for (std::size_t k = 0; k < r; ++k) params.layers[j](k, k) = 1.0;
  // W_L: columns 0..r-1 are the selected eigenvectors.
  for (std::size_t k = 0; k < r; ++k) {
    const std::size_t col = subset[k] - 1;
    for (std::size_t i = 0; i < data.d(); ++i) params.layers[depth - 1](i, k) = data.basis(i, col);
  }
  return params;
}

inline double analytic_subset_loss(const Dataset& data, const std::vector<std::size_t>& subset) {
  double acc = 0.0;
  for (std::size_t i = 1; i <= data.d(); ++i) {
    if (std::find(subset.begin(), subset.end(), i) == subset.end())
      acc += data.spectrum[i - 1];
  }
  return 0.5 * acc;
}

/// Morse data at a point: assemble the Hessian, split its spectrum at
/// +-tau with tau = tau_rel * max|eigenvalue| (or tau_rel alone when the
/// whole spectrum is below tau_rel in magnitude).
inline Classification classify_point(const NetworkParams& params, const Dataset& data,
                                     double tau_rel, std::size_t param_cap = 2048) {
  const Matrix h = hessian(params, data, param_cap);
  SymEigResult eig = sym_eig(h);

  double max_abs_eig = 0.0;
  for (double l : eig.eigenvalues) max_abs_eig = std::max(max_abs_eig, std::fabs(l));
  const double tau = (max_abs_eig <= tau_rel) ? tau_rel : tau_rel * max_abs_eig;

  Classification c;
  c.tau = tau;
  c.eigenvalues = std::move(eig.eigenvalues);
  for (double l : c.eigenvalues) {
    if (l < -tau)
      ++c.index;
    else if (std::fabs(l) <= tau)
      ++c.nullity;
  }
  return c;
}

struct Catalog {
  std::vector<CatalogEntry> entries;
  /// Deduplicated (loss, index) pairs, keyed on loss rounded to 12
  /// significant digits; sorted by loss then index.
  std::vector<std::pair<double, std::size_t>> dedup_pairs;
};

inline Catalog build_catalog(const Architecture& arch, const Dataset& data, double tau_rel,
                             std::size_t param_cap = 2048) {
  Catalog catalog;
  const auto subsets = enumerate_subsets(data.d(), arch.bottleneck());
  catalog.entries.reserve(subsets.size());

  std::vector<std::pair<std::string, std::size_t>> seen;
  for (const auto& subset : subsets) {
    CatalogEntry entry;
    entry.subset = subset;
    entry.rank = subset.size();
    entry.analytic_loss = analytic_subset_loss(data, subset);
    entry.representative = build_representative(arch, data, subset);
    Classification c = classify_point(entry.representative, data, tau_rel, param_cap);
    entry.index = c.index;
    entry.nullity = c.nullity;
    entry.tau = c.tau;
    entry.hessian_eigenvalues = std::move(c.eigenvalues);
    catalog.entries.push_back(std::move(entry));
  }

  for (const auto& entry : catalog.entries) {
    char key[40];
    std::snprintf(key, sizeof(key), "%.12g", entry.analytic_loss);
    std::pair<std::string, std::size_t> tagged{key, entry.index};
    if (std::find(seen.begin(), seen.end(), tagged) == seen.end()) {
      seen.push_back(tagged);
      catalog.dedup_pairs.emplace_back(entry.analytic_loss, entry.index);
    }
  }
  std::sort(catalog.dedup_pairs.begin(), catalog.dedup_pairs.end());
  return catalog;
}

}  // namespace critpt
