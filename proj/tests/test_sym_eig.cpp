#include <catch2/catch_amalgamated.hpp>

#include "critpt/matrix.hpp"
#include "critpt/rng.hpp"
#include "critpt/sym_eig.hpp"
#include "support/oracles.hpp"

using critpt::Matrix;
using critpt::sym_eig;

namespace {

double reconstruction_error(const Matrix& a, const critpt::SymEigResult& eig) {
  const std::size_t n = a.rows();
  double err = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < n; ++k)
        acc += eig.eigenvectors(i, k) * eig.eigenvalues[k] * eig.eigenvectors(j, k);
      err = std::max(err, std::fabs(acc - a(i, j)));
    }
  return err;
}

double orthonormality_error(const Matrix& q) {
  const std::size_t n = q.rows();
  double err = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < n; ++k) acc += q(k, i) * q(k, j);
      err = std::max(err, std::fabs(acc - (i == j ? 1.0 : 0.0)));
    }
  return err;
}

}  // namespace

TEST_CASE("sym_eig diagonal case") {
  const Matrix a(3, 3, {3, 0, 0, 0, 1, 0, 0, 0, 2});
  const auto eig = sym_eig(a);
  REQUIRE(eig.eigenvalues.size() == 3);
  CHECK(eig.eigenvalues[0] == Catch::Approx(1.0));
  CHECK(eig.eigenvalues[1] == Catch::Approx(2.0));
  CHECK(eig.eigenvalues[2] == Catch::Approx(3.0));
}

TEST_CASE("sym_eig off-diagonal pair") {
  const Matrix a(2, 2, {0, 1, 1, 0});
  const auto eig = sym_eig(a);
  CHECK(eig.eigenvalues[0] == Catch::Approx(-1.0));
  CHECK(eig.eigenvalues[1] == Catch::Approx(1.0));
}

TEST_CASE("sym_eig reconstructs a seeded random 16x16 matrix") {
  critpt::SeededRng rng(7);
  std::vector<double> lam;
  for (int i = 0; i < 16; ++i) lam.push_back(rng.normal() * 3.0);
  std::sort(lam.begin(), lam.end());
  const Matrix a = oracles::symmetric_from_spectrum(lam, rng);
  const auto eig = sym_eig(a);
  double lmax = 0.0;
  for (double l : eig.eigenvalues) lmax = std::max(lmax, std::fabs(l));
  CHECK(reconstruction_error(a, eig) <= 1e-10 * std::max(1.0, lmax));
}

TEST_CASE("sym_eig invariants over 100 seeded matrices up to 64x64") {
  critpt::SeededRng rng(2024);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + std::size_t(rng.below(63));
    Matrix a(n, n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i; j < n; ++j) {
        const double v = rng.normal();
        a(i, j) = v;
        a(j, i) = v;
      }
    const auto eig = sym_eig(a);
    double lmax = 0.0;
    for (double l : eig.eigenvalues) lmax = std::max(lmax, std::fabs(l));
    REQUIRE(reconstruction_error(a, eig) <= 1e-10 * std::max(1.0, lmax));
    REQUIRE(orthonormality_error(eig.eigenvectors) <= 1e-10);
    for (std::size_t k = 1; k < n; ++k)
      REQUIRE(eig.eigenvalues[k - 1] <= eig.eigenvalues[k]);
  }
}

TEST_CASE("sym_eig is deterministic") {
  critpt::SeededRng rng(5);
  const Matrix a = oracles::symmetric_from_spectrum({-2.0, 0.5, 1.0, 4.0}, rng);
  const auto e1 = sym_eig(a);
  const auto e2 = sym_eig(a);
  CHECK(e1.eigenvalues == e2.eigenvalues);
  CHECK(e1.eigenvectors.data() == e2.eigenvectors.data());
}

TEST_CASE("sym_eig rejects bad input") {
  CHECK_THROWS_AS(sym_eig(Matrix(2, 3)), critpt::dimension_error);
  const Matrix asym(2, 2, {1.0, 5.0, -5.0, 1.0});
  CHECK_THROWS_AS(sym_eig(asym), critpt::invalid_input);
}
