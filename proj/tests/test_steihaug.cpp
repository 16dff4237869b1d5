#include <catch2/catch_amalgamated.hpp>

#include "critpt/matrix.hpp"
#include "critpt/rng.hpp"
#include "critpt/steihaug.hpp"
#include "support/oracles.hpp"

using critpt::Matrix;
using critpt::steihaug_cg;
using critpt::Vec;

namespace {

auto op(const Matrix& b) {
  return [&b](const Vec& v) { return b.apply(v); };
}

}  // namespace

TEST_CASE("steihaug interior Newton point") {
  const Matrix b(2, 2, {2, 0, 0, 2});
  const auto res = steihaug_cg(op(b), {2.0, 0.0}, 10.0, 1e-10, 20);
  CHECK(res.step[0] == Catch::Approx(-1.0));
  CHECK(std::fabs(res.step[1]) <= 1e-14);
  CHECK(res.exit == critpt::SteihaugExit::interior);
}

TEST_CASE("steihaug clips a collinear step to the boundary") {
  const Matrix b(2, 2, {2, 0, 0, 2});
  const auto res = steihaug_cg(op(b), {2.0, 0.0}, 0.5, 1e-10, 20);
  CHECK(res.step[0] == Catch::Approx(-0.5));
  CHECK(std::fabs(res.step[1]) <= 1e-14);
  CHECK(critpt::norm2(res.step) <= 0.5 * (1.0 + 1e-12));
}

TEST_CASE("steihaug boundary step brackets between Cauchy and exact decrease") {
  const Matrix b(2, 2, {1, 0, 0, 100});
  const Vec grad{1.0, 1.0};
  const double radius = 0.1;
  const auto res = steihaug_cg(op(b), grad, radius, 1e-12, 50);

  CHECK(critpt::norm2(res.step) == Catch::Approx(radius).epsilon(1e-12));

  const double decrease = -oracles::model_value(b, grad, res.step);
  const double cauchy = oracles::cauchy_decrease(b, grad, radius);
  const auto exact = oracles::exact_tr_subproblem(b, grad, radius);
  CHECK(decrease >= cauchy * (1.0 - 1e-12));
  CHECK(decrease <= exact.model_decrease * (1.0 + 1e-12));
  CHECK(exact.model_decrease >= cauchy);
}

TEST_CASE("steihaug zero gradient returns the zero step") {
  const Matrix b = Matrix::identity(3);
  const auto res = steihaug_cg(op(b), {0.0, 0.0, 0.0}, 1.0, 1e-10, 10);
  CHECK(critpt::norm2(res.step) == 0.0);
}

TEST_CASE("steihaug rejects a non-positive radius") {
  const Matrix b = Matrix::identity(2);
  CHECK_THROWS_AS(steihaug_cg(op(b), {1.0, 0.0}, 0.0, 1e-10, 10), critpt::invalid_input);
}

TEST_CASE("steihaug properties on seeded PSD systems") {
  critpt::SeededRng rng(23);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t n = 2 + std::size_t(rng.below(11));
    std::vector<double> lam;
    for (std::size_t i = 0; i < n; ++i) lam.push_back(trial % 4 == 0 && i == 0 ? 0.0 : 0.05 + 10.0 * rng.uniform());
    std::sort(lam.begin(), lam.end());
    const Matrix b = oracles::symmetric_from_spectrum(lam, rng);
    Vec grad(n);
    for (double& v : grad) v = rng.normal();
    const double radius = 0.05 + 3.0 * rng.uniform();

    const auto res = steihaug_cg(op(b), grad, radius, 1e-8, 4 * n);
    REQUIRE(critpt::norm2(res.step) <= radius * (1.0 + 1e-12));
    const double decrease = -oracles::model_value(b, grad, res.step);
    const double cauchy = oracles::cauchy_decrease(b, grad, radius);
    REQUIRE(decrease >= 0.0);
    REQUIRE(decrease >= cauchy * (1.0 - 1e-10) - 1e-14);
  }
}
