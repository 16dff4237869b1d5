#include <catch2/catch_amalgamated.hpp>

#include <set>

#include "critpt/dlae.hpp"
#include "critpt/rng.hpp"
#include "critpt/sym_eig.hpp"
#include "support/oracles.hpp"

using critpt::Architecture;
using critpt::Dataset;
using critpt::generate_dataset;
using critpt::Matrix;
using critpt::NetworkParams;
using critpt::SpectrumRule;
using critpt::Vec;

TEST_CASE("powers-of-two spectrum rule") {
  const Dataset ds = generate_dataset(2, 4, SpectrumRule::powers_of_two, 3);
  CHECK(ds.spectrum == std::vector<double>{2.0, 1.0});
}

TEST_CASE("powers-of-two subset sums are unique over sizes <= 4 at d = 8") {
  const auto lam = critpt::make_spectrum(8, SpectrumRule::powers_of_two);
  std::set<double> sums;
  std::size_t count = 0;
  for (unsigned mask = 0; mask < 256; ++mask) {
    if (__builtin_popcount(mask) > 4) continue;
    double s = 0.0;
    for (int i = 0; i < 8; ++i)
      if (mask & (1u << i)) s += lam[i];
    sums.insert(s);
    ++count;
  }
  CHECK(count == 163);
  CHECK(sums.size() == 163);
}

TEST_CASE("generated dataset reproduces the requested spectrum") {
  const Dataset ds = generate_dataset(4, 100, SpectrumRule::powers_of_two, 7);
  const auto eig = critpt::sym_eig(ds.sigma);
  const double lmax = ds.spectrum[0];
  for (std::size_t i = 0; i < 4; ++i)
    CHECK(std::fabs(eig.eigenvalues[3 - i] - ds.spectrum[i]) <= 1e-10 * lmax);

  // stored sigma is exactly X X^T / N
  const Matrix recomputed = Dataset::second_moment(ds.x);
  for (std::size_t i = 0; i < recomputed.data().size(); ++i)
    CHECK(std::fabs(recomputed.data()[i] - ds.sigma.data()[i]) <= 1e-12 * lmax);
}

TEST_CASE("generate_dataset rejects bad requests") {
  CHECK_THROWS_AS(generate_dataset(1, 4, SpectrumRule::linear, 0), critpt::invalid_input);
  CHECK_THROWS_AS(generate_dataset(4, 3, SpectrumRule::linear, 0), critpt::invalid_input);
  CHECK_THROWS_AS(generate_dataset(2, 4, SpectrumRule::explicit_list, 0, {1.0, -2.0}),
                  critpt::invalid_input);
  CHECK_THROWS_AS(generate_dataset(2, 4, SpectrumRule::explicit_list, 0, {1.0, 1.0}),
                  critpt::invalid_input);
}

TEST_CASE("loss at the identity network is zero") {
  const Architecture arch({3, 3, 3});
  const Dataset ds = generate_dataset(3, 8, SpectrumRule::linear, 5);
  CHECK(critpt::loss(NetworkParams::identity(arch), ds) == Catch::Approx(0.0).margin(1e-14));
}

TEST_CASE("loss at zero weights is half the trace of sigma") {
  const Dataset ds = oracles::diag_dataset({2.0, 1.0});
  const Architecture arch({2, 1, 2});
  CHECK(critpt::loss(NetworkParams::zeros(arch), ds) == Catch::Approx(1.5));
}

TEST_CASE("loss matches the sample-sum oracle") {
  const Architecture arch({4, 3, 2, 4});
  const Dataset ds = generate_dataset(4, 20, SpectrumRule::linear, 9);
  critpt::SeededRng rng(31);
  const NetworkParams p = oracles::random_params(arch, rng);

  // direct (1/2N) sum_n ||W x_n - x_n||^2
  critpt::detail::ChainProducts chain(p);
  const Matrix w = chain.end_to_end();
  double acc = 0.0;
  for (std::size_t n = 0; n < ds.n_samples(); ++n) {
    for (std::size_t i = 0; i < ds.d(); ++i) {
      double wx = 0.0;
      for (std::size_t j = 0; j < ds.d(); ++j) wx += w(i, j) * ds.x(j, n);
      const double diff = wx - ds.x(i, n);
      acc += diff * diff;
    }
  }
  const double oracle = acc / (2.0 * double(ds.n_samples()));
  CHECK(oracles::rel_err(critpt::loss(p, ds), oracle) <= 1e-10);
}

TEST_CASE("gradient vanishes at the identity network and at zero two-layer nets") {
  const Architecture arch({3, 3, 3});
  const Dataset ds = generate_dataset(3, 6, SpectrumRule::linear, 2);
  CHECK(critpt::max_abs(critpt::gradient(NetworkParams::identity(arch), ds).flatten()) <= 1e-13);
  CHECK(critpt::max_abs(critpt::gradient(NetworkParams::zeros(arch), ds).flatten()) == 0.0);
}

TEST_CASE("gradient matches central finite differences") {
  const Architecture arch({3, 2, 3});
  const Dataset ds = generate_dataset(3, 10, SpectrumRule::linear, 4);
  critpt::SeededRng rng(77);
  const NetworkParams p = oracles::random_params(arch, rng);
  const Vec fd = oracles::fd_gradient(p, ds);
  const Vec got = critpt::gradient(p, ds).flatten();
  CHECK(oracles::max_rel_err(got, fd) <= 1e-6);
}

TEST_CASE("hvp is zero along the zero direction") {
  const Architecture arch({3, 2, 3});
  const Dataset ds = generate_dataset(3, 6, SpectrumRule::linear, 8);
  critpt::SeededRng rng(12);
  const NetworkParams p = oracles::random_params(arch, rng);
  CHECK(critpt::max_abs(critpt::hvp(p, NetworkParams::zeros(arch), ds).flatten()) == 0.0);
}

TEST_CASE("hvp at the identity collapses to (V1 + V2) Sigma") {
  const Dataset ds = oracles::diag_dataset({2.0, 1.0});
  const Architecture arch({2, 2, 2});
  const NetworkParams at = NetworkParams::identity(arch);
  NetworkParams dir = NetworkParams::zeros(arch);
  dir.layers[0] = Matrix::identity(2);  // V_1 = I, V_2 = 0
  const NetworkParams out = critpt::hvp(at, dir, ds);
  for (std::size_t k = 0; k < 2; ++k) {
    CHECK(out.layers[k](0, 0) == Catch::Approx(2.0));
    CHECK(out.layers[k](1, 1) == Catch::Approx(1.0));
    CHECK(std::fabs(out.layers[k](0, 1)) <= 1e-14);
    CHECK(std::fabs(out.layers[k](1, 0)) <= 1e-14);
  }
}

TEST_CASE("hvp matches finite differences of the gradient") {
  const Architecture arch({4, 2, 3, 4});
  const Dataset ds = generate_dataset(4, 12, SpectrumRule::powers_of_two, 21);
  critpt::SeededRng rng(99);
  const NetworkParams p = oracles::random_params(arch, rng);
  Vec dir(arch.param_count());
  for (double& v : dir) v = rng.normal();

  const Vec fd = oracles::fd_hvp(p, dir, ds);
  const Vec got = critpt::hvp(p, NetworkParams::unflatten(arch, dir), ds).flatten();
  CHECK(oracles::max_rel_err(got, fd) <= 1e-6);
}

TEST_CASE("hvp is linear and symmetric as an operator") {
  const Architecture arch({3, 2, 3});
  const Dataset ds = generate_dataset(3, 6, SpectrumRule::linear, 14);
  critpt::SeededRng rng(15);
  const NetworkParams p = oracles::random_params(arch, rng);
  const std::size_t n = arch.param_count();
  Vec v(n), u(n);
  for (double& x : v) x = rng.normal();
  for (double& x : u) x = rng.normal();

  auto apply = [&](const Vec& w) {
    return critpt::hvp(p, NetworkParams::unflatten(arch, w), ds).flatten();
  };

  // linearity
  Vec combo(n);
  for (std::size_t i = 0; i < n; ++i) combo[i] = 2.5 * v[i] - 0.75 * u[i];
  const Vec lhs = apply(combo);
  const Vec hv = apply(v), hu = apply(u);
  double scale = 1.0;
  for (std::size_t i = 0; i < n; ++i) scale = std::max(scale, std::fabs(lhs[i]));
  for (std::size_t i = 0; i < n; ++i)
    REQUIRE(std::fabs(lhs[i] - (2.5 * hv[i] - 0.75 * hu[i])) <= 1e-12 * scale);

  // operator symmetry
  const double vhu = critpt::dot(v, hu);
  const double uhv = critpt::dot(u, hv);
  CHECK(std::fabs(vhu - uhv) <= 1e-10 * std::max(1.0, std::fabs(vhu)));
}

TEST_CASE("hessian of the two-parameter scalar network") {
  // d=1, L=2, Sigma=(1): H = [[w2^2, 2 w1 w2 - 1], [2 w1 w2 - 1, w1^2]]
  const Dataset ds = Dataset::from_samples(Matrix(1, 1, {1.0}));
  const Architecture arch({1, 1, 1});
  NetworkParams p = NetworkParams::zeros(arch);
  p.layers[0](0, 0) = 1.0;
  p.layers[1](0, 0) = 1.0;
  const Matrix h = critpt::hessian(p, ds);
  CHECK(h(0, 0) == Catch::Approx(1.0));
  CHECK(h(0, 1) == Catch::Approx(1.0));
  CHECK(h(1, 0) == Catch::Approx(1.0));
  CHECK(h(1, 1) == Catch::Approx(1.0));
}

TEST_CASE("hessian matches the finite-difference hessian") {
  const Architecture arch({3, 2, 3});  // P = 12
  const Dataset ds = generate_dataset(3, 9, SpectrumRule::linear, 6);
  critpt::SeededRng rng(41);
  const NetworkParams p = oracles::random_params(arch, rng);
  const Matrix h = critpt::hessian(p, ds);
  const Matrix fd = oracles::fd_hessian(p, ds);
  double scale = 1.0, err = 0.0;
  for (std::size_t i = 0; i < h.data().size(); ++i) {
    scale = std::max(scale, std::fabs(fd.data()[i]));
    err = std::max(err, std::fabs(h.data()[i] - fd.data()[i]));
  }
  CHECK(err / scale <= 1e-5);
}

TEST_CASE("hessian enforces the parameter cap") {
  const Architecture arch({8, 4, 8});
  const Dataset ds = generate_dataset(8, 16, SpectrumRule::powers_of_two, 1);
  const NetworkParams p = NetworkParams::zeros(arch);
  CHECK_THROWS_AS(critpt::hessian(p, ds, 32), critpt::size_error);
}

TEST_CASE("sq_grad_norm definition and trivial zeros") {
  const Architecture arch({2, 2, 2});
  const Dataset ds = oracles::diag_dataset({2.0, 1.0});
  CHECK(critpt::sq_grad_norm(NetworkParams::identity(arch), ds) <= 1e-25);
  CHECK(critpt::sq_grad_norm(NetworkParams::zeros(arch), ds) == 0.0);

  critpt::SeededRng rng(3);
  const NetworkParams p = oracles::random_params(arch, rng);
  const Vec g = critpt::gradient(p, ds).flatten();
  double acc = 0.0;
  for (double v : g) acc += v * v;
  CHECK(critpt::sq_grad_norm(p, ds) == Catch::Approx(0.5 * acc).epsilon(1e-12));
}

TEST_CASE("derivatives agree with finite differences across random architectures") {
  critpt::SeededRng rng(777);
  int tested = 0;
  while (tested < 8) {
    const Architecture arch = oracles::random_architecture(rng);
    const Dataset ds = generate_dataset(arch.d(), arch.d() + 8, SpectrumRule::linear,
                                        1000 + std::uint64_t(tested));
    const NetworkParams p = oracles::random_params(arch, rng);

    const Vec fd_g = oracles::fd_gradient(p, ds);
    REQUIRE(oracles::max_rel_err(critpt::gradient(p, ds).flatten(), fd_g) <= 1e-6);

    Vec dir(arch.param_count());
    for (double& v : dir) v = rng.normal();
    const Vec fd_h = oracles::fd_hvp(p, dir, ds);
    REQUIRE(oracles::max_rel_err(critpt::hvp(p, NetworkParams::unflatten(arch, dir), ds).flatten(),
                                 fd_h) <= 1e-6);

    // the loss never drops below the best rank-p approximation bound
    REQUIRE(critpt::loss(p, ds) >= critpt::min_loss(arch, ds) - 1e-12);
    ++tested;
  }
}

TEST_CASE("flatten and unflatten round-trip exactly") {
  critpt::SeededRng rng(55);
  const Architecture arch = oracles::random_architecture(rng);
  const NetworkParams p = oracles::random_params(arch, rng);
  const NetworkParams q = NetworkParams::unflatten(arch, p.flatten());
  REQUIRE(p.layers.size() == q.layers.size());
  for (std::size_t k = 0; k < p.layers.size(); ++k)
    CHECK(p.layers[k].data() == q.layers[k].data());
  CHECK(p.flatten().size() == arch.param_count());
}

TEST_CASE("shape mismatches raise dimension errors") {
  const Architecture a232({2, 3, 2});
  const Architecture a222({2, 2, 2});
  const Dataset ds = oracles::diag_dataset({2.0, 1.0});
  NetworkParams p = NetworkParams::zeros(a232);
  CHECK_THROWS_AS(critpt::hvp(p, NetworkParams::zeros(a222), ds), critpt::dimension_error);
  const Dataset ds3 = oracles::diag_dataset({3.0, 2.0, 1.0});
  CHECK_THROWS_AS(critpt::loss(p, ds3), critpt::dimension_error);
}
