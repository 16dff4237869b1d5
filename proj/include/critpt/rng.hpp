#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace critpt {

/// Deterministic random stream: identical seed, identical variates, on every
/// platform. Uniforms take the top 53 bits of mt19937_64 (whose outputs are
/// pinned by the C++ standard); normals use Box-Muller on those uniforms
/// rather than std::normal_distribution, whose output is
/// implementation-defined.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed) : gen_(seed) {}

  /// Identity string recorded in output manifests.
  static constexpr const char* generator_id() {
    return "mt19937_64/uniform53/box-muller";
  }

  std::uint64_t next_u64() { return gen_(); }

  /// Uniform on [0, 1).
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  /// Standard normal variate.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    // u1 in (0,1] so the log is finite.
    const double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double t = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(t);
    have_spare_ = true;
    return r * std::cos(t);
  }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    return static_cast<std::uint64_t>(uniform() * static_cast<double>(n)) % n;
  }

  /// Derive an independent sub-stream seed from a master seed, a stream tag
  /// and an index (splitmix64 finalizer applied twice). Recorded in manifests
  /// as derivation scheme "splitmix64-derive-v1".
  static std::uint64_t derive(std::uint64_t master, std::uint64_t stream,
                              std::uint64_t index) {
    return mix(mix(master + 0x9e3779b97f4a7c15ull * (stream + 1)) + index);
  }

  static constexpr const char* derivation_id() { return "splitmix64-derive-v1"; }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  std::mt19937_64 gen_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace critpt
