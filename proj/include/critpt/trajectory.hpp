#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "critpt/dlae.hpp"
#include "critpt/errors.hpp"
#include "critpt/rng.hpp"

namespace critpt {

struct Snapshot {
  std::size_t epoch = 0;
  NetworkParams params;
  double loss = 0.0;
  double sq_grad_norm = 0.0;
};

enum class TrainStatus { completed, diverged };

struct Trajectory {
  std::size_t trajectory_id = 0;
  std::uint64_t init_seed = 0;
  std::vector<Snapshot> snapshots;  // epoch 0 first, strictly increasing
  TrainStatus status = TrainStatus::completed;
};

/// Fan-in-scaled normal initialization: entry ~ N(0, init_scale^2 / fan_in).
inline NetworkParams random_init(const Architecture& arch, double init_scale, SeededRng& rng) {
  NetworkParams p = NetworkParams::zeros(arch);
  for (Matrix& w : p.layers) {
    const double sd = init_scale / std::sqrt(double(w.cols()));
    for (double& v : w.data()) v = sd * rng.normal();
  }
  return p;
}

/// Full-batch gradient descent with snapshots every `snapshot_every` epochs
/// (plus the final epoch). Aborts with diverged status if the loss goes
/// non-finite or exceeds 10x its initial value. `init_override` replaces the
/// random initialization when non-null.
inline Trajectory train_gd(const Architecture& arch, const Dataset& data, double init_scale,
                           double learning_rate, std::size_t epochs, std::size_t snapshot_every,
                           std::uint64_t seed, std::size_t trajectory_id = 0,
                           const NetworkParams* init_override = nullptr) {
  if (!(learning_rate > 0.0)) throw invalid_input("train_gd: learning rate must be positive");
  if (epochs < 1) throw invalid_input("train_gd: need at least one epoch");
  if (snapshot_every == 0) snapshot_every = 1;

  Trajectory traj;
  traj.trajectory_id = trajectory_id;
  traj.init_seed = seed;

  SeededRng rng(seed);
  NetworkParams theta = init_override ? *init_override : random_init(arch, init_scale, rng);

  const double initial_loss = loss(theta, data);
  const double divergence_cap = 10.0 * std::max(initial_loss, 1e-300);

  auto snapshot = [&](std::size_t epoch, double l) {
    traj.snapshots.push_back({epoch, theta, l, sq_grad_norm(theta, data)});
  };
  snapshot(0, initial_loss);

  for (std::size_t epoch = 1; epoch <= epochs; ++epoch) {
    const NetworkParams grad = gradient(theta, data);
    for (std::size_t k = 0; k < theta.layers.size(); ++k)
      theta.layers[k] -= grad.layers[k] * learning_rate;

    const double l = loss(theta, data);
    if (!std::isfinite(l) || l > divergence_cap) {
      traj.status = TrainStatus::diverged;
      if (std::isfinite(l)) snapshot(epoch, l);
      break;
    }
    if (epoch % snapshot_every == 0 || epoch == epochs) snapshot(epoch, l);
  }
  return traj;
}

/// One finder starting point: a snapshot sampled from a trajectory.
struct SeedPoint {
  std::size_t trajectory_id = 0;
  std::size_t seed_id = 0;
  std::size_t epoch = 0;
  NetworkParams params;
};

/// k snapshots drawn uniformly with replacement.
inline std::vector<SeedPoint> sample_seeds(const Trajectory& traj, std::size_t k, SeededRng& rng) {
  if (k < 1) throw invalid_input("sample_seeds: k must be at least 1");
  if (traj.snapshots.empty()) throw invalid_input("sample_seeds: empty trajectory");
  std::vector<SeedPoint> out;
  out.reserve(k);
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t pick = std::size_t(rng.below(traj.snapshots.size()));
    const Snapshot& snap = traj.snapshots[pick];
    out.push_back({traj.trajectory_id, i, snap.epoch, snap.params});
  }
  return out;
}

}  // namespace critpt
