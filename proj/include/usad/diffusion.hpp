#pragma once

#include <cstdint>
#include <vector>

#include "usad/denoiser.hpp"
#include "usad/rng.hpp"
#include "usad/schedule.hpp"
#include "usad/stats.hpp"

namespace usad::diffusion {

// One single-channel training sequence with its conditioning vector.
struct TrainSample {
  std::vector<double> x0;  // length L
  std::vector<double> f;   // length 4L
  int y = 0;
};

struct DiffusionTrainConfig {
  int epochs = 50;
  double lr = 1e-3;
  int batch = 16;
  std::uint64_t seed = 0;
};

// Per-epoch mean of w_t * ||eps - eps_hat||^2 over the dataset.
std::vector<double> train_denoiser(const std::vector<TrainSample>& data,
                                   const NoiseSchedule& sched, DenoiserNet<double>& net,
                                   const DiffusionTrainConfig& cfg);

// Ancestral DDPM reverse chain from pure noise, conditioned on the class
// prototype mu_y. Deterministic given the rng state.
std::vector<double> sample(const DenoiserNet<double>& net, const NoiseSchedule& sched, int label,
                           const stats::PrototypeTable& proto, Rng& rng);

struct SyntheticSample {
  std::vector<double> x;  // generated sequence
  std::vector<double> f;  // recomputed from x (not copied from the prototype)
  int y = 0;
};

// M samples with labels spread uniformly over the prototype table's classes
// (round-robin when balanced, iid uniform otherwise).
std::vector<SyntheticSample> synthesize_dataset(const DenoiserNet<double>& net,
                                                const NoiseSchedule& sched,
                                                const stats::PrototypeTable& proto, int count,
                                                std::uint64_t seed, bool balanced = true);

}  // namespace usad::diffusion
