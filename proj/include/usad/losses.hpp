#pragma once

#include <map>
#include <span>
#include <vector>

#include "usad/ops.hpp"
#include "usad/tensor.hpp"

namespace usad::losses {

inline constexpr double kProbFloor = 1e-12;

// Counts probability-floor clamp events on the current thread.
struct Diagnostics {
  long long clamp_events = 0;
};
inline Diagnostics& diagnostics() {
  thread_local Diagnostics d;
  return d;
}

struct FocalParams {
  double gamma = 1.0;  // focusing parameter, >= 0
  double alpha = 0.25; // sample weight factor, (0, 1]
};

struct SmoothingParams {
  double epsilon = 0.1;  // in [0, 1)
  int classes = 2;       // K
};

struct ClassBalancedParams {
  double beta = 0.9;             // in [0, 1)
  std::map<int, long> counts;    // per-class sample counts n_y
};

// ---------------------------------------------------------------------------
// Plain evaluators

// -log p[y] with the 1e-12 floor; clamp events are counted in diagnostics().
double cross_entropy(std::span<const double> p, int y);

// -alpha * (1 - p_t)^gamma * log(p_t)
double focal_loss(double p_t, const FocalParams& params);

// -sum_k log p(k) * ((1 - eps) * delta_{k,y} + eps / K)
double label_smoothing_nll(std::span<const double> logp, int y, const SmoothingParams& params);

// Per-sample scales (1 - beta) / (1 - beta^{n_y}), normalized to mean 1 over
// the batch.
std::vector<double> class_balanced_scales(std::span<const int> labels,
                                          const ClassBalancedParams& params);

// Mean of per-sample losses reweighted by the normalized scales.
double class_balanced_reweight(std::span<const double> loss_per_sample,
                               std::span<const int> labels, const ClassBalancedParams& params);

// ---------------------------------------------------------------------------
// Differentiable versions (operate on a probability vector from softmax)

TensorD cross_entropy_t(const TensorD& p, int y);
TensorD focal_loss_t(const TensorD& p, int y, const FocalParams& params);
TensorD label_smoothing_t(const TensorD& p, int y, const SmoothingParams& params);

// ---------------------------------------------------------------------------
// Adaptive composite controller

struct CompositeLossState {
  double omega0 = 0.33;  // label smoothing weight
  double omega1 = 0.33;  // focal weight
  double omega2 = 0.34;  // cross-entropy weight
  double tau = 0.5;
  double temperature = 1.0;
  double w_min = 0.1;
  double w_max = 0.8;
  double prev_acc = 0.0;
};

struct WeightUpdateInfo {
  double pre_clamp_omega1 = 0.0;  // smoothed target before clamping
  bool prose_direction_ok = true; // diagnostic: highest weight did not grow on improvement
};

// omega1 <- clamp(prev + (2 - tau - 1/(acc + 1e-8) - prev) / temperature, w_min, w_max),
// omega0 = omega2 = 0.5 * (1 - omega1) (clamped), then renormalized to sum 1.
WeightUpdateInfo update_weights(CompositeLossState& state, double acc);

// omega0 * L_sl-nll + omega1 * L_fl + omega2 * L_ce; zero weights contribute
// no term so a point mass reproduces the sub-loss bit-exactly.
TensorD composite_loss(const TensorD& p, int y, const CompositeLossState& state,
                       const FocalParams& focal, const SmoothingParams& smoothing);

double composite_loss_value(std::span<const double> p, int y, const CompositeLossState& state,
                            const FocalParams& focal, const SmoothingParams& smoothing);

}  // namespace usad::losses
