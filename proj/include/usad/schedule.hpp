#pragma once

#include <span>
#include <vector>

namespace usad::diffusion {

// Cosine-ratio noise schedule. alpha_bar is indexed 0..T with alpha_bar[0] = 1
// exactly; beta and w are indexed by step t in 1..T at position t-1.
struct NoiseSchedule {
  int steps = 0;    // T
  double s = 0.0;   // cosine offset
  std::vector<double> alpha_bar;  // length T+1
  std::vector<double> beta;       // length T, clipped to (0, 0.999]
  std::vector<double> w;          // length T, importance weights

  double beta_at(int t) const { return beta[static_cast<std::size_t>(t - 1)]; }
  double w_at(int t) const { return w[static_cast<std::size_t>(t - 1)]; }
};

// alpha_bar[t] = cos((pi/2)*((t/T)+s)/(1+s)) / cos((pi/2)*s/(1+s));
// beta[t] = clip(1 - alpha_bar[t]/alpha_bar[t-1], 0, 0.999);
// w[t] = sqrt((1 - alpha_bar[t]) / (alpha_bar[t]*(1 - alpha_bar[t-1]) + eps_w)).
NoiseSchedule build_schedule(int steps, double s = 0.008, double eps_w = 1e-8);

// x_t = sqrt(alpha_bar[t]) * x0 + sqrt(1 - alpha_bar[t]) * noise, t in 1..T.
std::vector<double> forward_diffuse(std::span<const double> x0, int t,
                                    std::span<const double> noise, const NoiseSchedule& sched);

}  // namespace usad::diffusion
