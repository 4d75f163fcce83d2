#include "usad/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <string>

namespace usad::diffusion {

NoiseSchedule build_schedule(int steps, double s, double eps_w) {
  if (steps < 1) throw std::invalid_argument("build_schedule: T must be >= 1");
  if (!(s > 0.0 && s < 1.0)) throw std::invalid_argument("build_schedule: s must be in (0, 1)");
  if (!(eps_w > 0.0)) throw std::invalid_argument("build_schedule: eps_w must be positive");

  NoiseSchedule sched;
  sched.steps = steps;
  sched.s = s;
  sched.alpha_bar.resize(static_cast<std::size_t>(steps) + 1);
  sched.beta.resize(static_cast<std::size_t>(steps));
  sched.w.resize(static_cast<std::size_t>(steps));

  constexpr double kHalfPi = 1.5707963267948966192313216916398;
  const double denom = std::cos(kHalfPi * s / (1.0 + s));
  for (int t = 0; t <= steps; ++t) {
    const double arg = kHalfPi * (static_cast<double>(t) / steps + s) / (1.0 + s);
    // cos can land an ulp below zero at t = T; the schedule value is >= 0.
    sched.alpha_bar[static_cast<std::size_t>(t)] = std::max(std::cos(arg) / denom, 0.0);
  }
  for (int t = 1; t <= steps; ++t) {
    const double prev = sched.alpha_bar[static_cast<std::size_t>(t - 1)];
    const double cur = sched.alpha_bar[static_cast<std::size_t>(t)];
    sched.beta[static_cast<std::size_t>(t - 1)] = std::clamp(1.0 - cur / prev, 0.0, 0.999);
    sched.w[static_cast<std::size_t>(t - 1)] =
        std::sqrt((1.0 - cur) / (cur * (1.0 - prev) + eps_w));
  }
  return sched;
}

std::vector<double> forward_diffuse(std::span<const double> x0, int t,
                                    std::span<const double> noise, const NoiseSchedule& sched) {
  if (t < 1 || t > sched.steps) {
    throw std::out_of_range("forward_diffuse: t = " + std::to_string(t) + " outside 1.." +
                            std::to_string(sched.steps));
  }
  if (x0.size() != noise.size()) {
    throw std::invalid_argument("forward_diffuse: x0 and noise length mismatch");
  }
  const double ab = sched.alpha_bar[static_cast<std::size_t>(t)];
  const double cs = std::sqrt(ab);
  const double cn = std::sqrt(1.0 - ab);
  std::vector<double> xt(x0.size());
  for (std::size_t i = 0; i < x0.size(); ++i) xt[i] = cs * x0[i] + cn * noise[i];
  return xt;
}

}  // namespace usad::diffusion
