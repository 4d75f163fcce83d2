#include "usad/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace usad::losses {

namespace {

void check_label(std::size_t n, int y, const char* op) {
  if (y < 0 || static_cast<std::size_t>(y) >= n) {
    throw std::out_of_range(std::string(op) + ": label " + std::to_string(y) +
                            " out of range for " + std::to_string(n) + " classes");
  }
}

double floored(double p) {
  if (p < kProbFloor) {
    ++diagnostics().clamp_events;
    return kProbFloor;
  }
  return p;
}

}  // namespace

double cross_entropy(std::span<const double> p, int y) {
  check_label(p.size(), y, "cross_entropy");
  return -std::log(floored(p[static_cast<std::size_t>(y)]));
}

double focal_loss(double p_t, const FocalParams& params) {
  if (params.gamma < 0.0) throw std::invalid_argument("focal_loss: gamma must be >= 0");
  const double p = floored(p_t);
  return -params.alpha * std::pow(1.0 - p, params.gamma) * std::log(p);
}

double label_smoothing_nll(std::span<const double> logp, int y, const SmoothingParams& params) {
  check_label(logp.size(), y, "label_smoothing_nll");
  if (params.epsilon < 0.0 || params.epsilon >= 1.0) {
    throw std::invalid_argument("label_smoothing_nll: epsilon must be in [0, 1)");
  }
  const double k = static_cast<double>(logp.size());
  double loss = 0.0;
  for (std::size_t i = 0; i < logp.size(); ++i) {
    const double target = (static_cast<int>(i) == y ? 1.0 - params.epsilon : 0.0) +
                          params.epsilon / k;
    loss -= logp[i] * target;
  }
  return loss;
}

std::vector<double> class_balanced_scales(std::span<const int> labels,
                                          const ClassBalancedParams& params) {
  if (params.beta < 0.0 || params.beta >= 1.0) {
    throw std::invalid_argument("class_balanced_scales: beta must be in [0, 1)");
  }
  std::vector<double> scales(labels.size());
  double total = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto it = params.counts.find(labels[i]);
    if (it == params.counts.end()) {
      throw std::out_of_range("class_balanced_scales: unknown label " +
                              std::to_string(labels[i]));
    }
    // effective number E_y = (1 - beta^n) / (1 - beta); scale = 1 / E_y
    const double n = static_cast<double>(it->second);
    const double scale = params.beta == 0.0
                             ? 1.0
                             : (1.0 - params.beta) / (1.0 - std::pow(params.beta, n));
    scales[i] = scale;
    total += scale;
  }
  const double mean = total / static_cast<double>(labels.size());
  for (auto& s : scales) s /= mean;
  return scales;
}

double class_balanced_reweight(std::span<const double> loss_per_sample,
                               std::span<const int> labels, const ClassBalancedParams& params) {
  if (loss_per_sample.size() != labels.size()) {
    throw std::invalid_argument("class_balanced_reweight: loss/label length mismatch");
  }
  const auto scales = class_balanced_scales(labels, params);
  double acc = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) acc += loss_per_sample[i] * scales[i];
  return acc / static_cast<double>(labels.size());
}

TensorD cross_entropy_t(const TensorD& p, int y) {
  check_label(static_cast<std::size_t>(p.numel()), y, "cross_entropy");
  if (p.at(y) < kProbFloor) ++diagnostics().clamp_events;
  return ops::neg(ops::log(ops::clamp_min(ops::pick(p, y), kProbFloor)));
}

TensorD focal_loss_t(const TensorD& p, int y, const FocalParams& params) {
  check_label(static_cast<std::size_t>(p.numel()), y, "focal_loss");
  if (params.gamma < 0.0) throw std::invalid_argument("focal_loss: gamma must be >= 0");
  if (p.at(y) < kProbFloor) ++diagnostics().clamp_events;
  auto pt = ops::clamp_min(ops::pick(p, y), kProbFloor);

  // custom scalar op: v = -alpha * (1-p)^gamma * log p
  const double pv = pt.item();
  const double alpha = params.alpha, gamma = params.gamma;
  TensorD out = TensorD::scalar(-alpha * std::pow(1.0 - pv, gamma) * std::log(pv));
  if (Tape* t = ops::detail::recording_tape_if(pt.requires_grad())) {
    ops::detail::attach(out, t);
    ops::detail::GradSink<double> gp(pt);
    auto oi = out.impl_ptr();
    t->record([=] {
      // d/dp [-a (1-p)^g log p] = a*g*(1-p)^(g-1)*log p - a*(1-p)^g / p
      double d;
      if (gamma == 0.0) {
        d = -alpha / pv;
      } else {
        d = alpha * gamma * std::pow(1.0 - pv, gamma - 1.0) * std::log(pv) -
            alpha * std::pow(1.0 - pv, gamma) / pv;
      }
      gp.add(0, oi->grad[0] * d);
    });
  }
  return out;
}

TensorD label_smoothing_t(const TensorD& p, int y, const SmoothingParams& params) {
  const int k = p.dim(0);
  check_label(static_cast<std::size_t>(k), y, "label_smoothing_nll");
  if (params.epsilon < 0.0 || params.epsilon >= 1.0) {
    throw std::invalid_argument("label_smoothing_nll: epsilon must be in [0, 1)");
  }
  TensorD target({k});
  for (int i = 0; i < k; ++i) {
    target.at(i) = (i == y ? 1.0 - params.epsilon : 0.0) + params.epsilon / k;
  }
  auto logp = ops::log(ops::clamp_min(p, kProbFloor));
  return ops::neg(ops::dot(logp, target));
}

WeightUpdateInfo update_weights(CompositeLossState& state, double acc) {
  if (!(acc >= 0.0 && acc <= 1.0)) {
    throw std::invalid_argument("update_weights: acc must be in [0, 1], got " +
                                std::to_string(acc));
  }
  const double old0 = state.omega0, old1 = state.omega1, old2 = state.omega2;
  const double target = 2.0 - state.tau - 1.0 / (acc + 1e-8);
  const double smoothed = state.omega1 + (target - state.omega1) / state.temperature;

  WeightUpdateInfo info;
  info.pre_clamp_omega1 = smoothed;

  double w1 = std::clamp(smoothed, state.w_min, state.w_max);
  double w0 = std::clamp(0.5 * (1.0 - w1), state.w_min, state.w_max);
  double w2 = std::clamp(0.5 * (1.0 - w1), state.w_min, state.w_max);
  const double s = w0 + w1 + w2;
  state.omega0 = w0 / s;
  state.omega1 = w1 / s;
  state.omega2 = w2 / s;

  // prose direction from the paper: on improvement, the dominant weight may
  // not grow; reported as a diagnostic, the closed form above is primary.
  if (acc > state.prev_acc) {
    const double old_max = std::max({old0, old1, old2});
    const double new_at_old_max =
        old_max == old1 ? state.omega1 : (old_max == old0 ? state.omega0 : state.omega2);
    info.prose_direction_ok = new_at_old_max <= old_max + 1e-12;
  }
  state.prev_acc = acc;
  return info;
}

TensorD composite_loss(const TensorD& p, int y, const CompositeLossState& state,
                       const FocalParams& focal, const SmoothingParams& smoothing) {
  TensorD total;
  auto add_term = [&](double w, TensorD term) {
    if (w == 0.0) return;
    TensorD scaled = w == 1.0 ? term : ops::mul_scalar(term, w);
    total = total.defined() ? ops::add(total, scaled) : scaled;
  };
  add_term(state.omega0, label_smoothing_t(p, y, smoothing));
  add_term(state.omega1, focal_loss_t(p, y, focal));
  add_term(state.omega2, cross_entropy_t(p, y));
  if (!total.defined()) total = TensorD::scalar(0.0);
  return total;
}

double composite_loss_value(std::span<const double> p, int y, const CompositeLossState& state,
                            const FocalParams& focal, const SmoothingParams& smoothing) {
  std::vector<double> logp(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) logp[i] = std::log(std::max(p[i], kProbFloor));
  SmoothingParams sm = smoothing;
  sm.classes = static_cast<int>(p.size());
  double total = 0.0;
  if (state.omega0 != 0.0) total += state.omega0 * label_smoothing_nll(logp, y, sm);
  if (state.omega1 != 0.0) {
    total += state.omega1 * focal_loss(p[static_cast<std::size_t>(y)], focal);
  }
  if (state.omega2 != 0.0) total += state.omega2 * cross_entropy(p, y);
  return total;
}

}  // namespace usad::losses
