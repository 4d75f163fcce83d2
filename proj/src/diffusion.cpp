#include "usad/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "usad/optim.hpp"
#include "usad/tape.hpp"

namespace usad::diffusion {

namespace {

TensorD to_cond_tensor(const std::vector<double>& f) {
  const int len = static_cast<int>(f.size()) / 4;
  if (static_cast<std::size_t>(len) * 4 != f.size()) {
    throw std::invalid_argument("conditioning vector length must be 4L, got " +
                                std::to_string(f.size()));
  }
  return TensorD({4, len}, std::vector<double>(f.begin(), f.end()));
}

}  // namespace

std::vector<double> train_denoiser(const std::vector<TrainSample>& data,
                                   const NoiseSchedule& sched, DenoiserNet<double>& net,
                                   const DiffusionTrainConfig& cfg) {
  if (data.empty()) throw std::invalid_argument("train_denoiser: empty dataset");
  const int len = static_cast<int>(data.front().x0.size());

  auto params = net.parameters();
  optim::AdamState<double> adam;
  optim::AdamConfig<double> adam_cfg;
  adam_cfg.lr = cfg.lr;

  Rng rng(cfg.seed);
  Rng shuffle_rng = rng.child(1);
  Rng noise_rng = rng.child(2);
  Rng step_rng = rng.child(3);

  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  std::vector<double> trace;
  trace.reserve(static_cast<std::size_t>(cfg.epochs));
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[shuffle_rng.uniform_int(i)]);
    }
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch));
      optim::zero_grads(params);
      Tape tape;
      TensorD batch_loss;
      {
        TapeScope scope(tape);
        std::vector<TensorD> losses;
        losses.reserve(stop - start);
        for (std::size_t i = start; i < stop; ++i) {
          const auto& s = data[order[i]];
          const int t = 1 + static_cast<int>(step_rng.uniform_int(static_cast<std::uint64_t>(sched.steps)));
          std::vector<double> noise(s.x0.size());
          for (auto& v : noise) v = noise_rng.normal();
          auto xt = forward_diffuse(s.x0, t, noise, sched);
          TensorD xt_t({1, len}, std::move(xt));
          TensorD eps({1, len}, std::move(noise));
          auto eps_hat = net.forward(xt_t, t, to_cond_tensor(s.f), s.y);
          auto diff = ops::sub(eps_hat, eps);
          losses.push_back(ops::mul_scalar(ops::sum(ops::mul(diff, diff)), sched.w_at(t)));
        }
        batch_loss = ops::mul_scalar(ops::add_n(losses), 1.0 / static_cast<double>(losses.size()));
      }
      if (!std::isfinite(batch_loss.item())) {
        throw std::runtime_error("train_denoiser: non-finite loss at epoch " +
                                 std::to_string(epoch));
      }
      tape.backward(batch_loss);
      optim::adam_step(params, adam_cfg, adam);
      epoch_loss += batch_loss.item() * static_cast<double>(stop - start);
    }
    epoch_loss /= static_cast<double>(data.size());
    if (!std::isfinite(epoch_loss)) {
      throw std::runtime_error("train_denoiser: non-finite loss at epoch " + std::to_string(epoch));
    }
    trace.push_back(epoch_loss);
  }
  return trace;
}

std::vector<double> sample(const DenoiserNet<double>& net, const NoiseSchedule& sched, int label,
                           const stats::PrototypeTable& proto, Rng& rng) {
  const auto& mu_y = proto.prototype(label);  // throws on unknown label
  auto cond = to_cond_tensor(mu_y);
  const int len = cond.dim(1);

  std::vector<double> x(static_cast<std::size_t>(len));
  for (auto& v : x) v = rng.normal();

  for (int t = sched.steps; t >= 1; --t) {
    TensorD xt({1, len}, std::vector<double>(x.begin(), x.end()));
    auto eps_hat = net.forward(xt, t, cond, label);
    const double ab = sched.alpha_bar[static_cast<std::size_t>(t)];
    const double beta = sched.beta_at(t);
    const double inv_sqrt_alpha = 1.0 / std::sqrt(1.0 - beta);
    const double eps_coef = beta / std::sqrt(1.0 - ab);
    const double sigma = std::sqrt(beta);
    for (int i = 0; i < len; ++i) {
      double mean = inv_sqrt_alpha * (x[static_cast<std::size_t>(i)] - eps_coef * eps_hat.at(i));
      x[static_cast<std::size_t>(i)] = t > 1 ? mean + sigma * rng.normal() : mean;
    }
  }
  return x;
}

std::vector<SyntheticSample> synthesize_dataset(const DenoiserNet<double>& net,
                                                const NoiseSchedule& sched,
                                                const stats::PrototypeTable& proto, int count,
                                                std::uint64_t seed, bool balanced) {
  if (count < 1) throw std::invalid_argument("synthesize_dataset: count must be >= 1");
  const auto labels = proto.labels();
  if (labels.empty()) throw std::invalid_argument("synthesize_dataset: empty prototype table");

  Rng root(seed);
  std::vector<SyntheticSample> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int k = 0; k < count; ++k) {
    int y;
    if (balanced) {
      y = labels[static_cast<std::size_t>(k) % labels.size()];
    } else {
      y = labels[root.uniform_int(labels.size())];
    }
    Rng chain = root.child(static_cast<std::uint64_t>(k) + 17);
    SyntheticSample s;
    s.y = y;
    s.x = sample(net, sched, y, proto, chain);
    s.f = stats::condition_vector(s.x);
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace usad::diffusion
