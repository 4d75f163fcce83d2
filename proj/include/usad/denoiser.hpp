#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "usad/nn.hpp"
#include "usad/ops.hpp"

namespace usad::diffusion {

struct DenoiserConfig {
  int length = 32;      // L
  int n_classes = 2;
  int channels = 32;    // residual block width
  int blocks = 3;
  int kernel = 5;
  int label_dim = 32;   // learnable e_y width
  int time_dim = 128;   // sinusoidal psi(t) width
  int mlp_hidden = 64;  // AdaGN modulation MLP hidden width
};

// Sinusoidal time embedding: pairs (sin(t / 10000^(2i/d)), cos(t / 10000^(2i/d))).
template <typename T>
Tensor<T> time_embedding(int t, int dim) {
  Tensor<T> out({dim});
  for (int i = 0; i < dim / 2; ++i) {
    const double freq = std::pow(10000.0, -2.0 * i / dim);
    out.at(2 * i) = static_cast<T>(std::sin(t * freq));
    out.at(2 * i + 1) = static_cast<T>(std::cos(t * freq));
  }
  return out;
}

// Group normalization whose scale/shift come from an MLP over the label and
// time embedding: out = gamma_y(t) * groupnorm(h) + beta_y(t), per channel.
template <typename T>
struct AdaGN {
  nn::Dense<T> fc1;  // emb -> hidden
  nn::Dense<T> fc2;  // hidden -> 2C (gamma | beta)
  int channels = 0;
  int groups = 1;
  T eps = T(1e-5);

  AdaGN() = default;
  AdaGN(int emb_dim, int hidden, int channels_, Rng& rng)
      : fc1(emb_dim, hidden, rng), fc2(hidden, 2 * channels_, rng), channels(channels_),
        groups(nn::pick_groups(channels_)) {
    // start as identity modulation: gamma = 1, beta = 0
    for (auto& v : fc2.w.data()) v *= T(0.01);
    for (int c = 0; c < channels; ++c) fc2.b.at(c) = T(1);
  }

  Tensor<T> operator()(const Tensor<T>& h, const Tensor<T>& emb) const {
    auto gb = fc2(ops::gelu(fc1(emb)));
    auto gamma = ops::slice_vec(gb, 0, channels);
    auto beta = ops::slice_vec(gb, channels, 2 * channels);
    return ops::add_rows(ops::mul_rows(ops::group_norm(h, groups, eps), gamma), beta);
  }

  void collect(nn::ParamList<T>& out, const std::string& prefix) const {
    fc1.collect(out, prefix + ".fc1");
    fc2.collect(out, prefix + ".fc2");
  }
};

// Conditional noise predictor G_theta(x_t, t, f, y). Input channels are the
// noised signal plus the conditioning vector reshaped to 4 rows; each residual
// block applies conv -> AdaGN -> GeLU twice with a skip connection.
template <typename T>
class DenoiserNet {
 public:
  DenoiserNet() = default;

  DenoiserNet(const DenoiserConfig& cfg, Rng& rng) : cfg_(cfg) {
    const int pad = cfg.kernel / 2;
    in_conv_ = nn::Conv1d<T>(5, cfg.channels, cfg.kernel, 1, pad, rng);
    const int emb_dim = cfg.label_dim + cfg.time_dim;
    blocks_.resize(static_cast<std::size_t>(cfg.blocks));
    for (auto& b : blocks_) {
      b.conv1 = nn::Conv1d<T>(cfg.channels, cfg.channels, cfg.kernel, 1, pad, rng);
      b.conv2 = nn::Conv1d<T>(cfg.channels, cfg.channels, cfg.kernel, 1, pad, rng);
      b.norm1 = AdaGN<T>(emb_dim, cfg.mlp_hidden, cfg.channels, rng);
      b.norm2 = AdaGN<T>(emb_dim, cfg.mlp_hidden, cfg.channels, rng);
    }
    out_conv_ = nn::Conv1d<T>(cfg.channels, 1, cfg.kernel, 1, pad, rng);
    label_table_ = nn::randn<T>({cfg.n_classes, cfg.label_dim}, rng, 1.0);
  }

  // x_t: [1 x L], cond: [4 x L] (training: f; sampling: prototype mu_y).
  Tensor<T> forward(const Tensor<T>& x_t, int t, const Tensor<T>& cond, int label) const {
    if (label < 0 || label >= cfg_.n_classes) {
      throw std::out_of_range("DenoiserNet: unknown label " + std::to_string(label));
    }
    auto emb = embedding(t, label);
    auto h = in_conv_(ops::concat_rows<T>({x_t, cond}));
    for (const auto& b : blocks_) {
      auto a = ops::gelu(b.norm1(b.conv1(h), emb));
      a = ops::gelu(b.norm2(b.conv2(a), emb));
      h = ops::add(h, a);
    }
    return out_conv_(h);
  }

  // concat[e_y, psi(t)] feeding every AdaGN in the net
  Tensor<T> embedding(int t, int label) const {
    return ops::concat_vecs<T>({ops::row(label_table_, label),
                                time_embedding<T>(t, cfg_.time_dim)});
  }

  // exposed for the AdaGN unit tests
  const AdaGN<T>& adagn(int block, int which) const {
    return which == 0 ? blocks_[static_cast<std::size_t>(block)].norm1
                      : blocks_[static_cast<std::size_t>(block)].norm2;
  }
  AdaGN<T>& adagn(int block, int which) {
    return which == 0 ? blocks_[static_cast<std::size_t>(block)].norm1
                      : blocks_[static_cast<std::size_t>(block)].norm2;
  }

  nn::ParamList<T> parameters() const {
    nn::ParamList<T> out;
    in_conv_.collect(out, "denoiser.in");
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
      const std::string p = "denoiser.block" + std::to_string(i);
      blocks_[i].conv1.collect(out, p + ".conv1");
      blocks_[i].norm1.collect(out, p + ".norm1");
      blocks_[i].conv2.collect(out, p + ".conv2");
      blocks_[i].norm2.collect(out, p + ".norm2");
    }
    out_conv_.collect(out, "denoiser.out");
    out.push_back({"denoiser.labels", label_table_});
    return out;
  }

  const DenoiserConfig& config() const { return cfg_; }

 private:
  struct Block {
    nn::Conv1d<T> conv1, conv2;
    AdaGN<T> norm1, norm2;
  };

  DenoiserConfig cfg_;
  nn::Conv1d<T> in_conv_;
  std::vector<Block> blocks_;
  nn::Conv1d<T> out_conv_;
  Tensor<T> label_table_;  // [n_classes x label_dim]
};

// Standalone AdaGN entry point mirroring the denoiser's internal wiring:
// modulates h with the net's first block parameters.
template <typename T>
Tensor<T> adagn_modulate(const Tensor<T>& h, int t, int label, const DenoiserNet<T>& net) {
  return net.adagn(0, 0)(h, net.embedding(t, label));
}

}  // namespace usad::diffusion
