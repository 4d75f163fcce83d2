#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "usad/nn.hpp"
#include "usad/ops.hpp"

namespace usad::net {

struct BranchConfig {
  int cardinality = 2;                    // K: cardinal groups
  int radix = 2;                          // R: splits per group
  std::vector<int> kernel_sizes = {3, 5, 7};
  int channels = 32;                      // per-branch width C; divisible by K*R
  int n_classes = 2;
  int in_channels = 5;                    // raw + reshaped conditioning rows
  double dropout = 0.3;
  bool spatial_attention = true;
  bool temporal_attention = true;
  // Where the spatial map is applied; the prose wiring is ambiguous, so the
  // alternative stays selectable for ablation.
  enum class SpatialSite { kSplits, kFused };
  SpatialSite spatial_site = SpatialSite::kSplits;

  int groups_total() const { return cardinality * radix; }
  int group_channels() const { return channels / cardinality; }

  void validate() const {
    if (cardinality < 1 || radix < 1) {
      throw std::invalid_argument("BranchConfig: K and R must be >= 1");
    }
    if (channels % (cardinality * radix) != 0) {
      throw std::invalid_argument("BranchConfig: channels " + std::to_string(channels) +
                                  " not divisible by K*R = " +
                                  std::to_string(cardinality * radix));
    }
    if (kernel_sizes.empty()) throw std::invalid_argument("BranchConfig: no kernel sizes");
    if (n_classes < 1) throw std::invalid_argument("BranchConfig: n_classes must be >= 1");
  }
};

// ---------------------------------------------------------------------------
// Attention pieces

// Element-wise sum over the splits of one cardinal group.
template <typename T>
Tensor<T> cardinal_sum(const std::vector<Tensor<T>>& splits) {
  return ops::add_n(splits);
}

// Split weights from raw logits [R x C/K]: softmax over the split axis for
// R > 1, an independent sigmoid gate for R = 1.
template <typename T>
Tensor<T> radix_weights(const Tensor<T>& logits) {
  if (logits.rank() != 2) {
    throw std::invalid_argument("radix_weights: logits must be [R x C], got " +
                                shape_str(logits.shape()));
  }
  return logits.dim(0) > 1 ? ops::softmax(logits, 0) : ops::sigmoid(logits);
}

// V = sum_i a_i (c) * U_i with weights [R x C] broadcast over length.
template <typename T>
Tensor<T> radix_fuse(const std::vector<Tensor<T>>& splits, const Tensor<T>& weights) {
  if (static_cast<int>(splits.size()) != weights.dim(0)) {
    throw std::invalid_argument("radix_fuse: split count " + std::to_string(splits.size()) +
                                " vs weight rows " + std::to_string(weights.dim(0)));
  }
  std::vector<Tensor<T>> weighted;
  weighted.reserve(splits.size());
  for (std::size_t i = 0; i < splits.size(); ++i) {
    auto wi = ops::reshape(ops::slice_rows(weights, static_cast<int>(i), static_cast<int>(i) + 1),
                           {weights.dim(1)});
    weighted.push_back(ops::mul_rows(splits[i], wi));
  }
  return ops::add_n(weighted);
}

// Position attention: a [2 x L] avg/max descriptor convolved to a [L] map,
// squashed by a sigmoid and broadcast-multiplied over channels.
template <typename T>
struct SpatialAttention {
  nn::Conv1d<T> conv;  // 2 -> 1, kernel 7, same padding

  SpatialAttention() = default;
  explicit SpatialAttention(Rng& rng) : conv(2, 1, 7, 1, 3, rng) {}

  Tensor<T> operator()(const Tensor<T>& x) const {
    auto desc = ops::stack_rows<T>({ops::channel_avg(x), ops::channel_max(x)});
    auto map = ops::sigmoid(ops::reshape(conv(desc), {x.dim(1)}));
    return ops::mul_cols(x, map);
  }

  void collect(nn::ParamList<T>& out, const std::string& prefix) const {
    conv.collect(out, prefix + ".conv");
  }
};

// Channel attention: length axis pooled away, two dense layers per cardinal
// group produce per-channel sigmoid weights.
template <typename T>
struct TemporalAttention {
  std::vector<nn::Dense<T>> fc1, fc2;  // one pair per cardinal group
  int group_channels = 0;

  TemporalAttention() = default;
  TemporalAttention(int cardinality, int group_channels_, Rng& rng)
      : group_channels(group_channels_) {
    const int hidden = std::max(4, group_channels_ / 2);
    for (int k = 0; k < cardinality; ++k) {
      fc1.emplace_back(group_channels_, hidden, rng);
      fc2.emplace_back(hidden, group_channels_, rng);
    }
  }

  Tensor<T> operator()(const Tensor<T>& x) const {
    auto z = ops::global_avg(x);  // [C]
    std::vector<Tensor<T>> gates;
    gates.reserve(fc1.size());
    for (std::size_t k = 0; k < fc1.size(); ++k) {
      const int a = static_cast<int>(k) * group_channels;
      auto zk = ops::slice_vec(z, a, a + group_channels);
      gates.push_back(ops::sigmoid(fc2[k](ops::gelu(fc1[k](zk)))));
    }
    return ops::mul_rows(x, ops::concat_vecs(gates));
  }

  void collect(nn::ParamList<T>& out, const std::string& prefix) const {
    for (std::size_t k = 0; k < fc1.size(); ++k) {
      fc1[k].collect(out, prefix + ".g" + std::to_string(k) + ".fc1");
      fc2[k].collect(out, prefix + ".g" + std::to_string(k) + ".fc2");
    }
  }
};

// ---------------------------------------------------------------------------
// Split-attention branch

// One branch of the USAD trunk: G = K*R split transforms, spatial attention,
// per-group cross-split summation with radix soft attention, channel (temporal)
// attention, a residual connection and a grouped 3-wide fusion conv.
template <typename T>
class SplitAttentionBlock {
 public:
  SplitAttentionBlock() = default;

  SplitAttentionBlock(const BranchConfig& cfg, int kernel, Rng& rng) : cfg_(cfg), kernel_(kernel) {
    cfg_.validate();
    const int ck = cfg.group_channels();
    const int pad = kernel / 2;
    for (int i = 0; i < cfg.groups_total(); ++i) {
      splits_.push_back(nn::Conv1d<T>(cfg.in_channels, ck, kernel, 1, pad, rng));
      split_norms_.push_back(nn::GroupNorm<T>(ck));
    }
    const int hidden = std::max(4, ck / 2);
    for (int k = 0; k < cfg.cardinality; ++k) {
      attn_fc1_.emplace_back(ck, hidden, rng);
      attn_fc2_.emplace_back(hidden, cfg.radix * ck, rng);
    }
    spatial_ = SpatialAttention<T>(rng);
    temporal_ = TemporalAttention<T>(cfg.cardinality, ck, rng);
    const int fg = cfg.channels / cfg.groups_total();
    for (int g = 0; g < cfg.groups_total(); ++g) {
      fusion_.push_back(nn::Conv1d<T>(fg, fg, 3, 1, 1, rng));
    }
    proj_ = nn::Conv1d<T>(cfg.in_channels, cfg.channels, 1, 1, 0, rng);
  }

  Tensor<T> forward(const Tensor<T>& x) const {
    const int ck = cfg_.group_channels();

    // split transforms U_i = F_i(X)
    std::vector<Tensor<T>> u;
    u.reserve(splits_.size());
    for (std::size_t i = 0; i < splits_.size(); ++i) {
      u.push_back(ops::gelu(split_norms_[i](splits_[i](x))));
    }

    if (cfg_.spatial_attention && cfg_.spatial_site == BranchConfig::SpatialSite::kSplits) {
      auto stacked = spatial_(ops::concat_rows(u));
      for (std::size_t i = 0; i < u.size(); ++i) {
        const int a = static_cast<int>(i) * ck;
        u[i] = ops::slice_rows(stacked, a, a + ck);
      }
    }

    // per cardinal group: cross-split sum, pooled statistic, radix fusion
    std::vector<Tensor<T>> fused;
    fused.reserve(static_cast<std::size_t>(cfg_.cardinality));
    for (int k = 0; k < cfg_.cardinality; ++k) {
      std::vector<Tensor<T>> group(u.begin() + static_cast<std::ptrdiff_t>(k) * cfg_.radix,
                                   u.begin() + static_cast<std::ptrdiff_t>(k + 1) * cfg_.radix);
      auto uk = cardinal_sum(group);
      auto sk = ops::global_avg(uk);
      auto logits = ops::reshape(attn_fc2_[static_cast<std::size_t>(k)](
                                     ops::gelu(attn_fc1_[static_cast<std::size_t>(k)](sk))),
                                 {cfg_.radix, ck});
      fused.push_back(radix_fuse(group, radix_weights(logits)));
    }

    auto v = ops::concat_rows(fused);  // [C x L]
    if (cfg_.spatial_attention && cfg_.spatial_site == BranchConfig::SpatialSite::kFused) {
      v = spatial_(v);
    }
    if (cfg_.temporal_attention) v = temporal_(v);

    v = ops::add(v, proj_(x));

    // grouped 3-wide fusion conv, K*R groups
    const int fg = cfg_.channels / cfg_.groups_total();
    std::vector<Tensor<T>> parts;
    parts.reserve(fusion_.size());
    for (std::size_t g = 0; g < fusion_.size(); ++g) {
      const int a = static_cast<int>(g) * fg;
      parts.push_back(fusion_[g](ops::slice_rows(v, a, a + fg)));
    }
    return ops::concat_rows(parts);
  }

  void collect(nn::ParamList<T>& out, const std::string& prefix) const {
    for (std::size_t i = 0; i < splits_.size(); ++i) {
      splits_[i].collect(out, prefix + ".split" + std::to_string(i));
      split_norms_[i].collect(out, prefix + ".norm" + std::to_string(i));
    }
    for (std::size_t k = 0; k < attn_fc1_.size(); ++k) {
      attn_fc1_[k].collect(out, prefix + ".attn" + std::to_string(k) + ".fc1");
      attn_fc2_[k].collect(out, prefix + ".attn" + std::to_string(k) + ".fc2");
    }
    if (cfg_.spatial_attention) spatial_.collect(out, prefix + ".spatial");
    if (cfg_.temporal_attention) temporal_.collect(out, prefix + ".temporal");
    for (std::size_t g = 0; g < fusion_.size(); ++g) {
      fusion_[g].collect(out, prefix + ".fusion" + std::to_string(g));
    }
    proj_.collect(out, prefix + ".proj");
  }

 private:
  BranchConfig cfg_;
  int kernel_ = 3;
  std::vector<nn::Conv1d<T>> splits_;
  std::vector<nn::GroupNorm<T>> split_norms_;
  std::vector<nn::Dense<T>> attn_fc1_, attn_fc2_;
  SpatialAttention<T> spatial_;
  TemporalAttention<T> temporal_;
  std::vector<nn::Conv1d<T>> fusion_;
  nn::Conv1d<T> proj_;
};

// ---------------------------------------------------------------------------
// Full classifier

// Multi-branch trunk (one split-attention block per kernel size) feeding a
// pooled two-layer head with dropout and a softmax output.
template <typename T>
class UsadNet {
 public:
  UsadNet() = default;

  UsadNet(const BranchConfig& cfg, Rng& rng) : cfg_(cfg) {
    cfg_.validate();
    for (int k : cfg.kernel_sizes) branches_.emplace_back(cfg, k, rng);
    const int trunk = cfg.channels * static_cast<int>(cfg.kernel_sizes.size());
    fc1_ = nn::Dense<T>(trunk, 128, rng);
    fc2_ = nn::Dense<T>(128, cfg.n_classes, rng);
  }

  // x: [in_channels x L] assembled input; returns a probability vector.
  Tensor<T> forward(const Tensor<T>& x, const nn::ForwardCtx& ctx = {}) const {
    if (x.rank() != 2 || x.dim(0) != cfg_.in_channels) {
      throw std::invalid_argument("UsadNet: input stage expects [" +
                                  std::to_string(cfg_.in_channels) + " x L], got " +
                                  shape_str(x.shape()));
    }
    std::vector<Tensor<T>> outs;
    outs.reserve(branches_.size());
    for (const auto& b : branches_) outs.push_back(b.forward(x));
    auto pooled = ops::global_avg(ops::concat_rows(outs));
    auto h = ops::gelu(fc1_(pooled));
    if (ctx.training && cfg_.dropout > 0.0) {
      if (ctx.rng == nullptr) throw std::invalid_argument("UsadNet: training forward needs an rng");
      h = ops::dropout(h, cfg_.dropout, *ctx.rng, true);
    }
    return ops::softmax(fc2_(h));
  }

  nn::ParamList<T> parameters() const {
    nn::ParamList<T> out;
    for (std::size_t i = 0; i < branches_.size(); ++i) {
      branches_[i].collect(out, "usad.branch" + std::to_string(i));
    }
    fc1_.collect(out, "usad.head.fc1");
    fc2_.collect(out, "usad.head.fc2");
    return out;
  }

  const BranchConfig& config() const { return cfg_; }

 private:
  BranchConfig cfg_;
  std::vector<SplitAttentionBlock<T>> branches_;
  nn::Dense<T> fc1_, fc2_;
};

// ---------------------------------------------------------------------------
// Compact pretraining classifier (synthetic-data stage)

// Three strided conv blocks (kernel 5, stride 2, 64 channels, GeLU), pooling,
// a 128-unit dense layer with dropout 0.3 and a softmax output.
template <typename T>
class PretrainClassifier {
 public:
  PretrainClassifier() = default;

  PretrainClassifier(int in_channels, int n_classes, Rng& rng)
      : in_channels_(in_channels), n_classes_(n_classes),
        conv1_(in_channels, 64, 5, 2, 2, rng), conv2_(64, 64, 5, 2, 2, rng),
        conv3_(64, 64, 5, 2, 2, rng), fc1_(64, 128, rng), fc2_(128, n_classes, rng) {}

  Tensor<T> forward(const Tensor<T>& x, const nn::ForwardCtx& ctx = {}) const {
    if (x.rank() != 2 || x.dim(0) != in_channels_) {
      throw std::invalid_argument("PretrainClassifier: expected [" +
                                  std::to_string(in_channels_) + " x L], got " +
                                  shape_str(x.shape()));
    }
    auto h = ops::gelu(conv1_(x));
    h = ops::gelu(conv2_(h));
    h = ops::gelu(conv3_(h));
    auto pooled = ops::global_avg(h);
    auto d = ops::gelu(fc1_(pooled));
    if (ctx.training) {
      if (ctx.rng == nullptr) {
        throw std::invalid_argument("PretrainClassifier: training forward needs an rng");
      }
      d = ops::dropout(d, 0.3, *ctx.rng, true);
    }
    return ops::softmax(fc2_(d));
  }

  nn::ParamList<T> parameters() const {
    nn::ParamList<T> out;
    conv1_.collect(out, "clf.conv1");
    conv2_.collect(out, "clf.conv2");
    conv3_.collect(out, "clf.conv3");
    fc1_.collect(out, "clf.fc1");
    fc2_.collect(out, "clf.fc2");
    return out;
  }

  int n_classes() const { return n_classes_; }

 private:
  int in_channels_ = 5;
  int n_classes_ = 2;
  nn::Conv1d<T> conv1_, conv2_, conv3_;
  nn::Dense<T> fc1_, fc2_;
};

// ---------------------------------------------------------------------------
// Input assembly

// [x; f] channel stack: every raw channel contributes its signal row followed
// by the four rows of its conditioning vector, so C raw channels become 5C.
template <typename T>
Tensor<T> assemble_input(const std::vector<std::vector<double>>& channels,
                         const std::vector<std::vector<double>>& cond_vectors) {
  if (channels.empty() || channels.size() != cond_vectors.size()) {
    throw std::invalid_argument("assemble_input: need one conditioning vector per channel");
  }
  const std::size_t len = channels.front().size();
  std::vector<Tensor<T>> rows;
  for (std::size_t c = 0; c < channels.size(); ++c) {
    if (channels[c].size() != len || cond_vectors[c].size() != 4 * len) {
      throw std::invalid_argument("assemble_input: length mismatch at channel " +
                                  std::to_string(c));
    }
    std::vector<T> xr(channels[c].begin(), channels[c].end());
    rows.push_back(Tensor<T>({1, static_cast<int>(len)}, std::move(xr)));
    std::vector<T> fr(cond_vectors[c].begin(), cond_vectors[c].end());
    rows.push_back(Tensor<T>({4, static_cast<int>(len)}, std::move(fr)));
  }
  return ops::concat_rows(rows);
}

}  // namespace usad::net
