#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "usad/ops.hpp"
#include "usad/rng.hpp"
#include "usad/tensor.hpp"

namespace usad::nn {

template <typename T>
struct Param {
  std::string name;
  Tensor<T> value;
};

template <typename T>
using ParamList = std::vector<Param<T>>;

template <typename T>
std::int64_t count_parameters(const ParamList<T>& params) {
  std::int64_t n = 0;
  for (const auto& p : params) n += p.value.numel();
  return n;
}

struct ForwardCtx {
  bool training = false;
  Rng* rng = nullptr;  // required when training with dropout
};

template <typename T>
Tensor<T> randn(std::vector<int> shape, Rng& rng, double stddev) {
  Tensor<T> t(std::move(shape));
  for (auto& v : t.data()) v = static_cast<T>(rng.normal() * stddev);
  t.set_requires_grad(true);
  return t;
}

// Largest group count <= 8 that divides the channel count.
inline int pick_groups(int channels) {
  for (int g : {8, 4, 2})
    if (channels % g == 0 && channels >= g) return g;
  return 1;
}

template <typename T>
struct Conv1d {
  Tensor<T> w;  // [C_out x C_in x k]
  Tensor<T> b;  // [C_out]
  int stride = 1;
  int pad = 0;

  Conv1d() = default;
  Conv1d(int c_in, int c_out, int k, int stride_, int pad_, Rng& rng)
      : stride(stride_), pad(pad_) {
    const double scale = std::sqrt(2.0 / (static_cast<double>(c_in) * k));
    w = randn<T>({c_out, c_in, k}, rng, scale);
    b = Tensor<T>::zeros({c_out});
    b.set_requires_grad(true);
  }

  Tensor<T> operator()(const Tensor<T>& x) const {
    return ops::add_rows(ops::conv1d(x, w, stride, pad), b);
  }

  void collect(ParamList<T>& out, const std::string& prefix) const {
    out.push_back({prefix + ".w", w});
    out.push_back({prefix + ".b", b});
  }
};

template <typename T>
struct Dense {
  Tensor<T> w;  // [out x in]
  Tensor<T> b;  // [out]

  Dense() = default;
  Dense(int in, int out, Rng& rng) {
    const double scale = std::sqrt(2.0 / static_cast<double>(in));
    w = randn<T>({out, in}, rng, scale);
    b = Tensor<T>::zeros({out});
    b.set_requires_grad(true);
  }

  Tensor<T> operator()(const Tensor<T>& x) const { return ops::dense(x, w, b); }

  void collect(ParamList<T>& out, const std::string& prefix) const {
    out.push_back({prefix + ".w", w});
    out.push_back({prefix + ".b", b});
  }
};

// Group normalization with learned per-channel affine.
template <typename T>
struct GroupNorm {
  Tensor<T> gamma;  // [C]
  Tensor<T> beta;   // [C]
  int groups = 1;
  T eps = T(1e-5);

  GroupNorm() = default;
  explicit GroupNorm(int channels, int groups_ = 0, T eps_ = T(1e-5))
      : groups(groups_ > 0 ? groups_ : pick_groups(channels)), eps(eps_) {
    gamma = Tensor<T>::full({channels}, T(1));
    gamma.set_requires_grad(true);
    beta = Tensor<T>::zeros({channels});
    beta.set_requires_grad(true);
  }

  Tensor<T> operator()(const Tensor<T>& x) const {
    return ops::add_rows(ops::mul_rows(ops::group_norm(x, groups, eps), gamma), beta);
  }

  void collect(ParamList<T>& out, const std::string& prefix) const {
    out.push_back({prefix + ".gamma", gamma});
    out.push_back({prefix + ".beta", beta});
  }
};

}  // namespace usad::nn
