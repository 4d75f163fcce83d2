#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "usad/rng.hpp"
#include "usad/tape.hpp"
#include "usad/tensor.hpp"

// Differentiable op set. Every op computes its forward value eagerly and, when
// called inside a TapeScope with at least one grad-requiring input, appends a
// backward closure to the tape. Outside a scope the ops are plain kernels.
namespace usad::ops {

namespace detail {

template <typename T>
void check_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                                " vs " + shape_str(b.shape()));
  }
}

template <typename T, typename... Ts>
bool any_requires_grad(const Tensor<T>& first, const Ts&... rest) {
  if constexpr (sizeof...(rest) == 0) {
    return first.requires_grad();
  } else {
    return first.requires_grad() || any_requires_grad(rest...);
  }
}

inline Tape* recording_tape_if(bool needs_grad) {
  Tape* t = Tape::current();
  return (t != nullptr && needs_grad) ? t : nullptr;
}

template <typename T>
void attach(Tensor<T>& out, Tape* tape) {
  out.impl()->tape = tape;
  out.impl()->requires_grad = true;
  out.impl()->ensure_grad();
}

// Accumulates into x.grad when x participates in differentiation. Holds a
// shared_ptr so captured inputs outlive the backward pass.
template <typename T>
struct GradSink {
  std::shared_ptr<usad::detail::TensorImpl<T>> impl;
  bool live;
  explicit GradSink(const Tensor<T>& x) : impl(x.impl_ptr()), live(x.requires_grad()) {
    if (live) impl->ensure_grad();
  }
  void add(std::size_t i, T v) const {
    if (live) impl->grad[i] += v;
  }
};

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise arithmetic

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape(a, b, "add");
  Tensor<T> out(a.shape());
  const auto av = a.data();
  const auto bv = b.data();
  auto ov = out.data();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] + bv[i];
  if (Tape* t = detail::recording_tape_if(detail::any_requires_grad(a, b))) {
    detail::attach(out, t);
    detail::GradSink<T> ga(a), gb(b);
    auto oi = out.impl_ptr();
    t->record([=] {
      for (std::size_t i = 0; i < oi->grad.size(); ++i) {
        ga.add(i, oi->grad[i]);
        gb.add(i, oi->grad[i]);
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape(a, b, "sub");
  Tensor<T> out(a.shape());
  const auto av = a.data();
  const auto bv = b.data();
  auto ov = out.data();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] - bv[i];
  if (Tape* t = detail::recording_tape_if(detail::any_requires_grad(a, b))) {
    detail::attach(out, t);
    detail::GradSink<T> ga(a), gb(b);
    auto oi = out.impl_ptr();
    t->record([=] {
      for (std::size_t i = 0; i < oi->grad.size(); ++i) {
        ga.add(i, oi->grad[i]);
        gb.add(i, -oi->grad[i]);
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape(a, b, "mul");
  Tensor<T> out(a.shape());
  const auto av = a.data();
  const auto bv = b.data();
  auto ov = out.data();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] * bv[i];
  if (Tape* t = detail::recording_tape_if(detail::any_requires_grad(a, b))) {
    detail::attach(out, t);
    detail::GradSink<T> ga(a), gb(b);
    auto oi = out.impl_ptr();
    auto ap = a.impl_ptr(), bp = b.impl_ptr();
    t->record([=] {
      for (std::size_t i = 0; i < oi->grad.size(); ++i) {
        ga.add(i, oi->grad[i] * bp->data[i]);
        gb.add(i, oi->grad[i] * ap->data[i]);
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& a, T c) {
  Tensor<T> out(a.shape());
  const auto av = a.data();
  auto ov = out.data();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] + c;
  if (Tape* t = detail::recording_tape_if(a.requires_grad())) {
    detail::attach(out, t);
    detail::GradSink<T> ga(a);
    auto oi = out.impl_ptr();
    t->record([=] {
      for (std::size_t i = 0; i < oi->grad.size(); ++i) ga.add(i, oi->grad[i]);
    });
  }
  return out;
}

template <typename T>
Tensor<T> mul_scalar(const Tensor<T>& a, T c) {
  Tensor<T> out(a.shape());
  const auto av = a.data();
  auto ov = out.data();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] * c;
  if (Tape* t = detail::recording_tape_if(a.requires_grad())) {
    detail::attach(out, t);
    detail::GradSink<T> ga(a);
    auto oi = out.impl_ptr();
    t->record([=] {
      for (std::size_t i = 0; i < oi->grad.size(); ++i) ga.add(i, oi->grad[i] * c);
    });
  }
  return out;
}

template <typename T>
Tensor<T> neg(const Tensor<T>& a) {
  return mul_scalar(a, T(-1));
}

// Elementwise sum of n same-shape tensors.
template <typename T>
Tensor<T> add_n(const std::vector<Tensor<T>>& xs) {
  if (xs.empty()) throw std::invalid_argument("add_n: empty input list");
  for (const auto& x : xs) detail::check_same_shape(xs.front(), x, "add_n");
  Tensor<T> out(xs.front().shape());
  auto ov = out.data();
  for (const auto& x : xs) {
    const auto xv = x.data();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] += xv[i];
  }
  bool needs = false;
  for (const auto& x : xs) needs = needs || x.requires_grad();
  if (Tape* t = detail::recording_tape_if(needs)) {
    detail::attach(out, t);
    std::vector<detail::GradSink<T>> sinks;
    sinks.reserve(xs.size());
    for (const auto& x : xs) sinks.emplace_back(x);
    auto oi = out.impl_ptr();
    t->record([=] {
      for (const auto& s : sinks)
        for (std::size_t i = 0; i < oi->grad.size(); ++i) s.add(i, oi->grad[i]);
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reductions

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
  T acc(0);
  for (T v : a.data()) acc += v;
  Tensor<T> out = Tensor<T>::scalar(acc);
  if (Tape* t = detail::recording_tape_if(a.requires_grad())) {
    detail::attach(out, t);
    detail::GradSink<T> ga(a);
    auto oi = out.impl_ptr();
    const std::size_t n = a.data().size();
    t->record([=] {
      const T g = oi->grad[0];
      for (std::size_t i = 0; i < n; ++i) ga.add(i, g);
    });
  }
  return out;
}

template <typename T>
Tensor<T> mean(const Tensor<T>& a) {
  return mul_scalar(sum(a), T(1) / static_cast<T>(a.numel()));
}

template <typename T>
Tensor<T> dot(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape(a, b, "dot");
  T acc(0);
  const auto av = a.data();
  const auto bv = b.data();
  for (std::size_t i = 0; i < av.size(); ++i) acc += av[i] * bv[i];
  Tensor<T> out = Tensor<T>::scalar(acc);
  if (Tape* t = detail::recording_tape_if(detail::any_requires_grad(a, b))) {
    detail::attach(out, t);
    detail::GradSink<T> ga(a), gb(b);
    auto oi = out.impl_ptr();
    auto ap = a.impl_ptr(), bp = b.impl_ptr();
    t->record([=] {
      const T g = oi->grad[0];
      for (std::size_t i = 0; i < ap->data.size(); ++i) {
        ga.add(i, g * bp->data[i]);
        gb.add(i, g * ap->data[i]);
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Elementwise nonlinearities

template <typename T>
Tensor<T> log(const Tensor<T>& a) {
  Tensor<T> out(a.shape());
  const auto av = a.data();
  auto ov = out.data();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = std::log(av[i]);
  if (Tape* t = detail::recording_tape_if(a.requires_grad())) {
    detail::attach(out, t);
    detail::GradSink<T> ga(a);
    auto oi = out.impl_ptr();
    auto ap = a.impl_ptr();
    t->record([=] {
      for (std::size_t i = 0; i < oi->grad.size(); ++i) ga.add(i, oi->grad[i] / ap->data[i]);
    });
  }
  return out;
}

template <typename T>
Tensor<T> clamp_min(const Tensor<T>& a, T floor) {
  Tensor<T> out(a.shape());
  const auto av = a.data();
  auto ov = out.data();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = std::max(av[i], floor);
  if (Tape* t = detail::recording_tape_if(a.requires_grad())) {
    detail::attach(out, t);
    detail::GradSink<T> ga(a);
    auto oi = out.impl_ptr();
    auto ap = a.impl_ptr();
    t->record([=] {
      for (std::size_t i = 0; i < oi->grad.size(); ++i)
        if (ap->data[i] > floor) ga.add(i, oi->grad[i]);
    });
  }
  return out;
}

template <typename T>
Tensor<T> relu(const Tensor<T>& a) {
  Tensor<T> out(a.shape());
  const auto av = a.data();
  auto ov = out.data();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] > T(0) ? av[i] : T(0);
  if (Tape* t = detail::recording_tape_if(a.requires_grad())) {
    detail::attach(out, t);
    detail::GradSink<T> ga(a);
    auto oi = out.impl_ptr();
    auto ap = a.impl_ptr();
    t->record([=] {
      for (std::size_t i = 0; i < oi->grad.size(); ++i)
        if (ap->data[i] > T(0)) ga.add(i, oi->grad[i]);
    });
  }
  return out;
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& a) {
  Tensor<T> out(a.shape());
  const auto av = a.data();
  auto ov = out.data();
  for (std::size_t i = 0; i < ov.size(); ++i) {
    const T x = av[i];
    // stable in both tails
    ov[i] = x >= T(0) ? T(1) / (T(1) + std::exp(-x)) : std::exp(x) / (T(1) + std::exp(x));
  }
  if (Tape* t = detail::recording_tape_if(a.requires_grad())) {
    detail::attach(out, t);
    detail::GradSink<T> ga(a);
    auto oi = out.impl_ptr();
    t->record([=] {
      for (std::size_t i = 0; i < oi->grad.size(); ++i) {
        const T s = oi->data[i];
        ga.add(i, oi->grad[i] * s * (T(1) - s));
      }
    });
  }
  return out;
}

// Exact erf form: gelu(x) = x * Phi(x).
template <typename T>
Tensor<T> gelu(const Tensor<T>& a) {
  constexpr T kInvSqrt2 = T(0.70710678118654752440084436210485L);
  constexpr T kInvSqrt2Pi = T(0.39894228040143267793994605993438L);
  Tensor<T> out(a.shape());
  const auto av = a.data();
  auto ov = out.data();
  for (std::size_t i = 0; i < ov.size(); ++i) {
    const T x = av[i];
    ov[i] = x * T(0.5) * (T(1) + std::erf(x * kInvSqrt2));
  }
  if (Tape* t = detail::recording_tape_if(a.requires_grad())) {
    detail::attach(out, t);
    detail::GradSink<T> ga(a);
    auto oi = out.impl_ptr();
    auto ap = a.impl_ptr();
    t->record([=] {
      for (std::size_t i = 0; i < oi->grad.size(); ++i) {
        const T x = ap->data[i];
        const T phi = T(0.5) * (T(1) + std::erf(x * kInvSqrt2));
        const T pdf = kInvSqrt2Pi * std::exp(T(-0.5) * x * x);
        ga.add(i, oi->grad[i] * (phi + x * pdf));
      }
    });
  }
  return out;
}

namespace detail {

// softmax over a strided slice; writes outputs in place into out.
template <typename T>
void softmax_slice(std::span<const T> in, std::span<T> out, std::size_t base, std::size_t stride,
                   std::size_t n) {
  T mx = in[base];
  for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, in[base + i * stride]);
  T denom(0);
  for (std::size_t i = 0; i < n; ++i) denom += std::exp(in[base + i * stride] - mx);
  for (std::size_t i = 0; i < n; ++i) out[base + i * stride] = std::exp(in[base + i * stride] - mx) / denom;
}

}  // namespace detail

// Softmax along `axis`. Rank-1 tensors use axis 0. Outputs along each
// reduction slice are nonnegative and sum to 1.
template <typename T>
Tensor<T> softmax(const Tensor<T>& a, int axis = 0) {
  if (a.rank() != 1 && a.rank() != 2) {
    throw std::invalid_argument("softmax: rank must be 1 or 2, got " + shape_str(a.shape()));
  }
  if (axis < 0 || axis >= a.rank()) throw std::invalid_argument("softmax: bad axis");
  Tensor<T> out(a.shape());
  const auto av = a.data();
  auto ov = out.data();

  std::size_t n, stride, slices, slice_step;
  if (a.rank() == 1) {
    n = static_cast<std::size_t>(a.dim(0));
    stride = 1;
    slices = 1;
    slice_step = 0;
  } else if (axis == 1) {  // softmax within each row
    n = static_cast<std::size_t>(a.dim(1));
    stride = 1;
    slices = static_cast<std::size_t>(a.dim(0));
    slice_step = n;
  } else {  // axis == 0: softmax down each column
    n = static_cast<std::size_t>(a.dim(0));
    stride = static_cast<std::size_t>(a.dim(1));
    slices = static_cast<std::size_t>(a.dim(1));
    slice_step = 1;
  }
  for (std::size_t s = 0; s < slices; ++s) detail::softmax_slice(av, ov, s * slice_step, stride, n);

  if (Tape* t = detail::recording_tape_if(a.requires_grad())) {
    detail::attach(out, t);
    detail::GradSink<T> ga(a);
    auto oi = out.impl_ptr();
    t->record([=] {
      for (std::size_t s = 0; s < slices; ++s) {
        const std::size_t base = s * slice_step;
        T inner(0);
        for (std::size_t i = 0; i < n; ++i) {
          const std::size_t ix = base + i * stride;
          inner += oi->grad[ix] * oi->data[ix];
        }
        for (std::size_t i = 0; i < n; ++i) {
          const std::size_t ix = base + i * stride;
          ga.add(ix, oi->data[ix] * (oi->grad[ix] - inner));
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Linear layers

// out_i = sum_j W[i][j] x[j] + b[i]
template <typename T>
Tensor<T> dense(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  if (x.rank() != 1 || w.rank() != 2 || b.rank() != 1 || w.dim(1) != x.dim(0) ||
      w.dim(0) != b.dim(0)) {
    throw std::invalid_argument("dense: shape mismatch x" + shape_str(x.shape()) + " w" +
                                shape_str(w.shape()) + " b" + shape_str(b.shape()));
  }
  const int m = w.dim(0), n = w.dim(1);
  Tensor<T> out({m});
  for (int i = 0; i < m; ++i) {
    T acc = b.at(i);
    for (int j = 0; j < n; ++j) acc += w.at2(i, j) * x.at(j);
    out.at(i) = acc;
  }
  if (Tape* t = detail::recording_tape_if(detail::any_requires_grad(x, w, b))) {
    detail::attach(out, t);
    detail::GradSink<T> gx(x), gw(w), gb(b);
    auto oi = out.impl_ptr();
    auto xp = x.impl_ptr(), wp = w.impl_ptr();
    t->record([=] {
      for (int i = 0; i < m; ++i) {
        const T g = oi->grad[static_cast<std::size_t>(i)];
        gb.add(static_cast<std::size_t>(i), g);
        for (int j = 0; j < n; ++j) {
          gx.add(static_cast<std::size_t>(j), g * wp->data[static_cast<std::size_t>(i) * n + j]);
          gw.add(static_cast<std::size_t>(i) * n + j, g * xp->data[static_cast<std::size_t>(j)]);
        }
      }
    });
  }
  return out;
}

// 1D convolution: x [C_in x L], w [C_out x C_in x k] -> [C_out x L_out],
// L_out = floor((L + 2*pad - k)/stride) + 1.
template <typename T>
Tensor<T> conv1d(const Tensor<T>& x, const Tensor<T>& w, int stride = 1, int pad = 0) {
  if (x.rank() != 2 || w.rank() != 3 || w.dim(1) != x.dim(0)) {
    throw std::invalid_argument("conv1d: shape mismatch x" + shape_str(x.shape()) + " w" +
                                shape_str(w.shape()));
  }
  const int c_in = x.dim(0), len = x.dim(1);
  const int c_out = w.dim(0), k = w.dim(2);
  if (k < 1 || stride < 1) throw std::invalid_argument("conv1d: kernel and stride must be >= 1");
  if (len + 2 * pad < k) {
    throw std::invalid_argument("conv1d: input length " + std::to_string(len) + " with pad " +
                                std::to_string(pad) + " shorter than kernel " + std::to_string(k));
  }
  const int l_out = (len + 2 * pad - k) / stride + 1;
  Tensor<T> out({c_out, l_out});
  for (int co = 0; co < c_out; ++co) {
    for (int j = 0; j < l_out; ++j) {
      T acc(0);
      const int start = j * stride - pad;
      for (int ci = 0; ci < c_in; ++ci) {
        const int u0 = std::max(0, -start);
        const int u1 = std::min(k, len - start);
        for (int u = u0; u < u1; ++u) acc += w.at3(co, ci, u) * x.at2(ci, start + u);
      }
      out.at2(co, j) = acc;
    }
  }
  if (Tape* t = detail::recording_tape_if(detail::any_requires_grad(x, w))) {
    detail::attach(out, t);
    detail::GradSink<T> gx(x), gw(w);
    auto oi = out.impl_ptr();
    auto xp = x.impl_ptr(), wp = w.impl_ptr();
    t->record([=] {
      for (int co = 0; co < c_out; ++co) {
        for (int j = 0; j < l_out; ++j) {
          const T g = oi->grad[static_cast<std::size_t>(co) * l_out + j];
          if (g == T(0)) continue;
          const int start = j * stride - pad;
          for (int ci = 0; ci < c_in; ++ci) {
            const int u0 = std::max(0, -start);
            const int u1 = std::min(k, len - start);
            for (int u = u0; u < u1; ++u) {
              const std::size_t xi = static_cast<std::size_t>(ci) * len + (start + u);
              const std::size_t wi = (static_cast<std::size_t>(co) * c_in + ci) * k + u;
              gx.add(xi, g * wp->data[wi]);
              gw.add(wi, g * xp->data[xi]);
            }
          }
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Pooling

template <typename T>
Tensor<T> global_avg(const Tensor<T>& x) {
  if (x.rank() != 2 || x.dim(1) < 1) {
    throw std::invalid_argument("global_avg: need [C x L] with L >= 1, got " +
                                shape_str(x.shape()));
  }
  const int c = x.dim(0), len = x.dim(1);
  Tensor<T> out({c});
  for (int i = 0; i < c; ++i) {
    T acc(0);
    for (int j = 0; j < len; ++j) acc += x.at2(i, j);
    out.at(i) = acc / static_cast<T>(len);
  }
  if (Tape* t = detail::recording_tape_if(x.requires_grad())) {
    detail::attach(out, t);
    detail::GradSink<T> gx(x);
    auto oi = out.impl_ptr();
    t->record([=] {
      const T inv = T(1) / static_cast<T>(len);
      for (int i = 0; i < c; ++i) {
        const T g = oi->grad[static_cast<std::size_t>(i)] * inv;
        for (int j = 0; j < len; ++j) gx.add(static_cast<std::size_t>(i) * len + j, g);
      }
    });
  }
  return out;
}

// Max over the length axis; ties break to the lowest index.
template <typename T>
Tensor<T> global_max(const Tensor<T>& x) {
  if (x.rank() != 2 || x.dim(1) < 1) {
    throw std::invalid_argument("global_max: need [C x L] with L >= 1, got " +
                                shape_str(x.shape()));
  }
  const int c = x.dim(0), len = x.dim(1);
  Tensor<T> out({c});
  std::vector<int> arg(static_cast<std::size_t>(c));
  for (int i = 0; i < c; ++i) {
    int best = 0;
    for (int j = 1; j < len; ++j)
      if (x.at2(i, j) > x.at2(i, best)) best = j;
    arg[static_cast<std::size_t>(i)] = best;
    out.at(i) = x.at2(i, best);
  }
  if (Tape* t = detail::recording_tape_if(x.requires_grad())) {
    detail::attach(out, t);
    detail::GradSink<T> gx(x);
    auto oi = out.impl_ptr();
    t->record([=] {
      for (int i = 0; i < c; ++i)
        gx.add(static_cast<std::size_t>(i) * len + arg[static_cast<std::size_t>(i)],
               oi->grad[static_cast<std::size_t>(i)]);
    });
  }
  return out;
}

// Mean over the channel axis: [C x L] -> [L].
template <typename T>
Tensor<T> channel_avg(const Tensor<T>& x) {
  if (x.rank() != 2 || x.dim(0) < 1) {
    throw std::invalid_argument("channel_avg: need [C x L] with C >= 1, got " +
                                shape_str(x.shape()));
  }
  const int c = x.dim(0), len = x.dim(1);
  Tensor<T> out({len});
  for (int j = 0; j < len; ++j) {
    T acc(0);
    for (int i = 0; i < c; ++i) acc += x.at2(i, j);
    out.at(j) = acc / static_cast<T>(c);
  }
  if (Tape* t = detail::recording_tape_if(x.requires_grad())) {
    detail::attach(out, t);
    detail::GradSink<T> gx(x);
    auto oi = out.impl_ptr();
    t->record([=] {
      const T inv = T(1) / static_cast<T>(c);
      for (int j = 0; j < len; ++j) {
        const T g = oi->grad[static_cast<std::size_t>(j)] * inv;
        for (int i = 0; i < c; ++i) gx.add(static_cast<std::size_t>(i) * len + j, g);
      }
    });
  }
  return out;
}

// Max over the channel axis: [C x L] -> [L]; ties break to the lowest channel.
template <typename T>
Tensor<T> channel_max(const Tensor<T>& x) {
  if (x.rank() != 2 || x.dim(0) < 1) {
    throw std::invalid_argument("channel_max: need [C x L] with C >= 1, got " +
                                shape_str(x.shape()));
  }
  const int c = x.dim(0), len = x.dim(1);
  Tensor<T> out({len});
  std::vector<int> arg(static_cast<std::size_t>(len));
  for (int j = 0; j < len; ++j) {
    int best = 0;
    for (int i = 1; i < c; ++i)
      if (x.at2(i, j) > x.at2(best, j)) best = i;
    arg[static_cast<std::size_t>(j)] = best;
    out.at(j) = x.at2(best, j);
  }
  if (Tape* t = detail::recording_tape_if(x.requires_grad())) {
    detail::attach(out, t);
    detail::GradSink<T> gx(x);
    auto oi = out.impl_ptr();
    t->record([=] {
      for (int j = 0; j < len; ++j)
        gx.add(static_cast<std::size_t>(arg[static_cast<std::size_t>(j)]) * len + j,
               oi->grad[static_cast<std::size_t>(j)]);
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Normalization

// Per-group standardization of [C x L]: each group of C/groups channels is
// shifted to mean 0 and scaled to unit variance (population, floor eps).
template <typename T>
Tensor<T> group_norm(const Tensor<T>& x, int groups, T eps = T(1e-5)) {
  if (x.rank() != 2) {
    throw std::invalid_argument("group_norm: need [C x L], got " + shape_str(x.shape()));
  }
  if (eps <= T(0)) throw std::invalid_argument("group_norm: eps must be positive");
  const int c = x.dim(0), len = x.dim(1);
  if (groups < 1 || c % groups != 0) {
    throw std::invalid_argument("group_norm: channel count " + std::to_string(c) +
                                " not divisible by groups " + std::to_string(groups));
  }
  const int gc = c / groups;                       // channels per group
  const std::size_t gsize = static_cast<std::size_t>(gc) * len;  // elements per group
  Tensor<T> out(x.shape());
  std::vector<T> inv_std(static_cast<std::size_t>(groups));
  const auto xv = x.data();
  auto ov = out.data();
  for (int g = 0; g < groups; ++g) {
    const std::size_t base = static_cast<std::size_t>(g) * gsize;
    T mu(0);
    for (std::size_t i = 0; i < gsize; ++i) mu += xv[base + i];
    mu /= static_cast<T>(gsize);
    T var(0);
    for (std::size_t i = 0; i < gsize; ++i) {
      const T d = xv[base + i] - mu;
      var += d * d;
    }
    var /= static_cast<T>(gsize);
    const T inv = T(1) / std::sqrt(var + eps);
    inv_std[static_cast<std::size_t>(g)] = inv;
    for (std::size_t i = 0; i < gsize; ++i) ov[base + i] = (xv[base + i] - mu) * inv;
  }
  if (Tape* t = detail::recording_tape_if(x.requires_grad())) {
    detail::attach(out, t);
    detail::GradSink<T> gx(x);
    auto oi = out.impl_ptr();
    t->record([=] {
      for (int g = 0; g < groups; ++g) {
        const std::size_t base = static_cast<std::size_t>(g) * gsize;
        T gmean(0), gxhat(0);
        for (std::size_t i = 0; i < gsize; ++i) {
          gmean += oi->grad[base + i];
          gxhat += oi->grad[base + i] * oi->data[base + i];
        }
        gmean /= static_cast<T>(gsize);
        gxhat /= static_cast<T>(gsize);
        const T inv = inv_std[static_cast<std::size_t>(g)];
        for (std::size_t i = 0; i < gsize; ++i) {
          gx.add(base + i, inv * (oi->grad[base + i] - gmean - oi->data[base + i] * gxhat));
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Shape manipulation

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, std::vector<int> new_shape) {
  if (shape_numel(new_shape) != x.numel()) {
    throw std::invalid_argument("reshape: cannot view " + shape_str(x.shape()) + " as " +
                                shape_str(new_shape));
  }
  Tensor<T> out(std::move(new_shape), std::vector<T>(x.data().begin(), x.data().end()));
  if (Tape* t = detail::recording_tape_if(x.requires_grad())) {
    detail::attach(out, t);
    detail::GradSink<T> gx(x);
    auto oi = out.impl_ptr();
    t->record([=] {
      for (std::size_t i = 0; i < oi->grad.size(); ++i) gx.add(i, oi->grad[i]);
    });
  }
  return out;
}

// Concatenate [C_i x L] blocks along the channel axis.
template <typename T>
Tensor<T> concat_rows(const std::vector<Tensor<T>>& xs) {
  if (xs.empty()) throw std::invalid_argument("concat_rows: empty input list");
  const int len = xs.front().dim(1);
  int rows = 0;
  for (const auto& x : xs) {
    if (x.rank() != 2 || x.dim(1) != len) {
      throw std::invalid_argument("concat_rows: incompatible block " + shape_str(x.shape()) +
                                  " vs length " + std::to_string(len));
    }
    rows += x.dim(0);
  }
  Tensor<T> out({rows, len});
  std::size_t off = 0;
  for (const auto& x : xs) {
    const auto xv = x.data();
    std::copy(xv.begin(), xv.end(), out.data().begin() + static_cast<std::ptrdiff_t>(off));
    off += xv.size();
  }
  bool needs = false;
  for (const auto& x : xs) needs = needs || x.requires_grad();
  if (Tape* t = detail::recording_tape_if(needs)) {
    detail::attach(out, t);
    std::vector<detail::GradSink<T>> sinks;
    std::vector<std::size_t> sizes;
    for (const auto& x : xs) {
      sinks.emplace_back(x);
      sizes.push_back(x.data().size());
    }
    auto oi = out.impl_ptr();
    t->record([=] {
      std::size_t pos = 0;
      for (std::size_t bi = 0; bi < sinks.size(); ++bi) {
        for (std::size_t i = 0; i < sizes[bi]; ++i) sinks[bi].add(i, oi->grad[pos + i]);
        pos += sizes[bi];
      }
    });
  }
  return out;
}

// Rows [r0, r1) of a [C x L] tensor.
template <typename T>
Tensor<T> slice_rows(const Tensor<T>& x, int r0, int r1) {
  if (x.rank() != 2 || r0 < 0 || r1 > x.dim(0) || r0 >= r1) {
    throw std::invalid_argument("slice_rows: bad range [" + std::to_string(r0) + ", " +
                                std::to_string(r1) + ") for " + shape_str(x.shape()));
  }
  const int len = x.dim(1);
  const std::size_t base = static_cast<std::size_t>(r0) * len;
  const std::size_t count = static_cast<std::size_t>(r1 - r0) * len;
  std::vector<T> data(x.data().begin() + static_cast<std::ptrdiff_t>(base),
                      x.data().begin() + static_cast<std::ptrdiff_t>(base + count));
  Tensor<T> out({r1 - r0, len}, std::move(data));
  if (Tape* t = detail::recording_tape_if(x.requires_grad())) {
    detail::attach(out, t);
    detail::GradSink<T> gx(x);
    auto oi = out.impl_ptr();
    t->record([=] {
      for (std::size_t i = 0; i < count; ++i) gx.add(base + i, oi->grad[i]);
    });
  }
  return out;
}

// Elements [a, b) of a rank-1 tensor.
template <typename T>
Tensor<T> slice_vec(const Tensor<T>& x, int a, int b) {
  if (x.rank() != 1 || a < 0 || b > x.dim(0) || a >= b) {
    throw std::invalid_argument("slice_vec: bad range [" + std::to_string(a) + ", " +
                                std::to_string(b) + ") for " + shape_str(x.shape()));
  }
  std::vector<T> data(x.data().begin() + a, x.data().begin() + b);
  Tensor<T> out({b - a}, std::move(data));
  if (Tape* t = detail::recording_tape_if(x.requires_grad())) {
    detail::attach(out, t);
    detail::GradSink<T> gx(x);
    auto oi = out.impl_ptr();
    const std::size_t base = static_cast<std::size_t>(a);
    t->record([=] {
      for (std::size_t i = 0; i < oi->grad.size(); ++i) gx.add(base + i, oi->grad[i]);
    });
  }
  return out;
}

template <typename T>
Tensor<T> concat_vecs(const std::vector<Tensor<T>>& xs) {
  if (xs.empty()) throw std::invalid_argument("concat_vecs: empty input list");
  int n = 0;
  for (const auto& x : xs) {
    if (x.rank() != 1) throw std::invalid_argument("concat_vecs: rank-1 inputs required");
    n += x.dim(0);
  }
  Tensor<T> out({n});
  std::size_t off = 0;
  for (const auto& x : xs) {
    std::copy(x.data().begin(), x.data().end(),
              out.data().begin() + static_cast<std::ptrdiff_t>(off));
    off += x.data().size();
  }
  bool needs = false;
  for (const auto& x : xs) needs = needs || x.requires_grad();
  if (Tape* t = detail::recording_tape_if(needs)) {
    detail::attach(out, t);
    std::vector<detail::GradSink<T>> sinks;
    std::vector<std::size_t> sizes;
    for (const auto& x : xs) {
      sinks.emplace_back(x);
      sizes.push_back(x.data().size());
    }
    auto oi = out.impl_ptr();
    t->record([=] {
      std::size_t pos = 0;
      for (std::size_t bi = 0; bi < sinks.size(); ++bi) {
        for (std::size_t i = 0; i < sizes[bi]; ++i) sinks[bi].add(i, oi->grad[pos + i]);
        pos += sizes[bi];
      }
    });
  }
  return out;
}

// Stack rank-1 tensors of equal length into [n x L].
template <typename T>
Tensor<T> stack_rows(const std::vector<Tensor<T>>& xs) {
  if (xs.empty()) throw std::invalid_argument("stack_rows: empty input list");
  std::vector<Tensor<T>> rows;
  rows.reserve(xs.size());
  for (const auto& x : xs) rows.push_back(reshape(x, {1, x.dim(0)}));
  return concat_rows(rows);
}

// ---------------------------------------------------------------------------
// Broadcast scale/shift

// Scale each channel row of [C x L] by s[C].
template <typename T>
Tensor<T> mul_rows(const Tensor<T>& x, const Tensor<T>& s) {
  if (x.rank() != 2 || s.rank() != 1 || s.dim(0) != x.dim(0)) {
    throw std::invalid_argument("mul_rows: shape mismatch " + shape_str(x.shape()) + " vs " +
                                shape_str(s.shape()));
  }
  const int c = x.dim(0), len = x.dim(1);
  Tensor<T> out(x.shape());
  for (int i = 0; i < c; ++i)
    for (int j = 0; j < len; ++j) out.at2(i, j) = x.at2(i, j) * s.at(i);
  if (Tape* t = detail::recording_tape_if(detail::any_requires_grad(x, s))) {
    detail::attach(out, t);
    detail::GradSink<T> gx(x), gs(s);
    auto oi = out.impl_ptr();
    auto xp = x.impl_ptr(), sp = s.impl_ptr();
    t->record([=] {
      for (int i = 0; i < c; ++i) {
        T acc(0);
        for (int j = 0; j < len; ++j) {
          const std::size_t ix = static_cast<std::size_t>(i) * len + j;
          gx.add(ix, oi->grad[ix] * sp->data[static_cast<std::size_t>(i)]);
          acc += oi->grad[ix] * xp->data[ix];
        }
        gs.add(static_cast<std::size_t>(i), acc);
      }
    });
  }
  return out;
}

// Add b[C] to each channel row of [C x L].
template <typename T>
Tensor<T> add_rows(const Tensor<T>& x, const Tensor<T>& b) {
  if (x.rank() != 2 || b.rank() != 1 || b.dim(0) != x.dim(0)) {
    throw std::invalid_argument("add_rows: shape mismatch " + shape_str(x.shape()) + " vs " +
                                shape_str(b.shape()));
  }
  const int c = x.dim(0), len = x.dim(1);
  Tensor<T> out(x.shape());
  for (int i = 0; i < c; ++i)
    for (int j = 0; j < len; ++j) out.at2(i, j) = x.at2(i, j) + b.at(i);
  if (Tape* t = detail::recording_tape_if(detail::any_requires_grad(x, b))) {
    detail::attach(out, t);
    detail::GradSink<T> gx(x), gb(b);
    auto oi = out.impl_ptr();
    t->record([=] {
      for (int i = 0; i < c; ++i) {
        T acc(0);
        for (int j = 0; j < len; ++j) {
          const std::size_t ix = static_cast<std::size_t>(i) * len + j;
          gx.add(ix, oi->grad[ix]);
          acc += oi->grad[ix];
        }
        gb.add(static_cast<std::size_t>(i), acc);
      }
    });
  }
  return out;
}

// Scale each column of [C x L] by m[L] (broadcast over channels).
template <typename T>
Tensor<T> mul_cols(const Tensor<T>& x, const Tensor<T>& m) {
  if (x.rank() != 2 || m.rank() != 1 || m.dim(0) != x.dim(1)) {
    throw std::invalid_argument("mul_cols: shape mismatch " + shape_str(x.shape()) + " vs " +
                                shape_str(m.shape()));
  }
  const int c = x.dim(0), len = x.dim(1);
  Tensor<T> out(x.shape());
  for (int i = 0; i < c; ++i)
    for (int j = 0; j < len; ++j) out.at2(i, j) = x.at2(i, j) * m.at(j);
  if (Tape* t = detail::recording_tape_if(detail::any_requires_grad(x, m))) {
    detail::attach(out, t);
    detail::GradSink<T> gx(x), gm(m);
    auto oi = out.impl_ptr();
    auto xp = x.impl_ptr(), mp = m.impl_ptr();
    t->record([=] {
      for (int j = 0; j < len; ++j) {
        T acc(0);
        for (int i = 0; i < c; ++i) {
          const std::size_t ix = static_cast<std::size_t>(i) * len + j;
          gx.add(ix, oi->grad[ix] * mp->data[static_cast<std::size_t>(j)]);
          acc += oi->grad[ix] * xp->data[ix];
        }
        gm.add(static_cast<std::size_t>(j), acc);
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Indexing

// Row `idx` of an [N x D] table (embedding lookup).
template <typename T>
Tensor<T> row(const Tensor<T>& table, int idx) {
  if (table.rank() != 2 || idx < 0 || idx >= table.dim(0)) {
    throw std::invalid_argument("row: index " + std::to_string(idx) + " out of range for " +
                                shape_str(table.shape()));
  }
  const int d = table.dim(1);
  const std::size_t base = static_cast<std::size_t>(idx) * d;
  std::vector<T> data(table.data().begin() + static_cast<std::ptrdiff_t>(base),
                      table.data().begin() + static_cast<std::ptrdiff_t>(base + d));
  Tensor<T> out({d}, std::move(data));
  if (Tape* t = detail::recording_tape_if(table.requires_grad())) {
    detail::attach(out, t);
    detail::GradSink<T> gt(table);
    auto oi = out.impl_ptr();
    t->record([=] {
      for (int i = 0; i < d; ++i) gt.add(base + static_cast<std::size_t>(i), oi->grad[static_cast<std::size_t>(i)]);
    });
  }
  return out;
}

// Scalar element x[idx].
template <typename T>
Tensor<T> pick(const Tensor<T>& x, int idx) {
  if (x.rank() != 1 || idx < 0 || idx >= x.dim(0)) {
    throw std::invalid_argument("pick: index " + std::to_string(idx) + " out of range for " +
                                shape_str(x.shape()));
  }
  Tensor<T> out = Tensor<T>::scalar(x.at(idx));
  if (Tape* t = detail::recording_tape_if(x.requires_grad())) {
    detail::attach(out, t);
    detail::GradSink<T> gx(x);
    auto oi = out.impl_ptr();
    t->record([=] { gx.add(static_cast<std::size_t>(idx), oi->grad[0]); });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Regularization

// Inverted dropout. Identity when not training or rate == 0; bit-identical
// inference outputs follow from the identity path.
template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double rate, Rng& rng, bool training) {
  if (rate < 0.0 || rate >= 1.0) throw std::invalid_argument("dropout: rate must be in [0, 1)");
  if (!training || rate == 0.0) return x;
  const T scale = T(1.0 / (1.0 - rate));
  std::vector<T> mask(x.data().size());
  for (auto& m : mask) m = rng.uniform() >= rate ? scale : T(0);
  Tensor<T> out(x.shape());
  const auto xv = x.data();
  auto ov = out.data();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = xv[i] * mask[i];
  if (Tape* t = detail::recording_tape_if(x.requires_grad())) {
    detail::attach(out, t);
    detail::GradSink<T> gx(x);
    auto oi = out.impl_ptr();
    auto m = std::make_shared<std::vector<T>>(std::move(mask));
    t->record([=] {
      for (std::size_t i = 0; i < oi->grad.size(); ++i) gx.add(i, oi->grad[i] * (*m)[i]);
    });
  }
  return out;
}

}  // namespace usad::ops
