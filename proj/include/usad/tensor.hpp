#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace usad {

class Tape;

// Tracks bytes of live tensor storage on the current thread. Used by the
// bench module to report the activation high-water mark of a forward pass.
struct ActivationMeter {
  long long current_bytes = 0;
  long long peak_bytes = 0;
  bool active = false;

  static ActivationMeter& instance() {
    thread_local ActivationMeter meter;
    return meter;
  }
  void begin() {
    current_bytes = 0;
    peak_bytes = 0;
    active = true;
  }
  long long end() {
    active = false;
    return peak_bytes;
  }
  void add(long long bytes) {
    if (!active) return;
    current_bytes += bytes;
    if (current_bytes > peak_bytes) peak_bytes = current_bytes;
  }
  void remove(long long bytes) {
    if (!active) return;
    current_bytes -= bytes;
  }
};

inline std::string shape_str(const std::vector<int>& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

inline std::int64_t shape_numel(const std::vector<int>& shape) {
  std::int64_t n = 1;
  for (int d : shape) n *= d;
  return n;
}

namespace detail {

template <typename T>
struct TensorImpl {
  std::vector<int> shape;
  std::vector<T> data;
  std::vector<T> grad;  // allocated on demand, same length as data
  bool requires_grad = false;
  Tape* tape = nullptr;  // set while the tensor participates in a recording

  TensorImpl(std::vector<int> s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) {
    ActivationMeter::instance().add(static_cast<long long>(data.size() * sizeof(T)));
  }
  ~TensorImpl() {
    ActivationMeter::instance().remove(
        static_cast<long long>((data.size() + grad.size()) * sizeof(T)));
  }
  void ensure_grad() {
    if (grad.empty()) {
      grad.assign(data.size(), T(0));
      ActivationMeter::instance().add(static_cast<long long>(grad.size() * sizeof(T)));
    }
  }
};

}  // namespace detail

// Dense n-dimensional array with value semantics on the handle and shared
// storage underneath. Row-major layout; rank 3 at most is used in practice
// ([C x L] feature maps, [C_out x C_in x k] kernels).
template <typename T>
class Tensor {
 public:
  using Scalar = T;

  Tensor() = default;

  explicit Tensor(std::vector<int> shape)
      : impl_(make_impl(std::move(shape), /*fill*/ true, {})) {}

  Tensor(std::vector<int> shape, std::vector<T> data)
      : impl_(make_impl(std::move(shape), false, std::move(data))) {}

  static Tensor scalar(T v) { return Tensor({1}, {v}); }

  static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }

  static Tensor full(std::vector<int> shape, T v) {
    Tensor t(std::move(shape));
    for (auto& x : t.data()) x = v;
    return t;
  }

  bool defined() const { return impl_ != nullptr; }

  const std::vector<int>& shape() const { return impl_->shape; }
  int rank() const { return static_cast<int>(impl_->shape.size()); }
  int dim(int i) const { return impl_->shape[static_cast<std::size_t>(i)]; }
  std::int64_t numel() const { return static_cast<std::int64_t>(impl_->data.size()); }

  std::span<T> data() { return impl_->data; }
  std::span<const T> data() const { return impl_->data; }

  T& at(std::int64_t i) { return impl_->data[static_cast<std::size_t>(i)]; }
  const T& at(std::int64_t i) const { return impl_->data[static_cast<std::size_t>(i)]; }
  // rank-2 access: [r x c]
  T& at2(int r, int c) { return impl_->data[static_cast<std::size_t>(r) * dim(1) + c]; }
  const T& at2(int r, int c) const {
    return impl_->data[static_cast<std::size_t>(r) * dim(1) + c];
  }
  // rank-3 access: [a x b x c]
  T& at3(int a, int b, int c) {
    return impl_->data[(static_cast<std::size_t>(a) * dim(1) + b) * dim(2) + c];
  }
  const T& at3(int a, int b, int c) const {
    return impl_->data[(static_cast<std::size_t>(a) * dim(1) + b) * dim(2) + c];
  }

  T item() const {
    if (numel() != 1) {
      throw std::invalid_argument("item() requires a scalar tensor, got " +
                                  shape_str(impl_->shape));
    }
    return impl_->data[0];
  }

  bool requires_grad() const { return impl_->requires_grad; }
  Tensor& set_requires_grad(bool v = true) {
    impl_->requires_grad = v;
    return *this;
  }

  bool has_grad() const { return !impl_->grad.empty(); }
  std::span<T> grad() {
    impl_->ensure_grad();
    return impl_->grad;
  }
  std::span<const T> grad_view() const { return impl_->grad; }
  void zero_grad() {
    for (auto& g : impl_->grad) g = T(0);
  }

  Tensor clone() const {
    Tensor t(impl_->shape, std::vector<T>(impl_->data.begin(), impl_->data.end()));
    return t;
  }

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(impl_->data.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<U>(impl_->data[i]);
    return Tensor<U>(impl_->shape, std::move(out));
  }

  detail::TensorImpl<T>* impl() const { return impl_.get(); }
  std::shared_ptr<detail::TensorImpl<T>> impl_ptr() const { return impl_; }

 private:
  static std::shared_ptr<detail::TensorImpl<T>> make_impl(std::vector<int> shape, bool fill,
                                                          std::vector<T> data) {
    for (int d : shape) {
      if (d <= 0) throw std::invalid_argument("tensor dims must be positive, got " + shape_str(shape));
    }
    const auto n = static_cast<std::size_t>(shape_numel(shape));
    if (fill) {
      data.assign(n, T(0));
    } else if (data.size() != n) {
      throw std::invalid_argument("data length " + std::to_string(data.size()) +
                                  " does not match shape " + shape_str(shape));
    }
    return std::make_shared<detail::TensorImpl<T>>(std::move(shape), std::move(data));
  }

  std::shared_ptr<detail::TensorImpl<T>> impl_;
};

using TensorD = Tensor<double>;
using TensorF = Tensor<float>;

}  // namespace usad
