#pragma once

#include <functional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "usad/tensor.hpp"

namespace usad {

// Reverse-mode tape. Ops executed inside a TapeScope append one node each;
// backward() replays the nodes in strict reverse append order. One tape per
// training context; contexts on different threads never share a tape.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape*& current() {
    thread_local Tape* tl = nullptr;
    return tl;
  }

  void record(std::function<void()> backward_fn) { nodes_.push_back(std::move(backward_fn)); }

  std::size_t size() const { return nodes_.size(); }

  template <typename T>
  void backward(Tensor<T> loss) {
    if (loss.numel() != 1) {
      throw std::invalid_argument("backward requires a scalar loss, got " +
                                  shape_str(loss.shape()));
    }
    if (loss.impl()->tape != this) {
      throw std::logic_error("backward called on a loss detached from this tape");
    }
    if (ran_backward_) {
      throw std::logic_error("backward already ran on this tape; call reset() first");
    }
    ran_backward_ = true;
    loss.grad()[0] = T(1);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
  }

  void reset() {
    nodes_.clear();
    ran_backward_ = false;
  }

 private:
  std::vector<std::function<void()>> nodes_;
  bool ran_backward_ = false;
};

// RAII recording scope: ops called inside see Tape::current() == &tape.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape) : prev_(Tape::current()) { Tape::current() = &tape; }
  ~TapeScope() { Tape::current() = prev_; }
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* prev_;
};

}  // namespace usad
