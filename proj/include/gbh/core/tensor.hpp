// Copyright 2026 The GBH Detector Authors
//
// SPDX-License-Identifier: Apache-2.0

/// @file tensor.hpp
/// Dense row-major tensor with optional participation in a reverse-mode tape.
///
/// A `Tensor<T>` is a cheap handle to shared storage. Ops produce new tensors
/// and, when a `Tape<T>` is active on the current thread and any input
/// requires a gradient, record a closure that propagates gradients from the
/// output back to the inputs. `Tape::backward` replays those closures in
/// reverse recording order, which is a reverse topological order of the
/// executed graph.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "gbh/core/error.hpp"

namespace gbh {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

inline std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

template <typename T>
struct TensorImpl {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty until a gradient reaches this tensor
  bool requires_grad = false;

  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), T(0));
  }
};

template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  explicit Tensor(Shape shape, T fill = T(0))
      : impl_(std::make_shared<TensorImpl<T>>()) {
    impl_->data.assign(gbh::numel(shape), fill);
    impl_->shape = std::move(shape);
  }

  Tensor(Shape shape, std::vector<T> values)
      : impl_(std::make_shared<TensorImpl<T>>()) {
    if (values.size() != gbh::numel(shape)) {
      throw DimensionError("tensor", "numel",
                           "shape " + to_string(shape) + " needs " +
                               std::to_string(gbh::numel(shape)) +
                               " values, got " + std::to_string(values.size()));
    }
    impl_->shape = std::move(shape);
    impl_->data = std::move(values);
  }

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape), T(0)); }
  static Tensor ones(Shape shape) { return Tensor(std::move(shape), T(1)); }
  static Tensor scalar(T v) { return Tensor(Shape{1}, v); }

  bool defined() const noexcept { return static_cast<bool>(impl_); }

  const Shape& shape() const { return impl_->shape; }
  std::size_t dim(std::size_t axis) const { return impl_->shape.at(axis); }
  std::size_t ndim() const { return impl_->shape.size(); }
  std::size_t numel() const { return impl_->data.size(); }

  std::span<T> data() { return impl_->data; }
  std::span<const T> data() const { return impl_->data; }
  std::vector<T>& values() { return impl_->data; }
  const std::vector<T>& values() const { return impl_->data; }

  bool has_grad() const { return impl_->grad.size() == impl_->data.size(); }
  std::span<T> grad() {
    impl_->ensure_grad();
    return impl_->grad;
  }
  std::span<const T> grad() const {
    impl_->ensure_grad();
    return impl_->grad;
  }
  void zero_grad() {
    if (!impl_->grad.empty()) std::fill(impl_->grad.begin(), impl_->grad.end(), T(0));
  }

  bool requires_grad() const { return impl_ && impl_->requires_grad; }
  Tensor& set_requires_grad(bool on = true) {
    impl_->requires_grad = on;
    return *this;
  }

  T item() const {
    if (numel() != 1) {
      throw ContractError("item() on tensor of shape " + to_string(shape()));
    }
    return impl_->data[0];
  }

  T& operator[](std::size_t i) { return impl_->data[i]; }
  const T& operator[](std::size_t i) const { return impl_->data[i]; }

  // NCHW accessors for 4-D tensors.
  T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
    return impl_->data[index4(n, c, h, w)];
  }
  const T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
    return impl_->data[index4(n, c, h, w)];
  }

  // Copy of the values with no tape history and no gradient.
  Tensor clone() const { return Tensor(impl_->shape, impl_->data); }
  Tensor detach() const { return clone(); }

  const std::shared_ptr<TensorImpl<T>>& impl() const { return impl_; }

  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

 private:
  std::size_t index4(std::size_t n, std::size_t c, std::size_t h,
                     std::size_t w) const {
    const auto& s = impl_->shape;
    return ((n * s[1] + c) * s[2] + h) * s[3] + w;
  }

  std::shared_ptr<TensorImpl<T>> impl_;
};

template <typename U, typename T>
Tensor<U> cast(const Tensor<T>& t) {
  std::vector<U> out(t.numel());
  std::transform(t.data().begin(), t.data().end(), out.begin(),
                 [](T v) { return static_cast<U>(v); });
  return Tensor<U>(t.shape(), std::move(out));
}

// Ordered record of executed ops. Each entry owns references to the
// tensors its backward closure touches; clear() releases them.
template <typename T>
class Tape {
 public:
  struct Entry {
    const char* op;
    std::function<void()> backward;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void record(const char* op, std::function<void()> fn) {
    entries_.push_back({op, std::move(fn)});
  }

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const std::vector<Entry>& entries() const { return entries_; }

  void clear() {
    entries_.clear();
    entries_.shrink_to_fit();
  }

  // Seeds d(loss)/d(loss) = 1 and replays recorded closures newest first.
  // `visit`, when given, observes the op names in replay order.
  void backward(const Tensor<T>& loss,
                const std::function<void(const char*)>& visit = {}) {
    if (!loss.defined() || loss.numel() != 1) {
      throw ContractError("backward() requires a scalar loss, got shape " +
                          (loss.defined() ? to_string(loss.shape())
                                          : std::string("<undefined>")));
    }
    if (entries_.empty()) {
      throw ContractError("backward() on an empty tape");
    }
    auto& impl = *loss.impl();
    impl.ensure_grad();
    impl.grad[0] += T(1);
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
      if (visit) visit(it->op);
      it->backward();
    }
  }

 private:
  std::vector<Entry> entries_;
};

namespace detail {
template <typename T>
inline thread_local Tape<T>* tape_slot = nullptr;
}  // namespace detail

template <typename T>
Tape<T>* active_tape() {
  return detail::tape_slot<T>;
}

// Makes `tape` the recording target for the current thread while alive.
template <typename T>
class TapeScope {
 public:
  explicit TapeScope(Tape<T>& tape) : previous_(detail::tape_slot<T>) {
    detail::tape_slot<T> = &tape;
  }
  ~TapeScope() { detail::tape_slot<T> = previous_; }
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape<T>* previous_;
};

// Disables recording for the current thread while alive.
template <typename T>
class NoGradScope {
 public:
  NoGradScope() : previous_(detail::tape_slot<T>) {
    detail::tape_slot<T> = nullptr;
  }
  ~NoGradScope() { detail::tape_slot<T> = previous_; }
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  Tape<T>* previous_;
};

// Runs the reverse pass on the tape active for this thread.
template <typename T>
void backward(const Tensor<T>& loss) {
  Tape<T>* tape = active_tape<T>();
  if (tape == nullptr) throw ContractError("backward() with no active tape");
  tape->backward(loss);
}

}  // namespace gbh
