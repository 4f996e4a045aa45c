#pragma once

#include <initializer_list>
#include <memory>
#include <string>
#include <vector>

#include "ggpfn/errors.hpp"
#include "ggpfn/rng.hpp"

namespace ggpfn {

template <class S>
class Tape;

// Dense n-dimensional array of scalars. Copies are shallow and share storage;
// data is treated as immutable once another op has consumed it. Feature maps
// use [channels, depth, height, width] (3D) or [channels, height, width] (2D)
// layout, row-major. A tensor may carry a link into the autodiff tape that
// produced it; tensors created directly never accumulate gradient.
template <class S>
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<int> shape) {
    return full(std::move(shape), S(0));
  }

  static Tensor full(std::vector<int> shape, S value) {
    Tensor t;
    const std::size_t n = count(shape);
    t.shape_ = std::move(shape);
    t.v_ = std::make_shared<std::vector<S>>(n, value);
    return t;
  }

  static Tensor from(std::vector<int> shape, std::vector<S> data) {
    if (count(shape) != data.size())
      throw ShapeError("tensor data length does not match shape");
    Tensor t;
    t.shape_ = std::move(shape);
    t.v_ = std::make_shared<std::vector<S>>(std::move(data));
    return t;
  }

  // Elementwise uniform fill in [lo, hi), drawn in flat order.
  static Tensor uniform(std::vector<int> shape, Rng& rng, double lo,
                        double hi) {
    Tensor t = zeros(std::move(shape));
    for (auto& e : *t.v_) e = S(rng.uniform(lo, hi));
    return t;
  }

  const std::vector<int>& shape() const { return shape_; }
  int rank() const { return int(shape_.size()); }
  int dim(int i) const { return shape_[std::size_t(i)]; }
  std::size_t size() const { return v_ ? v_->size() : 0; }
  bool empty() const { return !v_; }

  S* data() { return v_->data(); }
  const S* data() const { return v_->data(); }
  std::vector<S>& vec() { return *v_; }
  const std::vector<S>& vec() const { return *v_; }

  S& operator[](std::size_t i) { return (*v_)[i]; }
  const S& operator[](std::size_t i) const { return (*v_)[i]; }

  // Multi-index access for tests and glue code; hot loops index flat data.
  S& at(std::initializer_list<int> idx) {
    return (*v_)[flat_index(idx)];
  }
  const S& at(std::initializer_list<int> idx) const {
    return (*v_)[flat_index(idx)];
  }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  // Deep copy without any tape link.
  Tensor clone() const {
    Tensor t;
    t.shape_ = shape_;
    t.v_ = std::make_shared<std::vector<S>>(*v_);
    return t;
  }

  // Shallow copy without the tape link.
  Tensor detached() const {
    Tensor t;
    t.shape_ = shape_;
    t.v_ = v_;
    return t;
  }

  template <class To>
  Tensor<To> cast() const {
    Tensor<To> t = Tensor<To>::zeros(shape_);
    for (std::size_t i = 0; i < size(); ++i) t[i] = To((*v_)[i]);
    return t;
  }

  bool tracked() const { return tape_ != nullptr; }
  Tape<S>* tape() const { return tape_; }
  int node() const { return node_; }

  static std::size_t count(const std::vector<int>& shape) {
    std::size_t n = 1;
    for (int e : shape) {
      if (e <= 0) throw ShapeError("tensor extents must be positive");
      n *= std::size_t(e);
    }
    return n;
  }

  static std::string shape_string(const std::vector<int>& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
      if (i) s += ",";
      s += std::to_string(shape[i]);
    }
    return s + "]";
  }

 private:
  std::size_t flat_index(std::initializer_list<int> idx) const {
    if (int(idx.size()) != rank())
      throw ShapeError("index rank does not match tensor rank");
    std::size_t flat = 0;
    int d = 0;
    for (int i : idx) {
      flat = flat * std::size_t(shape_[std::size_t(d)]) + std::size_t(i);
      ++d;
    }
    return flat;
  }

  std::shared_ptr<std::vector<S>> v_;
  std::vector<int> shape_;
  Tape<S>* tape_ = nullptr;
  int node_ = -1;

  friend class Tape<S>;
};

}  // namespace ggpfn
