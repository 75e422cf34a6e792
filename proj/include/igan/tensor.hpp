#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <string>
#include <vector>

#include "igan/common.hpp"

namespace igan {

using Shape = std::vector<int64_t>;

inline int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

// Dense row-major tensor of Real. Deliberately minimal: shape + flat storage
// plus the few accessors the op kernels need. All layout-aware logic lives in
// the ops, not here.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape)
      : shape_(std::move(shape)), data_(shape_numel(shape_), Real(0)) {
    // A zero dim gives a legitimate empty tensor (e.g. an image pool with no
    // images yet); negative dims are always a bug.
    for (int64_t d : shape_)
      if (d < 0)
        fail(ErrorKind::numeric, "tensor dims must be non-negative, got ",
             shape_str(shape_));
  }

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }

  static Tensor full(Shape shape, Real value) {
    Tensor t(std::move(shape));
    std::fill(t.data_.begin(), t.data_.end(), value);
    return t;
  }

  static Tensor scalar(Real value) { return full({1}, value); }

  static Tensor from(Shape shape, std::vector<Real> values) {
    Tensor t;
    t.shape_ = std::move(shape);
    if (static_cast<int64_t>(values.size()) != shape_numel(t.shape_))
      fail(ErrorKind::numeric, "tensor data size ", values.size(),
           " does not match shape ", shape_str(t.shape_));
    t.data_ = std::move(values);
    return t;
  }

  const Shape& shape() const { return shape_; }
  int64_t rank() const { return static_cast<int64_t>(shape_.size()); }
  int64_t dim(int64_t i) const { return shape_[static_cast<size_t>(i)]; }
  int64_t numel() const { return static_cast<int64_t>(data_.size()); }
  bool defined() const { return !shape_.empty(); }

  Real* data() { return data_.data(); }
  const Real* data() const { return data_.data(); }
  Real& at(int64_t i) { return data_[static_cast<size_t>(i)]; }
  Real at(int64_t i) const { return data_[static_cast<size_t>(i)]; }

  // Flat index for a [N,C,H,W] tensor.
  int64_t idx4(int64_t n, int64_t c, int64_t h, int64_t w) const {
    return ((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w;
  }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  bool all_finite() const {
    for (Real v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

 private:
  Shape shape_;
  std::vector<Real> data_;
};

inline void check_same_shape(const Tensor& a, const Tensor& b,
                             const char* what) {
  if (!a.same_shape(b))
    fail(ErrorKind::numeric, what, ": shape mismatch ", shape_str(a.shape()),
         " vs ", shape_str(b.shape()));
}

}  // namespace igan
