#pragma once

#include <Eigen/Core>
#include <cmath>

#include "igan/autodiff.hpp"
#include "igan/common.hpp"
#include "igan/tensor.hpp"

// Differentiable primitives. Forward kernels run eagerly on tensors; each op
// registers a vjp that *emits further ops*, so any gradient is itself a
// differentiable graph. The op set is deliberately closed: every vjp below is
// built from ops in this file (or conv.hpp), which is what guarantees
// second-order gradients -- needed because the gradient-penalty term is
// differentiated once w.r.t. inputs and then again w.r.t. parameters.

namespace igan {

inline Var constant(Tensor t) { return Var::leaf(std::move(t), false); }
inline Var parameter(Tensor t) { return Var::leaf(std::move(t), true); }

inline const Var& parent(const Var& self, size_t i) {
  return self.node()->parents[i];
}

// ---- elementwise binary -----------------------------------------------

inline Var add(const Var& a, const Var& b) {
  check_same_shape(a.val(), b.val(), "add");
  Tensor y = a.val();
  for (int64_t i = 0; i < y.numel(); ++i) y.at(i) += b.val().at(i);
  return Var::op(std::move(y), {a, b},
                 [](const Var&, size_t, const Var& g) { return g; });
}

inline Var neg(const Var& a);

inline Var sub(const Var& a, const Var& b) {
  check_same_shape(a.val(), b.val(), "sub");
  Tensor y = a.val();
  for (int64_t i = 0; i < y.numel(); ++i) y.at(i) -= b.val().at(i);
  return Var::op(std::move(y), {a, b}, [](const Var&, size_t i, const Var& g) {
    return i == 0 ? g : neg(g);
  });
}

inline Var mul(const Var& a, const Var& b) {
  check_same_shape(a.val(), b.val(), "mul");
  Tensor y = a.val();
  for (int64_t i = 0; i < y.numel(); ++i) y.at(i) *= b.val().at(i);
  return Var::op(std::move(y), {a, b}, [](const Var& self, size_t i, const Var& g) {
    return mul(g, parent(self, i == 0 ? 1 : 0));
  });
}

// ---- elementwise unary ------------------------------------------------

namespace detail {
template <class F>
Tensor map_tensor(const Tensor& x, F f) {
  Tensor y = x;
  for (int64_t i = 0; i < y.numel(); ++i) y.at(i) = f(y.at(i));
  return y;
}
}  // namespace detail

inline Var neg(const Var& a) {
  return Var::op(detail::map_tensor(a.val(), [](Real v) { return -v; }), {a},
                 [](const Var&, size_t, const Var& g) { return neg(g); });
}

inline Var scale(const Var& a, Real c) {
  return Var::op(detail::map_tensor(a.val(), [c](Real v) { return c * v; }),
                 {a},
                 [c](const Var&, size_t, const Var& g) { return scale(g, c); });
}

inline Var add_scalar(const Var& a, Real c) {
  return Var::op(detail::map_tensor(a.val(), [c](Real v) { return v + c; }),
                 {a}, [](const Var&, size_t, const Var& g) { return g; });
}

inline Var recip(const Var& a) {
  return Var::op(
      detail::map_tensor(a.val(), [](Real v) { return Real(1) / v; }), {a},
      [](const Var& self, size_t, const Var& g) {
        return neg(mul(g, mul(self, self)));
      });
}

inline Var sqrt_(const Var& a) {
  return Var::op(detail::map_tensor(a.val(), [](Real v) { return std::sqrt(v); }),
                 {a}, [](const Var& self, size_t, const Var& g) {
                   return mul(g, scale(recip(self), Real(0.5)));
                 });
}

inline Var log_(const Var& a) {
  return Var::op(detail::map_tensor(a.val(), [](Real v) { return std::log(v); }),
                 {a}, [](const Var& self, size_t, const Var& g) {
                   return mul(g, recip(parent(self, 0)));
                 });
}

inline Var exp_(const Var& a) {
  return Var::op(detail::map_tensor(a.val(), [](Real v) { return std::exp(v); }),
                 {a}, [](const Var& self, size_t, const Var& g) {
                   return mul(g, self);
                 });
}

inline Var tanh_(const Var& a) {
  return Var::op(detail::map_tensor(a.val(), [](Real v) { return std::tanh(v); }),
                 {a}, [](const Var& self, size_t, const Var& g) {
                   // d tanh = 1 - y^2
                   return mul(g, add_scalar(neg(mul(self, self)), Real(1)));
                 });
}

inline Var sigmoid_(const Var& a) {
  auto sig = [](Real v) {
    return v >= 0 ? Real(1) / (Real(1) + std::exp(-v))
                  : std::exp(v) / (Real(1) + std::exp(v));
  };
  return Var::op(detail::map_tensor(a.val(), sig), {a},
                 [](const Var& self, size_t, const Var& g) {
                   // d sigma = y (1 - y)
                   return mul(g, mul(self, add_scalar(neg(self), Real(1))));
                 });
}

// log(1 + e^x), computed stably; its derivative is sigmoid(x).
inline Var softplus(const Var& a) {
  auto sp = [](Real v) {
    return std::max(v, Real(0)) + std::log1p(std::exp(-std::abs(v)));
  };
  return Var::op(detail::map_tensor(a.val(), sp), {a},
                 [](const Var& self, size_t, const Var& g) {
                   return mul(g, sigmoid_(parent(self, 0)));
                 });
}

inline Var abs_(const Var& a) {
  Tensor sign(a.val().shape());
  for (int64_t i = 0; i < sign.numel(); ++i)
    sign.at(i) = a.val().at(i) >= 0 ? Real(1) : Real(-1);
  Var sign_c = constant(std::move(sign));
  return Var::op(
      detail::map_tensor(a.val(), [](Real v) { return std::abs(v); }), {a},
      [sign_c](const Var&, size_t, const Var& g) { return mul(g, sign_c); });
}

inline Var leaky_relu(const Var& a, Real slope) {
  Tensor mask(a.val().shape());
  Tensor y = a.val();
  Real* mp = mask.data();
  Real* yp = y.data();
  for (int64_t i = 0; i < y.numel(); ++i) {
    const Real m = yp[i] > 0 ? Real(1) : slope;
    mp[i] = m;
    yp[i] *= m;
  }
  Var mask_c = constant(std::move(mask));
  return Var::op(std::move(y), {a},
                 [mask_c](const Var&, size_t, const Var& g) {
                   return mul(g, mask_c);
                 });
}

inline Var relu(const Var& a) { return leaky_relu(a, Real(0)); }

// ---- shape ops ---------------------------------------------------------

inline Var reshape(const Var& a, Shape shape) {
  if (shape_numel(shape) != a.numel())
    fail(ErrorKind::numeric, "reshape: cannot view ", shape_str(a.shape()),
         " as ", shape_str(shape));
  Tensor y = Tensor::from(std::move(shape),
                          std::vector<Real>(a.val().data(),
                                            a.val().data() + a.numel()));
  return Var::op(std::move(y), {a}, [](const Var& self, size_t, const Var& g) {
    return reshape(g, parent(self, 0).shape());
  });
}

namespace detail {
// Strides of a shape; broadcast dims (size 1 vs target) get stride 0.
inline void bcast_strides(const Shape& src, const Shape& dst, int64_t* stride) {
  if (src.size() != dst.size())
    fail(ErrorKind::numeric, "broadcast/reduce: rank mismatch ",
         shape_str(src), " vs ", shape_str(dst));
  int64_t s = 1;
  for (int64_t i = static_cast<int64_t>(src.size()) - 1; i >= 0; --i) {
    const int64_t sd = src[static_cast<size_t>(i)];
    const int64_t dd = dst[static_cast<size_t>(i)];
    if (sd != dd && sd != 1)
      fail(ErrorKind::numeric, "broadcast/reduce: incompatible dim ", i,
           " in ", shape_str(src), " vs ", shape_str(dst));
    stride[i] = (sd == 1 && dd != 1) ? 0 : s;
    s *= sd;
  }
}
}  // namespace detail

inline Var reduce_sum_to(const Var& a, Shape shape);

// Expand size-1 axes of `a` to `shape` (ranks must match). The loop walks the
// output in rows of the last axis: one fill (broadcast last dim) or one copy
// (dense last dim) per row, with the source offset advanced odometer-style
// over the leading dims.
inline Var broadcast_to(const Var& a, Shape shape) {
  int64_t stride[8] = {};
  detail::bcast_strides(a.shape(), shape, stride);
  const int64_t rank = static_cast<int64_t>(shape.size());
  Tensor y(shape);
  const Real* src = a.val().data();
  Real* dst = y.data();
  if (a.numel() == y.numel() || y.numel() == 0) {
    std::copy(src, src + y.numel(), dst);
  } else if (a.numel() == 1) {
    std::fill(dst, dst + y.numel(), src[0]);
  } else {
    const int64_t nlast = shape[static_cast<size_t>(rank - 1)];
    const int64_t slast = stride[rank - 1];
    const int64_t rows = y.numel() / nlast;
    int64_t ix[8] = {};
    for (int64_t r = 0; r < rows; ++r) {
      int64_t si = 0;
      for (int64_t d = 0; d < rank - 1; ++d) si += ix[d] * stride[d];
      if (slast == 0)
        std::fill(dst, dst + nlast, src[si]);
      else
        std::copy(src + si, src + si + nlast, dst);
      dst += nlast;
      for (int64_t d = rank - 2; d >= 0; --d) {
        if (++ix[d] < shape[static_cast<size_t>(d)]) break;
        ix[d] = 0;
      }
    }
  }
  return Var::op(std::move(y), {a}, [](const Var& self, size_t, const Var& g) {
    return reduce_sum_to(g, parent(self, 0).shape());
  });
}

// Sum `a` down to `shape` (same rank; reduced axes have target size 1).
// Rows of the last axis accumulate into either one target cell or a dense
// target row; the element order matches a plain linear walk of `a`, so
// results are bit-identical to the naive loop.
inline Var reduce_sum_to(const Var& a, Shape shape) {
  int64_t stride[8] = {};
  detail::bcast_strides(shape, a.shape(), stride);  // strides into the target
  const int64_t rank = static_cast<int64_t>(shape.size());
  Tensor y(shape);
  const Shape& full = a.shape();
  const Real* src = a.val().data();
  Real* dst = y.data();
  if (a.numel() > 0) {
    const int64_t nlast = full[static_cast<size_t>(rank - 1)];
    const int64_t slast = stride[rank - 1];
    const int64_t rows = a.numel() / nlast;
    int64_t ix[8] = {};
    for (int64_t r = 0; r < rows; ++r) {
      int64_t ti = 0;
      for (int64_t d = 0; d < rank - 1; ++d) ti += ix[d] * stride[d];
      if (slast == 0) {
        Real acc = dst[ti];
        for (int64_t i = 0; i < nlast; ++i) acc += src[i];
        dst[ti] = acc;
      } else {
        for (int64_t i = 0; i < nlast; ++i) dst[ti + i] += src[i];
      }
      src += nlast;
      for (int64_t d = rank - 2; d >= 0; --d) {
        if (++ix[d] < full[static_cast<size_t>(d)]) break;
        ix[d] = 0;
      }
    }
  }
  return Var::op(std::move(y), {a}, [](const Var& self, size_t, const Var& g) {
    return broadcast_to(g, parent(self, 0).shape());
  });
}

namespace detail {
// Applies y[i] op= b[bcast(i)] in place, walking rows of the last axis so the
// inner loop is either a constant-operand sweep or a dense one.
template <class F>
void bcast_inplace(Tensor& y, const Shape& shape, const Tensor& b, F f) {
  int64_t stride[8] = {};
  bcast_strides(b.shape(), shape, stride);
  const int64_t rank = static_cast<int64_t>(shape.size());
  const Real* bp = b.data();
  Real* yp = y.data();
  if (b.numel() == 1) {
    const Real c = bp[0];
    for (int64_t i = 0; i < y.numel(); ++i) f(yp[i], c);
  } else if (y.numel() > 0) {
    const int64_t nlast = shape[static_cast<size_t>(rank - 1)];
    const int64_t slast = stride[rank - 1];
    const int64_t rows = y.numel() / nlast;
    int64_t ix[8] = {};
    for (int64_t r = 0; r < rows; ++r) {
      int64_t si = 0;
      for (int64_t d = 0; d < rank - 1; ++d) si += ix[d] * stride[d];
      if (slast == 0) {
        const Real c = bp[si];
        for (int64_t i = 0; i < nlast; ++i) f(yp[i], c);
      } else {
        for (int64_t i = 0; i < nlast; ++i) f(yp[i], bp[si + i]);
      }
      yp += nlast;
      for (int64_t d = rank - 2; d >= 0; --d) {
        if (++ix[d] < shape[static_cast<size_t>(d)]) break;
        ix[d] = 0;
      }
    }
  }
}
}  // namespace detail

// Fused broadcast-then-op: y = a (op) broadcast_to(b, a.shape) without
// materializing the broadcast. b must have size-1 axes wherever it differs
// from a. The vjps stay inside the op family, so second derivatives work.
inline Var mul_bcast(const Var& a, const Var& b) {
  Tensor y = a.val();
  detail::bcast_inplace(y, a.shape(), b.val(),
                        [](Real& v, Real c) { v *= c; });
  return Var::op(std::move(y), {a, b},
                 [](const Var& self, size_t i, const Var& g) {
                   if (i == 0) return mul_bcast(g, parent(self, 1));
                   return reduce_sum_to(mul(g, parent(self, 0)),
                                        parent(self, 1).shape());
                 });
}

inline Var add_bcast(const Var& a, const Var& b) {
  Tensor y = a.val();
  detail::bcast_inplace(y, a.shape(), b.val(),
                        [](Real& v, Real c) { v += c; });
  return Var::op(std::move(y), {a, b},
                 [](const Var& self, size_t i, const Var& g) {
                   if (i == 0) return g;
                   return reduce_sum_to(g, parent(self, 1).shape());
                 });
}

inline Var sub_bcast(const Var& a, const Var& b) {
  Tensor y = a.val();
  detail::bcast_inplace(y, a.shape(), b.val(),
                        [](Real& v, Real c) { v -= c; });
  return Var::op(std::move(y), {a, b},
                 [](const Var& self, size_t i, const Var& g) {
                   if (i == 0) return g;
                   return neg(reduce_sum_to(g, parent(self, 1).shape()));
                 });
}

inline Var sum_all(const Var& a) {
  Real s = 0;
  for (int64_t i = 0; i < a.numel(); ++i) s += a.val().at(i);
  return Var::op(Tensor::scalar(s), {a},
                 [](const Var& self, size_t, const Var& g) {
                   const Shape& full = parent(self, 0).shape();
                   Shape ones(full.size(), 1);
                   return broadcast_to(reshape(g, ones), full);
                 });
}

inline Var mean_all(const Var& a) {
  return scale(sum_all(a), Real(1) / static_cast<Real>(a.numel()));
}

// ---- linear algebra ----------------------------------------------------

namespace detail {
using EMat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using EMap = Eigen::Map<EMat>;
using ECMap = Eigen::Map<const EMat>;
}  // namespace detail

inline Var transpose2d(const Var& a) {
  check(a.val().rank() == 2, ErrorKind::numeric, "transpose2d: need rank 2");
  const int64_t m = a.val().dim(0), n = a.val().dim(1);
  Tensor y({n, m});
  detail::EMap(y.data(), n, m) = detail::ECMap(a.val().data(), m, n).transpose();
  return Var::op(std::move(y), {a}, [](const Var&, size_t, const Var& g) {
    return transpose2d(g);
  });
}

inline Var matmul(const Var& a, const Var& b) {
  check(a.val().rank() == 2 && b.val().rank() == 2, ErrorKind::numeric,
        "matmul: need rank-2 operands");
  const int64_t m = a.val().dim(0), k = a.val().dim(1), n = b.val().dim(1);
  if (b.val().dim(0) != k)
    fail(ErrorKind::numeric, "matmul: inner dims ", shape_str(a.shape()),
         " x ", shape_str(b.shape()));
  Tensor y({m, n});
  detail::EMap(y.data(), m, n).noalias() =
      detail::ECMap(a.val().data(), m, k) * detail::ECMap(b.val().data(), k, n);
  return Var::op(std::move(y), {a, b},
                 [](const Var& self, size_t i, const Var& g) {
                   if (i == 0) return matmul(g, transpose2d(parent(self, 1)));
                   return matmul(transpose2d(parent(self, 0)), g);
                 });
}

// ---- operator sugar ----------------------------------------------------

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator-(const Var& a) { return neg(a); }
inline Var operator*(const Var& a, const Var& b) { return mul(a, b); }
inline Var operator*(Real c, const Var& a) { return scale(a, c); }

}  // namespace igan
