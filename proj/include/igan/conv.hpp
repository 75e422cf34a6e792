#pragma once

#include <vector>

#include "igan/ops.hpp"

// Convolutions via im2col + GEMM. Three ops form a closed family under
// differentiation:
//
//   conv2d            x:[B,Ci,H,W]  w:[Co,Ci,kh,kw] -> y:[B,Co,Ho,Wo]
//   conv2d_transpose  x:[B,Ci,H,W]  w:[Ci,Co,kh,kw] -> y:[B,Co,Ho,Wo]
//   conv2d_wgrad      accumulates a weight gradient from (inputs, out-grads)
//
// d(conv2d)/dx is a conv2d_transpose with the same weights, and vice versa;
// both weight gradients are conv2d_wgrad with arguments swapped. wgrad only
// ever appears as a terminal node of a backward graph, so its own vjp is
// intentionally unimplemented (second-order sweeps re-derive through the
// conv2d / conv2d_transpose nodes instead).

namespace igan {

namespace detail {

inline int64_t conv_out_dim(int64_t in, int64_t k, int64_t s, int64_t p,
                            const char* what) {
  const int64_t span = in + 2 * p - k;
  check(span >= 0 && span % s == 0, ErrorKind::numeric, what,
        ": invalid geometry in=", in, " k=", k, " stride=", s, " pad=", p);
  return span / s + 1;
}

// Gather one image [C,H,W] into columns [C*kh*kw, Ho*Wo] (row-major).
inline void im2col(const Real* x, int64_t C, int64_t H, int64_t W, int64_t kh,
                   int64_t kw, int64_t s, int64_t p, int64_t Ho, int64_t Wo,
                   Real* cols) {
  const int64_t P = Ho * Wo;
  for (int64_t c = 0; c < C; ++c)
    for (int64_t u = 0; u < kh; ++u)
      for (int64_t v = 0; v < kw; ++v) {
        Real* row = cols + ((c * kh + u) * kw + v) * P;
        for (int64_t oh = 0; oh < Ho; ++oh) {
          const int64_t ih = oh * s - p + u;
          if (ih < 0 || ih >= H) {
            for (int64_t ow = 0; ow < Wo; ++ow) row[oh * Wo + ow] = 0;
            continue;
          }
          const Real* src = x + (c * H + ih) * W;
          for (int64_t ow = 0; ow < Wo; ++ow) {
            const int64_t iw = ow * s - p + v;
            row[oh * Wo + ow] = (iw < 0 || iw >= W) ? Real(0) : src[iw];
          }
        }
      }
}

// Scatter-add columns [C*kh*kw, Ho*Wo] back into one image [C,H,W].
inline void col2im_add(const Real* cols, int64_t C, int64_t H, int64_t W,
                       int64_t kh, int64_t kw, int64_t s, int64_t p,
                       int64_t Ho, int64_t Wo, Real* y) {
  const int64_t P = Ho * Wo;
  for (int64_t c = 0; c < C; ++c)
    for (int64_t u = 0; u < kh; ++u)
      for (int64_t v = 0; v < kw; ++v) {
        const Real* row = cols + ((c * kh + u) * kw + v) * P;
        for (int64_t oh = 0; oh < Ho; ++oh) {
          const int64_t ih = oh * s - p + u;
          if (ih < 0 || ih >= H) continue;
          Real* dst = y + (c * H + ih) * W;
          for (int64_t ow = 0; ow < Wo; ++ow) {
            const int64_t iw = ow * s - p + v;
            if (iw >= 0 && iw < W) dst[iw] += row[oh * Wo + ow];
          }
        }
      }
}

}  // namespace detail

inline Var conv2d_transpose(const Var& x, const Var& w, int64_t stride,
                            int64_t pad);
inline Var conv2d_wgrad(const Var& x, const Var& dy, int64_t stride,
                        int64_t pad, int64_t kh, int64_t kw,
                        const Shape& w_shape);

inline Var conv2d(const Var& x, const Var& w, int64_t stride, int64_t pad) {
  const Tensor& xv = x.val();
  const Tensor& wv = w.val();
  check(xv.rank() == 4 && wv.rank() == 4, ErrorKind::numeric,
        "conv2d: need rank-4 input and weight");
  const int64_t B = xv.dim(0), Ci = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
  const int64_t Co = wv.dim(0), kh = wv.dim(2), kw = wv.dim(3);
  if (wv.dim(1) != Ci)
    fail(ErrorKind::numeric, "conv2d: channels ", shape_str(xv.shape()),
         " vs weight ", shape_str(wv.shape()));
  const int64_t Ho = detail::conv_out_dim(H, kh, stride, pad, "conv2d");
  const int64_t Wo = detail::conv_out_dim(W, kw, stride, pad, "conv2d");
  const int64_t K = Ci * kh * kw, P = Ho * Wo;

  Tensor y({B, Co, Ho, Wo});
  std::vector<Real> cols(static_cast<size_t>(K * P));
  detail::ECMap wmat(wv.data(), Co, K);
  for (int64_t b = 0; b < B; ++b) {
    detail::im2col(xv.data() + b * Ci * H * W, Ci, H, W, kh, kw, stride, pad,
                   Ho, Wo, cols.data());
    detail::EMap(y.data() + b * Co * P, Co, P).noalias() =
        wmat * detail::ECMap(cols.data(), K, P);
  }
  return Var::op(std::move(y), {x, w},
                 [stride, pad](const Var& self, size_t i, const Var& g) {
                   const Var& xp = parent(self, 0);
                   const Var& wp = parent(self, 1);
                   if (i == 0) return conv2d_transpose(g, wp, stride, pad);
                   return conv2d_wgrad(xp, g, stride, pad, wp.shape()[2],
                                       wp.shape()[3], wp.shape());
                 });
}

inline Var conv2d_transpose(const Var& x, const Var& w, int64_t stride,
                            int64_t pad) {
  const Tensor& xv = x.val();
  const Tensor& wv = w.val();
  check(xv.rank() == 4 && wv.rank() == 4, ErrorKind::numeric,
        "conv2d_transpose: need rank-4 input and weight");
  const int64_t B = xv.dim(0), Ci = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
  const int64_t Co = wv.dim(1), kh = wv.dim(2), kw = wv.dim(3);
  if (wv.dim(0) != Ci)
    fail(ErrorKind::numeric, "conv2d_transpose: channels ",
         shape_str(xv.shape()), " vs weight ", shape_str(wv.shape()));
  const int64_t Ho = (H - 1) * stride - 2 * pad + kh;
  const int64_t Wo = (W - 1) * stride - 2 * pad + kw;
  check(Ho > 0 && Wo > 0, ErrorKind::numeric,
        "conv2d_transpose: empty output");
  const int64_t K = Co * kh * kw, P = H * W;

  Tensor y({B, Co, Ho, Wo});
  std::vector<Real> cols(static_cast<size_t>(K * P));
  detail::ECMap wmat(wv.data(), Ci, K);
  for (int64_t b = 0; b < B; ++b) {
    detail::EMap(cols.data(), K, P).noalias() =
        wmat.transpose() * detail::ECMap(xv.data() + b * Ci * P, Ci, P);
    detail::col2im_add(cols.data(), Co, Ho, Wo, kh, kw, stride, pad, H, W,
                       y.data() + b * Co * Ho * Wo);
  }
  return Var::op(std::move(y), {x, w},
                 [stride, pad](const Var& self, size_t i, const Var& g) {
                   const Var& xp = parent(self, 0);
                   const Var& wp = parent(self, 1);
                   if (i == 0) return conv2d(g, wp, stride, pad);
                   // dw[ci,co,u,v]: same contraction with roles swapped.
                   return conv2d_wgrad(g, xp, stride, pad, wp.shape()[2],
                                       wp.shape()[3], wp.shape());
                 });
}

// Weight gradient: contracts activations x:[B,Cx,H,W] against output
// gradients dy:[B,Co,Ho,Wo] over the conv geometry, producing w_shape.
inline Var conv2d_wgrad(const Var& x, const Var& dy, int64_t stride,
                        int64_t pad, int64_t kh, int64_t kw,
                        const Shape& w_shape) {
  const Tensor& xv = x.val();
  const Tensor& dyv = dy.val();
  const int64_t B = xv.dim(0), Cx = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
  const int64_t Co = dyv.dim(1), Ho = dyv.dim(2), Wo = dyv.dim(3);
  check(dyv.dim(0) == B, ErrorKind::numeric, "conv2d_wgrad: batch mismatch");
  check(detail::conv_out_dim(H, kh, stride, pad, "conv2d_wgrad") == Ho &&
            detail::conv_out_dim(W, kw, stride, pad, "conv2d_wgrad") == Wo,
        ErrorKind::numeric, "conv2d_wgrad: geometry mismatch");
  const int64_t K = Cx * kh * kw, P = Ho * Wo;
  check(shape_numel(w_shape) == Co * K, ErrorKind::numeric,
        "conv2d_wgrad: weight shape mismatch");

  Tensor dw(w_shape);
  std::vector<Real> cols(static_cast<size_t>(K * P));
  detail::EMap acc(dw.data(), Co, K);
  for (int64_t b = 0; b < B; ++b) {
    detail::im2col(xv.data() + b * Cx * H * W, Cx, H, W, kh, kw, stride, pad,
                   Ho, Wo, cols.data());
    acc.noalias() += detail::ECMap(dyv.data() + b * Co * P, Co, P) *
                     detail::ECMap(cols.data(), K, P).transpose();
  }
  return Var::op(std::move(dw), {x, dy},
                 [](const Var&, size_t, const Var&) -> Var {
                   fail(ErrorKind::numeric,
                        "conv2d_wgrad has no vjp; it must stay terminal");
                 });
}

}  // namespace igan
