#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <optional>
#include <vector>

#include "ggpfn/parallel.hpp"
#include "ggpfn/tape.hpp"
#include "ggpfn/tensor.hpp"

// The operator set of the network: plain convolutions, depth-valid 3D
// convolutions, strided transposed convolutions, pooling, pointwise
// activations, cropping/concatenation, bilinear map sampling and binary cross
// entropy. Every op runs with or without a tape; when any input is tracked
// the op appends a pull closure that routes gradients back to its inputs.

namespace ggpfn {

namespace detail {

inline void check_rank(int rank, int want, const char* what) {
  if (rank != want)
    throw ShapeError(std::string(what) + ": expected rank " +
                     std::to_string(want) + ", got " + std::to_string(rank));
}

// Valid output range [ox0, ox1) so that ox*stride + d - pad stays in [0, n).
inline void valid_range(int n, int out_n, int stride, int d, int pad, int& ox0,
                        int& ox1) {
  const int lo = pad - d;  // ox*stride >= lo
  ox0 = lo <= 0 ? 0 : (lo + stride - 1) / stride;
  const int hi = n - 1 - d + pad;  // ox*stride <= hi
  ox1 = hi < 0 ? 0 : std::min(out_n, hi / stride + 1);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// conv2d: input [C,H,W], kernel [K,C,kh,kw], bias [K] -> [K,OH,OW].
// H/W are zero-padded; pad < 0 selects same-padding for odd kernels.
// ---------------------------------------------------------------------------

template <class S>
Tensor<S> conv2d(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& b,
                 int stride = 1, int pad = -1) {
  detail::check_rank(x.rank(), 3, "conv2d input");
  detail::check_rank(w.rank(), 4, "conv2d kernel");
  const int C = x.dim(0), H = x.dim(1), W = x.dim(2);
  const int K = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  if (w.dim(1) != C)
    throw ShapeError("conv2d: kernel expects " + std::to_string(w.dim(1)) +
                     " input channels, input has " + std::to_string(C));
  if (int(b.size()) != K) throw ShapeError("conv2d: bias length != K");
  if (pad < 0) pad = (kh - 1) / 2;
  const int OH = (H + 2 * pad - kh) / stride + 1;
  const int OW = (W + 2 * pad - kw) / stride + 1;
  if (OH <= 0 || OW <= 0) throw ShapeError("conv2d: output would be empty");

  Tensor<S> y = Tensor<S>::zeros({K, OH, OW});
  {
    const S* xd = x.data();
    const S* wd = w.data();
    const S* bd = b.data();
    S* yd = y.data();
    const std::size_t work = std::size_t(C) * kh * kw * OH * OW;
    parallel_for(K, work, [&](int k_begin, int k_end) {
      for (int k = k_begin; k < k_end; ++k) {
        S* yk = yd + std::size_t(k) * OH * OW;
        std::fill(yk, yk + std::size_t(OH) * OW, bd[k]);
        for (int c = 0; c < C; ++c) {
          const S* xc = xd + std::size_t(c) * H * W;
          const S* wkc = wd + (std::size_t(k) * C + c) * kh * kw;
          for (int dy = 0; dy < kh; ++dy) {
            for (int dx = 0; dx < kw; ++dx) {
              const S wv = wkc[dy * kw + dx];
              int ox0, ox1;
              detail::valid_range(W, OW, stride, dx, pad, ox0, ox1);
              for (int oy = 0; oy < OH; ++oy) {
                const int iy = oy * stride + dy - pad;
                if (iy < 0 || iy >= H) continue;
                const S* xrow = xc + std::size_t(iy) * W + (dx - pad);
                S* yrow = yk + std::size_t(oy) * OW;
                for (int ox = ox0; ox < ox1; ++ox)
                  yrow[ox] += wv * xrow[ox * stride];
              }
            }
          }
        }
      }
    });
  }

  Tape<S>* tape = common_tape<S>({&x, &w, &b});
  if (!tape) return y;
  tape->adopt(y);
  const int xn = x.node(), wn = w.node(), bn = b.node(), yn = y.node();
  Tensor<S> xc = x.detached(), wc = w.detached();
  tape->record([tape, xc, wc, xn, wn, bn, yn, C, H, W, K, kh, kw, stride, pad,
                OH, OW] {
    const std::vector<S>& gy = tape->g(yn);
    if (xn >= 0) {
      std::vector<S>& gx = tape->g(xn);
      const S* wd = wc.data();
      S* gxd = gx.data();
      const std::size_t work = std::size_t(K) * kh * kw * OH * OW;
      parallel_for(C, work, [&](int c_begin, int c_end) {
        for (int c = c_begin; c < c_end; ++c) {
          S* gxc = gxd + std::size_t(c) * H * W;
          for (int k = 0; k < K; ++k) {
            const S* gyk = gy.data() + std::size_t(k) * OH * OW;
            const S* wkc = wd + (std::size_t(k) * C + c) * kh * kw;
            for (int dy = 0; dy < kh; ++dy) {
              for (int dx = 0; dx < kw; ++dx) {
                const S wv = wkc[dy * kw + dx];
                int ox0, ox1;
                detail::valid_range(W, OW, stride, dx, pad, ox0, ox1);
                for (int oy = 0; oy < OH; ++oy) {
                  const int iy = oy * stride + dy - pad;
                  if (iy < 0 || iy >= H) continue;
                  S* gxrow = gxc + std::size_t(iy) * W + (dx - pad);
                  const S* gyrow = gyk + std::size_t(oy) * OW;
                  for (int ox = ox0; ox < ox1; ++ox)
                    gxrow[ox * stride] += wv * gyrow[ox];
                }
              }
            }
          }
        }
      });
    }
    if (wn >= 0) {
      std::vector<S>& gw = tape->g(wn);
      const S* xd = xc.data();
      S* gwd = gw.data();
      const std::size_t work = std::size_t(C) * kh * kw * OH * OW;
      parallel_for(K, work, [&](int k_begin, int k_end) {
        for (int k = k_begin; k < k_end; ++k) {
          const S* gyk = gy.data() + std::size_t(k) * OH * OW;
          for (int c = 0; c < C; ++c) {
            const S* xcd = xd + std::size_t(c) * H * W;
            S* gwkc = gwd + (std::size_t(k) * C + c) * kh * kw;
            for (int dy = 0; dy < kh; ++dy) {
              for (int dx = 0; dx < kw; ++dx) {
                S acc = S(0);
                int ox0, ox1;
                detail::valid_range(W, OW, stride, dx, pad, ox0, ox1);
                for (int oy = 0; oy < OH; ++oy) {
                  const int iy = oy * stride + dy - pad;
                  if (iy < 0 || iy >= H) continue;
                  const S* xrow = xcd + std::size_t(iy) * W + (dx - pad);
                  const S* gyrow = gyk + std::size_t(oy) * OW;
                  for (int ox = ox0; ox < ox1; ++ox)
                    acc += xrow[ox * stride] * gyrow[ox];
                }
                gwkc[dy * kw + dx] += acc;
              }
            }
          }
        }
      });
    }
    if (bn >= 0) {
      std::vector<S>& gb = tape->g(bn);
      for (int k = 0; k < K; ++k) {
        const S* gyk = gy.data() + std::size_t(k) * OH * OW;
        S acc = S(0);
        for (std::size_t i = 0; i < std::size_t(OH) * OW; ++i) acc += gyk[i];
        gb[std::size_t(k)] += acc;
      }
    }
  });
  return y;
}

// ---------------------------------------------------------------------------
// conv3d_dvalid: input [C,D,H,W], kernel [K,C,kd,kh,kw], bias [K]
//   -> [K, D-kd+1, H, W].
// Depth is valid (no padding, shrinks); H/W are zero same-padded. The outmost
// slices are never produced, which is what progressively fuses a slab toward
// its central slice.
// ---------------------------------------------------------------------------

template <class S>
Tensor<S> conv3d_dvalid(const Tensor<S>& x, const Tensor<S>& w,
                        const Tensor<S>& b) {
  detail::check_rank(x.rank(), 4, "conv3d_dvalid input");
  detail::check_rank(w.rank(), 5, "conv3d_dvalid kernel");
  const int C = x.dim(0), D = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int K = w.dim(0), kd = w.dim(2), kh = w.dim(3), kw = w.dim(4);
  if (w.dim(1) != C)
    throw ShapeError("conv3d_dvalid: kernel expects " +
                     std::to_string(w.dim(1)) + " input channels, input has " +
                     std::to_string(C));
  if (int(b.size()) != K) throw ShapeError("conv3d_dvalid: bias length != K");
  if (D < kd)
    throw ShapeError("conv3d_dvalid: depth underflow, input depth " +
                     std::to_string(D) + " < kernel depth " +
                     std::to_string(kd));
  const int pad = (kh - 1) / 2;
  const int OD = D - kd + 1;

  Tensor<S> y = Tensor<S>::zeros({K, OD, H, W});
  {
    const S* xd = x.data();
    const S* wd = w.data();
    const S* bd = b.data();
    S* yd = y.data();
    const std::size_t work = std::size_t(C) * kd * kh * kw * OD * H * W;
    parallel_for(K, work, [&](int k_begin, int k_end) {
      for (int k = k_begin; k < k_end; ++k) {
        S* yk = yd + std::size_t(k) * OD * H * W;
        std::fill(yk, yk + std::size_t(OD) * H * W, bd[k]);
        for (int c = 0; c < C; ++c) {
          const S* xc = xd + std::size_t(c) * D * H * W;
          const S* wkc = wd + (std::size_t(k) * C + c) * kd * kh * kw;
          for (int dz = 0; dz < kd; ++dz) {
            for (int dy = 0; dy < kh; ++dy) {
              for (int dx = 0; dx < kw; ++dx) {
                const S wv = wkc[(dz * kh + dy) * kw + dx];
                int ox0, ox1;
                detail::valid_range(W, W, 1, dx, pad, ox0, ox1);
                for (int od = 0; od < OD; ++od) {
                  const S* xslab = xc + std::size_t(od + dz) * H * W;
                  S* yslab = yk + std::size_t(od) * H * W;
                  for (int oy = 0; oy < H; ++oy) {
                    const int iy = oy + dy - pad;
                    if (iy < 0 || iy >= H) continue;
                    const S* xrow = xslab + std::size_t(iy) * W + (dx - pad);
                    S* yrow = yslab + std::size_t(oy) * W;
                    for (int ox = ox0; ox < ox1; ++ox) yrow[ox] += wv * xrow[ox];
                  }
                }
              }
            }
          }
        }
      }
    });
  }

  Tape<S>* tape = common_tape<S>({&x, &w, &b});
  if (!tape) return y;
  tape->adopt(y);
  const int xn = x.node(), wn = w.node(), bn = b.node(), yn = y.node();
  Tensor<S> xc = x.detached(), wc = w.detached();
  tape->record([tape, xc, wc, xn, wn, bn, yn, C, D, H, W, K, kd, kh, kw, pad,
                OD] {
    const std::vector<S>& gy = tape->g(yn);
    if (xn >= 0) {
      std::vector<S>& gx = tape->g(xn);
      const S* wd = wc.data();
      S* gxd = gx.data();
      const std::size_t work = std::size_t(K) * kd * kh * kw * OD * H * W;
      parallel_for(C, work, [&](int c_begin, int c_end) {
        for (int c = c_begin; c < c_end; ++c) {
          S* gxc = gxd + std::size_t(c) * D * H * W;
          for (int k = 0; k < K; ++k) {
            const S* gyk = gy.data() + std::size_t(k) * OD * H * W;
            const S* wkc = wd + (std::size_t(k) * C + c) * kd * kh * kw;
            for (int dz = 0; dz < kd; ++dz) {
              for (int dy = 0; dy < kh; ++dy) {
                for (int dx = 0; dx < kw; ++dx) {
                  const S wv = wkc[(dz * kh + dy) * kw + dx];
                  int ox0, ox1;
                  detail::valid_range(W, W, 1, dx, pad, ox0, ox1);
                  for (int od = 0; od < OD; ++od) {
                    S* gxslab = gxc + std::size_t(od + dz) * H * W;
                    const S* gyslab = gyk + std::size_t(od) * H * W;
                    for (int oy = 0; oy < H; ++oy) {
                      const int iy = oy + dy - pad;
                      if (iy < 0 || iy >= H) continue;
                      S* gxrow = gxslab + std::size_t(iy) * W + (dx - pad);
                      const S* gyrow = gyslab + std::size_t(oy) * W;
                      for (int ox = ox0; ox < ox1; ++ox)
                        gxrow[ox] += wv * gyrow[ox];
                    }
                  }
                }
              }
            }
          }
        }
      });
    }
    if (wn >= 0) {
      std::vector<S>& gw = tape->g(wn);
      const S* xd = xc.data();
      S* gwd = gw.data();
      const std::size_t work = std::size_t(C) * kd * kh * kw * OD * H * W;
      parallel_for(K, work, [&](int k_begin, int k_end) {
        for (int k = k_begin; k < k_end; ++k) {
          const S* gyk = gy.data() + std::size_t(k) * OD * H * W;
          for (int c = 0; c < C; ++c) {
            const S* xcd = xd + std::size_t(c) * D * H * W;
            S* gwkc = gwd + (std::size_t(k) * C + c) * kd * kh * kw;
            for (int dz = 0; dz < kd; ++dz) {
              for (int dy = 0; dy < kh; ++dy) {
                for (int dx = 0; dx < kw; ++dx) {
                  S acc = S(0);
                  int ox0, ox1;
                  detail::valid_range(W, W, 1, dx, pad, ox0, ox1);
                  for (int od = 0; od < OD; ++od) {
                    const S* xslab = xcd + std::size_t(od + dz) * H * W;
                    const S* gyslab = gyk + std::size_t(od) * H * W;
                    for (int oy = 0; oy < H; ++oy) {
                      const int iy = oy + dy - pad;
                      if (iy < 0 || iy >= H) continue;
                      const S* xrow = xslab + std::size_t(iy) * W + (dx - pad);
                      const S* gyrow = gyslab + std::size_t(oy) * W;
                      for (int ox = ox0; ox < ox1; ++ox)
                        acc += xrow[ox] * gyrow[ox];
                    }
                  }
                  gwkc[(dz * kh + dy) * kw + dx] += acc;
                }
              }
            }
          }
        }
      });
    }
    if (bn >= 0) {
      std::vector<S>& gb = tape->g(bn);
      for (int k = 0; k < K; ++k) {
        const S* gyk = gy.data() + std::size_t(k) * OD * H * W;
        S acc = S(0);
        for (std::size_t i = 0; i < std::size_t(OD) * H * W; ++i) acc += gyk[i];
        gb[std::size_t(k)] += acc;
      }
    }
  });
  return y;
}

// ---------------------------------------------------------------------------
// transposed_conv2d: input [C,H,W], kernel [C,K,2,2], bias [K] -> [K,2H,2W].
// Fixed 2x2 kernel with stride 2, so every output pixel is written by exactly
// one input tap and the spatial extents double with no overlap artifacts.
// ---------------------------------------------------------------------------

template <class S>
Tensor<S> transposed_conv2d(const Tensor<S>& x, const Tensor<S>& w,
                            const Tensor<S>& b) {
  detail::check_rank(x.rank(), 3, "transposed_conv2d input");
  detail::check_rank(w.rank(), 4, "transposed_conv2d kernel");
  const int C = x.dim(0), H = x.dim(1), W = x.dim(2);
  const int K = w.dim(1);
  if (w.dim(0) != C)
    throw ShapeError("transposed_conv2d: kernel expects " +
                     std::to_string(w.dim(0)) + " input channels, input has " +
                     std::to_string(C));
  if (w.dim(2) != 2 || w.dim(3) != 2)
    throw ShapeError("transposed_conv2d: kernel must be 2x2");
  if (int(b.size()) != K)
    throw ShapeError("transposed_conv2d: bias length != K");
  const int OH = 2 * H, OW = 2 * W;

  Tensor<S> y = Tensor<S>::zeros({K, OH, OW});
  {
    const S* xd = x.data();
    const S* wd = w.data();
    const S* bd = b.data();
    S* yd = y.data();
    const std::size_t work = std::size_t(C) * 4 * H * W;
    parallel_for(K, work, [&](int k_begin, int k_end) {
      for (int k = k_begin; k < k_end; ++k) {
        S* yk = yd + std::size_t(k) * OH * OW;
        std::fill(yk, yk + std::size_t(OH) * OW, bd[k]);
        for (int c = 0; c < C; ++c) {
          const S* xc = xd + std::size_t(c) * H * W;
          const S* wck = wd + (std::size_t(c) * K + k) * 4;
          for (int dy = 0; dy < 2; ++dy) {
            for (int dx = 0; dx < 2; ++dx) {
              const S wv = wck[dy * 2 + dx];
              for (int iy = 0; iy < H; ++iy) {
                const S* xrow = xc + std::size_t(iy) * W;
                S* yrow = yk + std::size_t(2 * iy + dy) * OW + dx;
                for (int ix = 0; ix < W; ++ix) yrow[2 * ix] += wv * xrow[ix];
              }
            }
          }
        }
      }
    });
  }

  Tape<S>* tape = common_tape<S>({&x, &w, &b});
  if (!tape) return y;
  tape->adopt(y);
  const int xn = x.node(), wn = w.node(), bn = b.node(), yn = y.node();
  Tensor<S> xc = x.detached(), wc = w.detached();
  tape->record([tape, xc, wc, xn, wn, bn, yn, C, H, W, K, OH, OW] {
    const std::vector<S>& gy = tape->g(yn);
    if (xn >= 0) {
      std::vector<S>& gx = tape->g(xn);
      const S* wd = wc.data();
      for (int c = 0; c < C; ++c) {
        S* gxc = gx.data() + std::size_t(c) * H * W;
        for (int k = 0; k < K; ++k) {
          const S* gyk = gy.data() + std::size_t(k) * OH * OW;
          const S* wck = wd + (std::size_t(c) * K + k) * 4;
          for (int dy = 0; dy < 2; ++dy) {
            for (int dx = 0; dx < 2; ++dx) {
              const S wv = wck[dy * 2 + dx];
              for (int iy = 0; iy < H; ++iy) {
                S* gxrow = gxc + std::size_t(iy) * W;
                const S* gyrow = gyk + std::size_t(2 * iy + dy) * OW + dx;
                for (int ix = 0; ix < W; ++ix) gxrow[ix] += wv * gyrow[2 * ix];
              }
            }
          }
        }
      }
    }
    if (wn >= 0) {
      std::vector<S>& gw = tape->g(wn);
      const S* xd = xc.data();
      for (int c = 0; c < C; ++c) {
        const S* xcd = xd + std::size_t(c) * H * W;
        for (int k = 0; k < K; ++k) {
          const S* gyk = gy.data() + std::size_t(k) * OH * OW;
          S* gwck = gw.data() + (std::size_t(c) * K + k) * 4;
          for (int dy = 0; dy < 2; ++dy) {
            for (int dx = 0; dx < 2; ++dx) {
              S acc = S(0);
              for (int iy = 0; iy < H; ++iy) {
                const S* xrow = xcd + std::size_t(iy) * W;
                const S* gyrow = gyk + std::size_t(2 * iy + dy) * OW + dx;
                for (int ix = 0; ix < W; ++ix) acc += xrow[ix] * gyrow[2 * ix];
              }
              gwck[dy * 2 + dx] += acc;
            }
          }
        }
      }
    }
    if (bn >= 0) {
      std::vector<S>& gb = tape->g(bn);
      for (int k = 0; k < K; ++k) {
        const S* gyk = gy.data() + std::size_t(k) * OH * OW;
        S acc = S(0);
        for (std::size_t i = 0; i < std::size_t(OH) * OW; ++i) acc += gyk[i];
        gb[std::size_t(k)] += acc;
      }
    }
  });
  return y;
}

// ---------------------------------------------------------------------------
// max_pool over the spatial axes: rank 3 [C,H,W] with window {wh,ww}, rank 4
// [C,D,H,W] with window {wd,wh,ww}. Pooled extents must divide by the window.
// Gradient routes to the first maximal element of each window.
// ---------------------------------------------------------------------------

template <class S>
Tensor<S> max_pool(const Tensor<S>& x, const std::vector<int>& window) {
  if (!((x.rank() == 3 && window.size() == 2) ||
        (x.rank() == 4 && window.size() == 3)))
    throw ShapeError("max_pool: window rank must be tensor rank minus 1");
  const bool is3d = x.rank() == 4;
  const int C = x.dim(0);
  const int D = is3d ? x.dim(1) : 1;
  const int H = x.dim(is3d ? 2 : 1), W = x.dim(is3d ? 3 : 2);
  const int wd = is3d ? window[0] : 1;
  const int wh = window[is3d ? 1 : 0], ww = window[is3d ? 2 : 1];
  if (wd <= 0 || wh <= 0 || ww <= 0)
    throw ShapeError("max_pool: window extents must be positive");
  if (D % wd || H % wh || W % ww)
    throw ShapeError("max_pool: extents not divisible by window");
  const int OD = D / wd, OH = H / wh, OW = W / ww;

  std::vector<int> out_shape =
      is3d ? std::vector<int>{C, OD, OH, OW} : std::vector<int>{C, OH, OW};
  Tensor<S> y = Tensor<S>::zeros(out_shape);
  auto argmax = std::make_shared<std::vector<std::size_t>>(y.size());
  {
    const S* xd = x.data();
    S* yd = y.data();
    std::size_t o = 0;
    for (int c = 0; c < C; ++c) {
      const S* xc = xd + std::size_t(c) * D * H * W;
      for (int od = 0; od < OD; ++od)
        for (int oy = 0; oy < OH; ++oy)
          for (int ox = 0; ox < OW; ++ox, ++o) {
            S best{};
            std::size_t best_i = 0;
            bool first = true;
            for (int dz = 0; dz < wd; ++dz)
              for (int dy = 0; dy < wh; ++dy)
                for (int dx = 0; dx < ww; ++dx) {
                  const std::size_t i =
                      (std::size_t(od * wd + dz) * H + (oy * wh + dy)) * W +
                      (ox * ww + dx);
                  const S v = xc[i];
                  if (first || v > best) {
                    best = v;
                    best_i = std::size_t(c) * D * H * W + i;
                    first = false;
                  }
                }
            yd[o] = best;
            (*argmax)[o] = best_i;
          }
    }
  }

  Tape<S>* tape = common_tape<S>({&x});
  if (!tape) return y;
  tape->adopt(y);
  const int xn = x.node(), yn = y.node();
  tape->record([tape, argmax, xn, yn] {
    const std::vector<S>& gy = tape->g(yn);
    std::vector<S>& gx = tape->g(xn);
    for (std::size_t o = 0; o < gy.size(); ++o) gx[(*argmax)[o]] += gy[o];
  });
  return y;
}

// ---------------------------------------------------------------------------
// Pointwise activations.
// ---------------------------------------------------------------------------

template <class S>
Tensor<S> relu(const Tensor<S>& x) {
  Tensor<S> y = Tensor<S>::zeros(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > S(0) ? x[i] : S(0);
  Tape<S>* tape = common_tape<S>({&x});
  if (!tape) return y;
  tape->adopt(y);
  const int xn = x.node(), yn = y.node();
  Tensor<S> xc = x.detached();
  tape->record([tape, xc, xn, yn] {
    const std::vector<S>& gy = tape->g(yn);
    std::vector<S>& gx = tape->g(xn);
    for (std::size_t i = 0; i < gy.size(); ++i)
      if (xc[i] > S(0)) gx[i] += gy[i];
  });
  return y;
}

template <class S>
Tensor<S> sigmoid(const Tensor<S>& x) {
  Tensor<S> y = Tensor<S>::zeros(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const S v = x[i];
    if (v >= S(0)) {
      const S e = std::exp(-v);
      y[i] = S(1) / (S(1) + e);
    } else {
      const S e = std::exp(v);
      y[i] = e / (S(1) + e);
    }
  }
  Tape<S>* tape = common_tape<S>({&x});
  if (!tape) return y;
  tape->adopt(y);
  const int xn = x.node(), yn = y.node();
  Tensor<S> yc = y.detached();
  tape->record([tape, yc, xn, yn] {
    const std::vector<S>& gy = tape->g(yn);
    std::vector<S>& gx = tape->g(xn);
    for (std::size_t i = 0; i < gy.size(); ++i)
      gx[i] += gy[i] * yc[i] * (S(1) - yc[i]);
  });
  return y;
}

// ---------------------------------------------------------------------------
// concat_channels: stacks along axis 0; all other extents must match. The
// channel axis is outermost, so the output is a's block followed by b's and
// the gradient splits the same way.
// ---------------------------------------------------------------------------

template <class S>
Tensor<S> concat_channels(const Tensor<S>& a, const Tensor<S>& b) {
  if (a.rank() != b.rank() || a.rank() < 1)
    throw ShapeError("concat_channels: rank mismatch");
  for (int i = 1; i < a.rank(); ++i)
    if (a.dim(i) != b.dim(i))
      throw ShapeError("concat_channels: non-channel extents differ at axis " +
                       std::to_string(i));
  std::vector<int> shape = a.shape();
  shape[0] = a.dim(0) + b.dim(0);
  Tensor<S> y = Tensor<S>::zeros(shape);
  std::copy(a.data(), a.data() + a.size(), y.data());
  std::copy(b.data(), b.data() + b.size(), y.data() + a.size());

  Tape<S>* tape = common_tape<S>({&a, &b});
  if (!tape) return y;
  tape->adopt(y);
  const int an = a.node(), bn = b.node(), yn = y.node();
  const std::size_t na = a.size();
  tape->record([tape, an, bn, yn, na] {
    const std::vector<S>& gy = tape->g(yn);
    if (an >= 0) {
      std::vector<S>& ga = tape->g(an);
      for (std::size_t i = 0; i < na; ++i) ga[i] += gy[i];
    }
    if (bn >= 0) {
      std::vector<S>& gb = tape->g(bn);
      for (std::size_t i = 0; i < gy.size() - na; ++i) gb[i] += gy[na + i];
    }
  });
  return y;
}

// ---------------------------------------------------------------------------
// center_crop: keeps the centered window of the requested shape. For an odd
// source extent cropped to 1 the kept index is (n-1)/2.
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<std::size_t> strides_of(const std::vector<int>& shape) {
  std::vector<std::size_t> s(shape.size(), 1);
  for (std::size_t i = shape.size(); i-- > 1;)
    s[i - 1] = s[i] * std::size_t(shape[i]);
  return s;
}

// Visits every row (run of the innermost axis) of `shape`, passing the source
// offset for a window at `starts` and the destination offset.
template <class Fn>
void for_each_row(const std::vector<int>& tgt, const std::vector<int>& src,
                  const std::vector<int>& starts, Fn&& fn) {
  const auto sstr = strides_of(src);
  const int rank = int(tgt.size());
  std::vector<int> idx(std::size_t(rank), 0);
  const int inner = tgt[std::size_t(rank) - 1];
  std::size_t dst = 0;
  for (;;) {
    std::size_t off = 0;
    for (int d = 0; d < rank - 1; ++d)
      off += std::size_t(idx[std::size_t(d)] + starts[std::size_t(d)]) *
             sstr[std::size_t(d)];
    off += std::size_t(starts[std::size_t(rank) - 1]);
    fn(off, dst, inner);
    dst += std::size_t(inner);
    int d = rank - 2;
    for (; d >= 0; --d) {
      if (++idx[std::size_t(d)] < tgt[std::size_t(d)]) break;
      idx[std::size_t(d)] = 0;
    }
    if (d < 0) break;
  }
}

}  // namespace detail

template <class S>
Tensor<S> center_crop(const Tensor<S>& x, const std::vector<int>& target) {
  if (int(target.size()) != x.rank())
    throw ShapeError("center_crop: target rank mismatch");
  std::vector<int> starts(target.size());
  for (std::size_t i = 0; i < target.size(); ++i) {
    if (target[i] <= 0 || target[i] > x.dim(int(i)))
      throw ShapeError("center_crop: target extent exceeds source at axis " +
                       std::to_string(i));
    starts[i] = (x.dim(int(i)) - target[i]) / 2;
  }
  Tensor<S> y = Tensor<S>::zeros(target);
  detail::for_each_row(target, x.shape(), starts,
                       [&](std::size_t src, std::size_t dst, int n) {
                         std::copy(x.data() + src, x.data() + src + n,
                                   y.data() + dst);
                       });

  Tape<S>* tape = common_tape<S>({&x});
  if (!tape) return y;
  tape->adopt(y);
  const int xn = x.node(), yn = y.node();
  const std::vector<int> src_shape = x.shape();
  tape->record([tape, xn, yn, target, src_shape, starts] {
    const std::vector<S>& gy = tape->g(yn);
    std::vector<S>& gx = tape->g(xn);
    detail::for_each_row(target, src_shape, starts,
                         [&](std::size_t src, std::size_t dst, int n) {
                           for (int i = 0; i < n; ++i)
                             gx[src + std::size_t(i)] += gy[dst + std::size_t(i)];
                         });
  });
  return y;
}

// ---------------------------------------------------------------------------
// bilinear_sample: map [C,Hm,Wm], coords in normalized [0,1]^2 -> [C, n].
// A coordinate u maps to continuous pixel u*Hm - 0.5, clamped to [0, Hm-1],
// so sampling at a cell center returns that cell. Differentiable w.r.t. the
// map; the coordinates are data.
// ---------------------------------------------------------------------------

template <class S>
Tensor<S> bilinear_sample(const Tensor<S>& map,
                          const std::vector<std::array<double, 2>>& coords) {
  detail::check_rank(map.rank(), 3, "bilinear_sample map");
  const int C = map.dim(0), Hm = map.dim(1), Wm = map.dim(2);
  const int n = int(coords.size());
  if (n == 0) throw ShapeError("bilinear_sample: empty coordinate list");

  struct Taps {
    int y0, x0, y1, x1;
    S w00, w01, w10, w11;
  };
  auto taps = std::make_shared<std::vector<Taps>>(std::size_t(n));
  for (int i = 0; i < n; ++i) {
    const double yc =
        std::clamp(coords[std::size_t(i)][0] * Hm - 0.5, 0.0, double(Hm - 1));
    const double xc =
        std::clamp(coords[std::size_t(i)][1] * Wm - 0.5, 0.0, double(Wm - 1));
    Taps t;
    t.y0 = int(std::floor(yc));
    t.x0 = int(std::floor(xc));
    t.y1 = std::min(t.y0 + 1, Hm - 1);
    t.x1 = std::min(t.x0 + 1, Wm - 1);
    const double fy = yc - t.y0, fx = xc - t.x0;
    t.w00 = S((1 - fy) * (1 - fx));
    t.w01 = S((1 - fy) * fx);
    t.w10 = S(fy * (1 - fx));
    t.w11 = S(fy * fx);
    (*taps)[std::size_t(i)] = t;
  }

  Tensor<S> y = Tensor<S>::zeros({C, n});
  for (int c = 0; c < C; ++c) {
    const S* mc = map.data() + std::size_t(c) * Hm * Wm;
    S* yc = y.data() + std::size_t(c) * n;
    for (int i = 0; i < n; ++i) {
      const Taps& t = (*taps)[std::size_t(i)];
      yc[i] = t.w00 * mc[std::size_t(t.y0) * Wm + t.x0] +
              t.w01 * mc[std::size_t(t.y0) * Wm + t.x1] +
              t.w10 * mc[std::size_t(t.y1) * Wm + t.x0] +
              t.w11 * mc[std::size_t(t.y1) * Wm + t.x1];
    }
  }

  Tape<S>* tape = common_tape<S>({&map});
  if (!tape) return y;
  tape->adopt(y);
  const int mn = map.node(), yn = y.node();
  tape->record([tape, taps, mn, yn, C, Hm, Wm, n] {
    const std::vector<S>& gy = tape->g(yn);
    std::vector<S>& gm = tape->g(mn);
    for (int c = 0; c < C; ++c) {
      S* gmc = gm.data() + std::size_t(c) * Hm * Wm;
      const S* gyc = gy.data() + std::size_t(c) * n;
      for (int i = 0; i < n; ++i) {
        const Taps& t = (*taps)[std::size_t(i)];
        const S g = gyc[i];
        gmc[std::size_t(t.y0) * Wm + t.x0] += t.w00 * g;
        gmc[std::size_t(t.y0) * Wm + t.x1] += t.w01 * g;
        gmc[std::size_t(t.y1) * Wm + t.x0] += t.w10 * g;
        gmc[std::size_t(t.y1) * Wm + t.x1] += t.w11 * g;
      }
    }
  });
  return y;
}

// ---------------------------------------------------------------------------
// bce_loss: mean of -[g log p + (1-g) log(1-p)] with p clamped to
// [eps, 1-eps], eps = 1e-7. Differentiable w.r.t. p only.
// ---------------------------------------------------------------------------

inline constexpr double kBceEps = 1e-7;

template <class S>
Tensor<S> bce_loss(const Tensor<S>& p, const Tensor<S>& g) {
  if (!p.same_shape(g)) throw ShapeError("bce_loss: shape mismatch");
  const std::size_t n = p.size();
  const S lo = S(kBceEps), hi = S(1.0 - kBceEps);
  double acc = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const S pc = std::clamp(p[i], lo, hi);
    acc -= double(g[i]) * std::log(double(pc)) +
           (1.0 - double(g[i])) * std::log(1.0 - double(pc));
  }
  Tensor<S> y = Tensor<S>::from({1}, {S(acc / double(n))});

  Tape<S>* tape = common_tape<S>({&p, &g});
  if (!tape) return y;
  tape->adopt(y);
  const int pn = p.node(), yn = y.node();
  if (pn < 0) return y;  // constant prediction, nothing to pull
  Tensor<S> pc = p.detached(), gc = g.detached();
  tape->record([tape, pc, gc, pn, yn, n, lo, hi] {
    const S gout = tape->g(yn)[0];
    std::vector<S>& gp = tape->g(pn);
    const S inv_n = S(1) / S(double(n));
    for (std::size_t i = 0; i < n; ++i) {
      const S v = pc[i];
      if (v < lo || v > hi) continue;  // clamped region, zero slope
      gp[i] += gout * inv_n * (v - gc[i]) / (v * (S(1) - v));
    }
  });
  return y;
}

// ---------------------------------------------------------------------------
// Elementwise arithmetic, reductions and reshapes.
// ---------------------------------------------------------------------------

template <class S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
  if (!a.same_shape(b)) throw ShapeError("add: shape mismatch");
  Tensor<S> y = Tensor<S>::zeros(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) y[i] = a[i] + b[i];
  Tape<S>* tape = common_tape<S>({&a, &b});
  if (!tape) return y;
  tape->adopt(y);
  const int an = a.node(), bn = b.node(), yn = y.node();
  tape->record([tape, an, bn, yn] {
    const std::vector<S>& gy = tape->g(yn);
    if (an >= 0) {
      std::vector<S>& ga = tape->g(an);
      for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i];
    }
    if (bn >= 0) {
      std::vector<S>& gb = tape->g(bn);
      for (std::size_t i = 0; i < gy.size(); ++i) gb[i] += gy[i];
    }
  });
  return y;
}

template <class S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) {
  if (!a.same_shape(b)) throw ShapeError("mul: shape mismatch");
  Tensor<S> y = Tensor<S>::zeros(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) y[i] = a[i] * b[i];
  Tape<S>* tape = common_tape<S>({&a, &b});
  if (!tape) return y;
  tape->adopt(y);
  const int an = a.node(), bn = b.node(), yn = y.node();
  Tensor<S> ac = a.detached(), bc = b.detached();
  tape->record([tape, ac, bc, an, bn, yn] {
    const std::vector<S>& gy = tape->g(yn);
    if (an >= 0) {
      std::vector<S>& ga = tape->g(an);
      for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i] * bc[i];
    }
    if (bn >= 0) {
      std::vector<S>& gb = tape->g(bn);
      for (std::size_t i = 0; i < gy.size(); ++i) gb[i] += gy[i] * ac[i];
    }
  });
  return y;
}

template <class S>
Tensor<S> scale(const Tensor<S>& a, double factor) {
  Tensor<S> y = Tensor<S>::zeros(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) y[i] = S(factor) * a[i];
  Tape<S>* tape = common_tape<S>({&a});
  if (!tape) return y;
  tape->adopt(y);
  const int an = a.node(), yn = y.node();
  tape->record([tape, an, yn, factor] {
    const std::vector<S>& gy = tape->g(yn);
    std::vector<S>& ga = tape->g(an);
    for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += S(factor) * gy[i];
  });
  return y;
}

template <class S>
Tensor<S> sum(const Tensor<S>& a) {
  S acc = S(0);
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i];
  Tensor<S> y = Tensor<S>::from({1}, {acc});
  Tape<S>* tape = common_tape<S>({&a});
  if (!tape) return y;
  tape->adopt(y);
  const int an = a.node(), yn = y.node();
  const std::size_t n = a.size();
  tape->record([tape, an, yn, n] {
    const S g = tape->g(yn)[0];
    std::vector<S>& ga = tape->g(an);
    for (std::size_t i = 0; i < n; ++i) ga[i] += g;
  });
  return y;
}

// Same element count, new extents.
template <class S>
Tensor<S> reshape(const Tensor<S>& a, std::vector<int> shape) {
  if (Tensor<S>::count(shape) != a.size())
    throw ShapeError("reshape: element count mismatch");
  Tensor<S> y = Tensor<S>::from(std::move(shape), a.vec());
  Tape<S>* tape = common_tape<S>({&a});
  if (!tape) return y;
  tape->adopt(y);
  const int an = a.node(), yn = y.node();
  tape->record([tape, an, yn] {
    const std::vector<S>& gy = tape->g(yn);
    std::vector<S>& ga = tape->g(an);
    for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i];
  });
  return y;
}

}  // namespace ggpfn
