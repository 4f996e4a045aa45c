#pragma once

#include <algorithm>
#include <vector>

#include "ggpfn/errors.hpp"
#include "ggpfn/tensor.hpp"

// Resampling between arbitrary extents. Intensities use exact area
// averaging (each target cell is the mean of the source area it covers;
// when an axis grows instead, that degrades to box interpolation); masks use
// coverage OR (a target cell is 1 if any covered source pixel is 1) so thin
// structures survive as supervision targets.

namespace ggpfn {

namespace detail {

// Overlap weights of source cells against target cell `t` when n source
// cells map onto tn target cells. Returns (first source index, weights);
// weights sum to n/tn.
inline void axis_weights(int n, int tn, int t, int& first,
                         std::vector<double>& w) {
  const double scale = double(n) / double(tn);
  const double lo = t * scale, hi = (t + 1) * scale;
  first = int(lo);
  const int last = std::min(n - 1, int(hi) - (hi == int(hi) ? 1 : 0));
  w.clear();
  for (int s = first; s <= last; ++s) {
    const double a = std::max(lo, double(s));
    const double b = std::min(hi, double(s + 1));
    w.push_back(b - a);
  }
}

}  // namespace detail

// [1,H,W] -> [1,th,tw] by exact area averaging.
template <class S>
Tensor<S> area_downsample(const Tensor<S>& slice, int th, int tw) {
  if (slice.rank() != 3 || slice.dim(0) != 1)
    throw ShapeError("area_downsample: expected [1,H,W]");
  const int H = slice.dim(1), W = slice.dim(2);
  if (th < 1 || tw < 1) throw ShapeError("area_downsample: empty target");
  Tensor<S> out = Tensor<S>::zeros({1, th, tw});

  std::vector<int> xf(static_cast<std::size_t>(tw));
  std::vector<std::vector<double>> xw(static_cast<std::size_t>(tw));
  for (int tx = 0; tx < tw; ++tx)
    detail::axis_weights(W, tw, tx, xf[std::size_t(tx)], xw[std::size_t(tx)]);

  int yf;
  std::vector<double> yw;
  const double inv_area = double(th) * tw / (double(H) * W);
  for (int ty = 0; ty < th; ++ty) {
    detail::axis_weights(H, th, ty, yf, yw);
    for (int tx = 0; tx < tw; ++tx) {
      double acc = 0;
      for (std::size_t iy = 0; iy < yw.size(); ++iy) {
        const S* row = slice.data() + std::size_t(yf + int(iy)) * W;
        const std::vector<double>& wx = xw[std::size_t(tx)];
        double racc = 0;
        for (std::size_t ix = 0; ix < wx.size(); ++ix)
          racc += wx[ix] * double(row[xf[std::size_t(tx)] + int(ix)]);
        acc += yw[iy] * racc;
      }
      out.data()[std::size_t(ty) * tw + tx] = S(acc * inv_area);
    }
  }
  return out;
}

// [1,H,W] binary -> [1,th,tw]: target cell is 1 iff any source pixel whose
// area intersects it is 1.
template <class S>
Tensor<S> max_downsample(const Tensor<S>& mask, int th, int tw) {
  if (mask.rank() != 3 || mask.dim(0) != 1)
    throw ShapeError("max_downsample: expected [1,H,W]");
  const int H = mask.dim(1), W = mask.dim(2);
  if (th < 1 || tw < 1) throw ShapeError("max_downsample: empty target");
  Tensor<S> out = Tensor<S>::zeros({1, th, tw});

  std::vector<int> xf(static_cast<std::size_t>(tw));
  std::vector<std::vector<double>> xw(static_cast<std::size_t>(tw));
  for (int tx = 0; tx < tw; ++tx)
    detail::axis_weights(W, tw, tx, xf[std::size_t(tx)], xw[std::size_t(tx)]);

  int yf;
  std::vector<double> yw;
  for (int ty = 0; ty < th; ++ty) {
    detail::axis_weights(H, th, ty, yf, yw);
    for (int tx = 0; tx < tw; ++tx) {
      S best = S(0);
      for (std::size_t iy = 0; iy < yw.size() && best == S(0); ++iy) {
        const S* row = mask.data() + std::size_t(yf + int(iy)) * W;
        const std::size_t nx = xw[std::size_t(tx)].size();
        for (std::size_t ix = 0; ix < nx; ++ix)
          if (row[xf[std::size_t(tx)] + int(ix)] != S(0)) {
            best = S(1);
            break;
          }
      }
      out.data()[std::size_t(ty) * tw + tx] = best;
    }
  }
  return out;
}

// One /2 max-pooling of a binary [1,H,W] mask; odd extents are zero-padded
// below/right before pooling, so extents round up.
template <class S>
Tensor<S> mask_halve(const Tensor<S>& mask) {
  if (mask.rank() != 3 || mask.dim(0) != 1)
    throw ShapeError("mask_halve: expected [1,H,W]");
  const int H = mask.dim(1), W = mask.dim(2);
  const int th = (H + 1) / 2, tw = (W + 1) / 2;
  Tensor<S> out = Tensor<S>::zeros({1, th, tw});
  for (int ty = 0; ty < th; ++ty)
    for (int tx = 0; tx < tw; ++tx) {
      S best = S(0);
      for (int dy = 0; dy < 2 && best == S(0); ++dy)
        for (int dx = 0; dx < 2; ++dx) {
          const int y = 2 * ty + dy, x = 2 * tx + dx;
          if (y < H && x < W && mask.data()[std::size_t(y) * W + x] != S(0)) {
            best = S(1);
            break;
          }
        }
      out.data()[std::size_t(ty) * tw + tx] = best;
    }
  return out;
}

// Mask at scales 1..n: entry j is mask halved j times with scale 0 = input.
template <class S>
std::vector<Tensor<S>> gt_pyramid(const Tensor<S>& mask, int n_scales) {
  std::vector<Tensor<S>> out;
  out.reserve(std::size_t(n_scales));
  Tensor<S> cur = mask;
  for (int j = 0; j < n_scales; ++j) {
    out.push_back(cur);
    if (j + 1 < n_scales) cur = mask_halve(cur);
  }
  return out;
}

}  // namespace ggpfn
