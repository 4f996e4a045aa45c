#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ggpfn/config.hpp"
#include "ggpfn/ops.hpp"
#include "ggpfn/params.hpp"
#include "ggpfn/resample.hpp"
#include "ggpfn/rng.hpp"

// The network: a depth-shrinking 3D encoder over a slab of adjacent slices
// (or its one-off 2D ablation), a downsampled-whole-slice context branch, the
// sub-pixel feature gather tying the two together, a 2D decoder with skip
// connections, and the supervision heads and combined loss.

namespace ggpfn {

template <class S>
struct EncoderPyramid {
  // Last feature map of each group, [C, D, H, W]; scale g sits at patch/2^g.
  std::array<Tensor<S>, 4> scales;
  // Final map, depth exactly 1.
  Tensor<S> ek;
};

template <class S>
struct GlobalFeatures {
  Tensor<S> f;        // coarsest map, extents global_h/32 x global_w/32
  Tensor<S> f_prime;  // one stage earlier, extents global_h/16 x global_w/16
};

// Parameter lookup that lets training overlay tape-watched copies on top of a
// store; anything not overlaid reads straight from the store (and therefore
// receives no gradient — that is how stages freeze parameter groups).
template <class S>
class ParamRef {
 public:
  ParamRef(const ParamStoreT<S>& store) : store_(&store) {}
  ParamRef(const ParamStoreT<S>& store,
           const std::unordered_map<std::string, Tensor<S>>& live)
      : store_(&store), live_(&live) {}

  const Tensor<S>& operator()(const std::string& name) const {
    if (live_) {
      auto it = live_->find(name);
      if (it != live_->end()) return it->second;
    }
    return store_->at(name);
  }
  bool has(const std::string& name) const {
    if (live_ && live_->count(name)) return true;
    return store_->has(name);
  }

 private:
  const ParamStoreT<S>* store_;
  const std::unordered_map<std::string, Tensor<S>>* live_ = nullptr;
};

// ---------------------------------------------------------------------------
// Bookkeeping.
// ---------------------------------------------------------------------------

inline constexpr std::array<int, 5> kGlobalStageConvs = {2, 2, 3, 3, 3};

// Output channel width of each encoder group (groups with zero convolutions
// pass their input through unchanged).
inline std::array<int, 4> encoder_widths(const GgpfnConfig& cfg) {
  std::array<int, 4> w{};
  int cur = cfg.fusion_mode == FusionMode::one_off ? cfg.channels[0] : 1;
  for (int g = 0; g < 4; ++g) {
    if (cfg.group_convs[std::size_t(g)] > 0) cur = cfg.channels[std::size_t(g)];
    w[std::size_t(g)] = cur;
  }
  return w;
}

// Input depth the encoder accepts: one central slice plus fusion_steps
// neighbors on each side.
inline int required_depth(const GgpfnConfig& cfg) {
  return 2 * cfg.fusion_steps + 1;
}

// Receptive field of a layer sequence; each layer is (kernel, stride).
inline int receptive_field_seq(const std::vector<std::pair<int, int>>& layers) {
  int rf = 1, jump = 1;
  for (auto [k, s] : layers) {
    rf += (k - 1) * jump;
    jump *= s;
  }
  return rf;
}

// H/W receptive field of the encoder: 3x3 convolutions per group with a
// stride-2 pooling between groups.
inline std::pair<int, int> receptive_field(const GgpfnConfig& cfg) {
  std::vector<std::pair<int, int>> layers;
  for (int g = 0; g < 4; ++g) {
    if (g > 0) layers.push_back({2, 2});
    for (int i = 0; i < cfg.group_convs[std::size_t(g)]; ++i)
      layers.push_back({3, 1});
  }
  const int rf = receptive_field_seq(layers);
  return {rf, rf};
}

// ---------------------------------------------------------------------------
// Parameter enumeration and initialization.
// ---------------------------------------------------------------------------

struct ParamSpec {
  std::string name;
  std::vector<int> shape;
  int fan_in;  // 0 for biases (zero-initialized)
};

inline std::vector<ParamSpec> enumerate_params(const GgpfnConfig& cfg) {
  cfg.validate();
  std::vector<ParamSpec> out;
  auto add = [&](std::string name, std::vector<int> shape, int fan_in) {
    out.push_back({std::move(name), std::move(shape), fan_in});
  };
  const bool one_off = cfg.fusion_mode == FusionMode::one_off;
  const std::array<int, 4> widths = encoder_widths(cfg);

  if (one_off) {
    const int d = required_depth(cfg);
    add("enc.fuse.w", {cfg.channels[0], d, 3, 3}, d * 9);
    add("enc.fuse.b", {cfg.channels[0]}, 0);
  }
  int cur = one_off ? cfg.channels[0] : 1;
  for (int g = 0; g < 4; ++g) {
    const int n = cfg.group_convs[std::size_t(g)];
    const int entry = cur;
    const int cout = cfg.channels[std::size_t(g)];
    for (int i = 0; i < n; ++i) {
      const std::string base =
          "enc.g" + std::to_string(g) + ".conv" + std::to_string(i);
      if (one_off)
        add(base + ".w", {cout, cur, 3, 3}, cur * 9);
      else
        add(base + ".w", {cout, cur, 3, 3, 3}, cur * 27);
      add(base + ".b", {cout}, 0);
      cur = cout;
    }
    if (n >= 2) {
      const int block_in = n >= 3 ? cout : entry;
      if (block_in != cout) {
        const std::string name = "enc.g" + std::to_string(g) + ".res.proj.w";
        if (one_off)
          add(name, {cout, block_in, 1, 1}, block_in);
        else
          add(name, {cout, block_in, 1, 1, 1}, block_in);
      }
    }
  }
  for (int g = 0; g < 4; ++g) {
    const std::string base = "head.s" + std::to_string(g);
    add(base + ".w", {1, widths[std::size_t(g)], 1, 1}, widths[std::size_t(g)]);
    add(base + ".b", {1}, 0);
  }
  int gcur = 1;
  for (int s = 0; s < 5; ++s) {
    const int gout = cfg.global_channels[std::size_t(s)];
    for (int i = 0; i < kGlobalStageConvs[std::size_t(s)]; ++i) {
      const std::string base =
          "glob.s" + std::to_string(s) + ".conv" + std::to_string(i);
      add(base + ".w", {gout, gcur, 3, 3}, gcur * 9);
      add(base + ".b", {gout}, 0);
      gcur = gout;
    }
  }
  add("ghead.f.w", {1, gcur, 1, 1}, gcur);
  add("ghead.f.b", {1}, 0);
  add("ghead.fp.w", {1, gcur, 1, 1}, gcur);
  add("ghead.fp.b", {1}, 0);

  int dcur = widths[3] + (cfg.global_enabled ? gcur : 0);
  const std::array<int, 3> skips = {widths[2], widths[1], widths[0]};
  for (int s = 0; s < 3; ++s) {
    const int tc = cfg.decoder_channels[std::size_t(s)];
    const std::string base = "dec.s" + std::to_string(s);
    add(base + ".up.w", {dcur, tc, 2, 2}, dcur * 4);
    add(base + ".up.b", {tc}, 0);
    const int cin1 = tc + skips[std::size_t(s)];
    add(base + ".conv1.w", {tc, cin1, 3, 3}, cin1 * 9);
    add(base + ".conv1.b", {tc}, 0);
    add(base + ".conv2.w", {tc, tc, 3, 3}, tc * 9);
    add(base + ".conv2.b", {tc}, 0);
    dcur = tc;
  }
  add("dec.out.w", {1, dcur, 1, 1}, dcur);
  add("dec.out.b", {1}, 0);
  return out;
}

// Every kernel drawn uniform with bound sqrt(6/fan_in) from its own
// name-derived stream, biases zero; bit-identical for equal seeds.
template <class S>
ParamStoreT<S> build_model(const GgpfnConfig& cfg, std::uint64_t seed) {
  ParamStoreT<S> store;
  for (const ParamSpec& spec : enumerate_params(cfg)) {
    Tensor<S> t = Tensor<S>::zeros(spec.shape);
    if (spec.fan_in > 0) {
      Rng rng(derive_seed(seed, spec.name));
      const double bound = std::sqrt(6.0 / spec.fan_in);
      for (std::size_t i = 0; i < t.size(); ++i)
        t[i] = S(rng.uniform(-bound, bound));
    }
    store.add(spec.name, std::move(t));
  }
  return store;
}

// ---------------------------------------------------------------------------
// Forward passes.
// ---------------------------------------------------------------------------

// [C, D, H, W] -> [C, H, W] at the central depth index.
template <class S>
Tensor<S> central_slice(const Tensor<S>& x) {
  if (x.rank() != 4) throw ShapeError("central_slice: expected rank 4");
  Tensor<S> c = center_crop(x, {x.dim(0), 1, x.dim(2), x.dim(3)});
  return reshape(c, {x.dim(0), x.dim(2), x.dim(3)});
}

namespace detail {

template <class S>
Tensor<S> residual_close(const Tensor<S>& conv_out, const Tensor<S>& block_in,
                         const ParamRef<S>& P, const std::string& proj_name,
                         bool one_off) {
  Tensor<S> id = block_in;
  if (!one_off)
    id = center_crop(id, {id.dim(0), id.dim(1) - 4, id.dim(2), id.dim(3)});
  if (P.has(proj_name)) {
    const Tensor<S>& pw = P(proj_name);
    Tensor<S> zb = Tensor<S>::zeros({pw.dim(0)});
    id = one_off ? conv2d(id, pw, zb) : conv3d_dvalid(id, pw, zb);
  }
  return relu(add(conv_out, id));
}

}  // namespace detail

// Progressive mode: each 3x3x3 convolution consumes the two outermost slices;
// a (1,2,2) pooling between groups halves H/W only. The last two convolutions
// of any group with at least two form a residual block whose identity path is
// center-cropped four slices (and 1x1x1-projected when widths differ).
template <class S>
EncoderPyramid<S> encoder_forward(const Tensor<S>& patch3d,
                                  const ParamRef<S>& P,
                                  const GgpfnConfig& cfg) {
  if (patch3d.rank() != 4 || patch3d.dim(0) != 1)
    throw ShapeError("encoder_forward: expected [1, depth, H, W]");
  if (patch3d.dim(1) != required_depth(cfg))
    throw ShapeError("encoder_forward: input depth " +
                     std::to_string(patch3d.dim(1)) + ", need " +
                     std::to_string(required_depth(cfg)));
  Tensor<S> x = patch3d;
  EncoderPyramid<S> pyr;
  for (int g = 0; g < 4; ++g) {
    if (g > 0) x = max_pool(x, {1, 2, 2});
    const int n = cfg.group_convs[std::size_t(g)];
    Tensor<S> block_in;
    for (int i = 0; i < n; ++i) {
      const bool in_res = n >= 2 && i >= n - 2;
      if (in_res && i == n - 2) block_in = x;
      const std::string base =
          "enc.g" + std::to_string(g) + ".conv" + std::to_string(i);
      x = conv3d_dvalid(x, P(base + ".w"), P(base + ".b"));
      if (in_res && i == n - 1)
        x = detail::residual_close(x, block_in, P,
                                   "enc.g" + std::to_string(g) + ".res.proj.w",
                                   false);
      else
        x = relu(x);
    }
    pyr.scales[std::size_t(g)] = x;
  }
  if (x.dim(1) != 1)
    throw ShapeError("encoder_forward: final depth is not 1");
  pyr.ek = x;
  return pyr;
}

// One-off ablation: the slab's slices become input channels of a single 2D
// convolution, then a purely 2D encoder with the same widths and poolings.
template <class S>
EncoderPyramid<S> one_off_encoder_forward(const Tensor<S>& patch3d,
                                          const ParamRef<S>& P,
                                          const GgpfnConfig& cfg) {
  if (patch3d.rank() != 4 || patch3d.dim(0) != 1)
    throw ShapeError("one_off_encoder_forward: expected [1, depth, H, W]");
  const int d = required_depth(cfg);
  if (patch3d.dim(1) != d)
    throw ShapeError("one_off_encoder_forward: input depth " +
                     std::to_string(patch3d.dim(1)) + ", need " +
                     std::to_string(d));
  Tensor<S> x = reshape(patch3d, {d, patch3d.dim(2), patch3d.dim(3)});
  x = relu(conv2d(x, P("enc.fuse.w"), P("enc.fuse.b")));
  EncoderPyramid<S> pyr;
  for (int g = 0; g < 4; ++g) {
    if (g > 0) x = max_pool(x, {2, 2});
    const int n = cfg.group_convs[std::size_t(g)];
    Tensor<S> block_in;
    for (int i = 0; i < n; ++i) {
      const bool in_res = n >= 2 && i >= n - 2;
      if (in_res && i == n - 2) block_in = x;
      const std::string base =
          "enc.g" + std::to_string(g) + ".conv" + std::to_string(i);
      x = conv2d(x, P(base + ".w"), P(base + ".b"));
      if (in_res && i == n - 1)
        x = detail::residual_close(x, block_in, P,
                                   "enc.g" + std::to_string(g) + ".res.proj.w",
                                   true);
      else
        x = relu(x);
    }
    pyr.scales[std::size_t(g)] =
        reshape(x, {x.dim(0), 1, x.dim(1), x.dim(2)});
  }
  pyr.ek = pyr.scales[3];
  return pyr;
}

template <class S>
EncoderPyramid<S> run_encoder(const Tensor<S>& patch3d, const ParamRef<S>& P,
                              const GgpfnConfig& cfg) {
  return cfg.fusion_mode == FusionMode::one_off
             ? one_off_encoder_forward(patch3d, P, cfg)
             : encoder_forward(patch3d, P, cfg);
}

// Context branch over the downsampled whole slice: 13 convolutions in 5
// stages; the first four stages end in a 2x2 pooling and the last
// convolution is stride-2, so the output sits at 1/32 of the input.
template <class S>
GlobalFeatures<S> global_forward(const Tensor<S>& slice_g, const ParamRef<S>& P,
                                 const GgpfnConfig& cfg) {
  if (slice_g.rank() != 3 || slice_g.dim(0) != 1)
    throw ShapeError("global_forward: expected [1, H, W]");
  if (slice_g.dim(1) != cfg.global_h || slice_g.dim(2) != cfg.global_w)
    throw ShapeError("global_forward: extents " +
                     std::to_string(slice_g.dim(1)) + "x" +
                     std::to_string(slice_g.dim(2)) + ", configured " +
                     std::to_string(cfg.global_h) + "x" +
                     std::to_string(cfg.global_w));
  Tensor<S> x = slice_g;
  GlobalFeatures<S> gf;
  for (int s = 0; s < 5; ++s) {
    for (int i = 0; i < kGlobalStageConvs[std::size_t(s)]; ++i) {
      const std::string base =
          "glob.s" + std::to_string(s) + ".conv" + std::to_string(i);
      const bool strided = s == 4 && i == 2;
      x = relu(conv2d(x, P(base + ".w"), P(base + ".b"), strided ? 2 : 1, 1));
      if (s == 4 && i == 1) gf.f_prime = x;
    }
    if (s < 4) x = max_pool(x, {2, 2});
  }
  gf.f = x;
  return gf;
}

// For each cell (i,j) of an eh x ew grid over the patch window, samples the
// coarse map at the cell center's whole-slice position. Centers sit at
// (y0 + (i+0.5)*ph/eh, x0 + (j+0.5)*pw/ew), normalized by the slice extents.
template <class S>
Tensor<S> subpixel_gather(const Tensor<S>& f, int y0, int x0, int ph, int pw,
                          int slice_h, int slice_w, int eh, int ew) {
  if (y0 < 0 || x0 < 0 || y0 + ph > slice_h || x0 + pw > slice_w)
    throw ShapeError("subpixel_gather: window out of slice bounds");
  if (eh < 1 || ew < 1) throw ShapeError("subpixel_gather: empty grid");
  std::vector<std::array<double, 2>> coords;
  coords.reserve(std::size_t(eh) * std::size_t(ew));
  for (int i = 0; i < eh; ++i)
    for (int j = 0; j < ew; ++j)
      coords.push_back(
          {(y0 + (i + 0.5) * ph / eh) / slice_h,
           (x0 + (j + 0.5) * pw / ew) / slice_w});
  Tensor<S> flat = bilinear_sample(f, coords);
  return reshape(flat, {f.dim(0), eh, ew});
}

// Three upsampling stages from the fused bottom map back to patch
// resolution, each concatenating the matching encoder scale's central slice,
// then a 1x1 convolution and sigmoid.
template <class S>
Tensor<S> decoder_forward(const EncoderPyramid<S>& pyr,
                          const std::optional<Tensor<S>>& fk,
                          const ParamRef<S>& P, const GgpfnConfig& cfg) {
  Tensor<S> x = central_slice(pyr.ek);
  if (cfg.global_enabled) {
    if (!fk)
      throw ShapeError("decoder_forward: gathered context map required");
    if (fk->rank() != 3 || fk->dim(1) != x.dim(1) || fk->dim(2) != x.dim(2))
      throw ShapeError("decoder_forward: context map extents mismatch");
    x = concat_channels(x, *fk);
  }
  for (int s = 0; s < 3; ++s) {
    const std::string base = "dec.s" + std::to_string(s);
    x = transposed_conv2d(x, P(base + ".up.w"), P(base + ".up.b"));
    Tensor<S> skip = central_slice(pyr.scales[std::size_t(2 - s)]);
    x = concat_channels(x, skip);
    x = relu(conv2d(x, P(base + ".conv1.w"), P(base + ".conv1.b")));
    x = relu(conv2d(x, P(base + ".conv2.w"), P(base + ".conv2.b")));
  }
  x = conv2d(x, P("dec.out.w"), P("dec.out.b"));
  return sigmoid(x);
}

// Per-scale 1x1 probability heads on the central slice of each group's last
// feature map. Training-only supervision; inference uses the decoder output.
template <class S>
std::array<Tensor<S>, 4> multiscale_heads(const EncoderPyramid<S>& pyr,
                                          const ParamRef<S>& P) {
  std::array<Tensor<S>, 4> out;
  for (int g = 0; g < 4; ++g) {
    const std::string base = "head.s" + std::to_string(g);
    out[std::size_t(g)] = sigmoid(conv2d(central_slice(pyr.scales[std::size_t(g)]),
                                         P(base + ".w"), P(base + ".b")));
  }
  return out;
}

template <class S>
std::pair<Tensor<S>, Tensor<S>> global_heads(const GlobalFeatures<S>& gf,
                                             const ParamRef<S>& P) {
  return {sigmoid(conv2d(gf.f, P("ghead.f.w"), P("ghead.f.b"))),
          sigmoid(conv2d(gf.f_prime, P("ghead.fp.w"), P("ghead.fp.b")))};
}

// ---------------------------------------------------------------------------
// Loss.
// ---------------------------------------------------------------------------

// Mean over patches of [bce(Pk,Gk) + 1/4 sum_j bce(Pj,Gj)] plus
// alpha*bce(Pf,Gf) + beta*bce(Pf',Gf'). Per-scale targets are derived from
// Gk by successive mask halving. Context terms with zero weight are skipped
// entirely; nonzero weight with missing maps is an error.
template <class S>
Tensor<S> total_loss(const std::vector<Tensor<S>>& pk,
                     const std::vector<Tensor<S>>& gk,
                     const std::vector<std::array<Tensor<S>, 4>>& pj,
                     const std::optional<Tensor<S>>& pf,
                     const std::optional<Tensor<S>>& pf_prime,
                     const std::optional<Tensor<S>>& gf,
                     const std::optional<Tensor<S>>& gf_prime, double alpha,
                     double beta) {
  const std::size_t n = pk.size();
  if (n < 1) throw ShapeError("total_loss: need at least one patch");
  if (gk.size() != n || pj.size() != n)
    throw ShapeError("total_loss: list length mismatch");
  std::optional<Tensor<S>> acc;
  for (std::size_t k = 0; k < n; ++k) {
    Tensor<S> term = bce_loss(pk[k], gk[k]);
    std::vector<Tensor<S>> gj = gt_pyramid(gk[k], 4);
    std::optional<Tensor<S>> ms;
    for (int j = 0; j < 4; ++j) {
      Tensor<S> c = bce_loss(pj[k][std::size_t(j)], gj[std::size_t(j)]);
      ms = ms ? add(*ms, c) : c;
    }
    term = add(term, scale(*ms, 0.25));
    acc = acc ? add(*acc, term) : term;
  }
  Tensor<S> loss = scale(*acc, 1.0 / double(n));
  if (alpha != 0) {
    if (!pf || !gf)
      throw ShapeError("total_loss: alpha > 0 but no coarse context maps");
    loss = add(loss, scale(bce_loss(*pf, *gf), alpha));
  }
  if (beta != 0) {
    if (!pf_prime || !gf_prime)
      throw ShapeError("total_loss: beta > 0 but no mid context maps");
    loss = add(loss, scale(bce_loss(*pf_prime, *gf_prime), beta));
  }
  return loss;
}

}  // namespace ggpfn
