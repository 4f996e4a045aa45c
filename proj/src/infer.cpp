#include "ggpfn/infer.hpp"

#include <algorithm>
#include <cmath>
#include <optional>

#include "ggpfn/model.hpp"
#include "ggpfn/patches.hpp"
#include "ggpfn/resample.hpp"

namespace ggpfn {

namespace {

// Window crop of a [1, d, H, W] stack.
Tensor<float> crop_stack(const Tensor<float>& stack, int y0, int x0, int ph,
                         int pw) {
  const int d = stack.dim(1), h = stack.dim(2), w = stack.dim(3);
  Tensor<float> out = Tensor<float>::zeros({1, d, ph, pw});
  for (int z = 0; z < d; ++z)
    for (int y = 0; y < ph; ++y) {
      const float* src = stack.data() +
                         (std::size_t(z) * std::size_t(h) + std::size_t(y0 + y)) * std::size_t(w) +
                         std::size_t(x0);
      float* dst = out.data() +
                   (std::size_t(z) * std::size_t(ph) + std::size_t(y)) * std::size_t(pw);
      std::copy(src, src + pw, dst);
    }
  return out;
}

}  // namespace

Tensor<float> segment_slice(const Tensor<float>& stack, const ParamStore& store,
                            const GgpfnConfig& cfg) {
  if (stack.rank() != 4 || stack.dim(0) != 1 ||
      stack.dim(1) != cfg.required_depth())
    throw ShapeError("segment_slice: expected [1, " +
                     std::to_string(cfg.required_depth()) + ", h, w] stack");
  const int sh = stack.dim(2), sw = stack.dim(3);
  if (sh < 8 || sw < 8) throw ShapeError("segment_slice: slice below 8x8");

  std::optional<GlobalFeatures<float>> gf;
  if (cfg.global_enabled) {
    Tensor<float> central = reshape(
        center_crop(stack, {1, 1, sh, sw}), {1, sh, sw});
    gf = global_forward(area_downsample(central, cfg.global_h, cfg.global_w),
                        ParamRef<float>(store), cfg);
  }

  const int eph = std::min(cfg.patch_h, sh / 8 * 8);
  const int epw = std::min(cfg.patch_w, sw / 8 * 8);
  const int eo = std::max(0, std::min(cfg.overlap, std::min(eph, epw) - 1));
  const PatchPlan plan = decompose(sh, sw, eph, epw, eo);

  std::vector<Tensor<float>> maps;
  maps.reserve(plan.windows.size());
  for (const PatchPlan::Window& win : plan.windows) {
    Tensor<float> patch = crop_stack(stack, win.y0, win.x0, eph, epw);
    EncoderPyramid<float> enc =
        run_encoder(patch, ParamRef<float>(store), cfg);
    std::optional<Tensor<float>> fk;
    if (cfg.global_enabled)
      fk = subpixel_gather(gf->f, win.y0, win.x0, eph, epw, sh, sw,
                           enc.ek.dim(2), enc.ek.dim(3));
    maps.push_back(decoder_forward(enc, fk, ParamRef<float>(store), cfg));
  }
  return merge(maps, plan);
}

VolumeGrid segment_volume_view(const VolumeGrid& vg, ViewPlane plane,
                               const ParamStore& store,
                               const GgpfnConfig& cfg) {
  const int count = view_slice_count(vg, plane);
  std::vector<Tensor<float>> probs;
  probs.reserve(std::size_t(count));
  for (int i = 0; i < count; ++i)
    probs.push_back(segment_slice(
        extract_neighbor_stack(vg, plane, i, cfg.fusion_steps), store, cfg));

  VolumeGrid out;
  out.l = vg.l;
  out.h = vg.h;
  out.w = vg.w;
  out.spacing = vg.spacing;
  out.intensity = stack_view_slices(probs, vg.l, vg.h, vg.w, plane);
  return out;
}

VolumeGrid fuse_p3d(const VolumeGrid& va, const VolumeGrid& vs,
                    const VolumeGrid& vc,
                    const std::array<double, 3>& weights) {
  if (va.l != vs.l || va.h != vs.h || va.w != vs.w || va.l != vc.l ||
      va.h != vc.h || va.w != vc.w)
    throw ShapeError("fuse_p3d: volume extents differ");
  const double wsum = weights[0] + weights[1] + weights[2];
  if (std::abs(wsum - 1.0) > 1e-6)
    throw ConfigError("fuse_p3d: view weights must sum to 1");

  VolumeGrid out;
  out.l = va.l;
  out.h = va.h;
  out.w = va.w;
  out.spacing = va.spacing;
  out.intensity.resize(va.intensity.size());
  for (std::size_t i = 0; i < out.intensity.size(); ++i)
    out.intensity[i] = float(weights[0] * va.intensity[i] +
                             weights[1] * vs.intensity[i] +
                             weights[2] * vc.intensity[i]);
  return out;
}

std::vector<std::uint8_t> threshold_mask(const VolumeGrid& prob, double t) {
  std::vector<std::uint8_t> mask(prob.intensity.size());
  for (std::size_t i = 0; i < mask.size(); ++i)
    mask[i] = prob.intensity[i] >= t ? 1 : 0;
  return mask;
}

double dsc(const std::vector<std::uint8_t>& pred,
           const std::vector<std::uint8_t>& gt) {
  if (pred.size() != gt.size()) throw ShapeError("dsc: mask extents differ");
  std::size_t np = 0, ng = 0, both = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    np += pred[i] != 0;
    ng += gt[i] != 0;
    both += (pred[i] != 0) && (gt[i] != 0);
  }
  if (np + ng == 0) return 1.0;
  return 2.0 * double(both) / double(np + ng);
}

std::vector<PrPoint> pr_curve(const VolumeGrid& prob,
                              const std::vector<std::uint8_t>& gt,
                              int n_thresholds) {
  if (prob.intensity.size() != gt.size())
    throw ShapeError("pr_curve: extents differ");
  if (n_thresholds < 1) throw ConfigError("pr_curve: need >= 1 threshold");
  std::size_t ng = 0;
  for (std::uint8_t v : gt) ng += v != 0;
  if (ng == 0) throw ShapeError("pr_curve: empty ground truth, recall undefined");

  std::vector<PrPoint> out;
  out.reserve(std::size_t(n_thresholds));
  for (int i = 0; i < n_thresholds; ++i) {
    const double t = double(i + 1) / double(n_thresholds + 1);
    std::size_t tp = 0, fp = 0;
    for (std::size_t j = 0; j < gt.size(); ++j) {
      if (prob.intensity[j] >= t)
        (gt[j] != 0 ? tp : fp)++;
    }
    const double precision = tp + fp == 0 ? 1.0 : double(tp) / double(tp + fp);
    const double recall = double(tp) / double(ng);
    const double f = precision + recall == 0
                         ? 0.0
                         : 2.0 * precision * recall / (precision + recall);
    out.push_back({t, precision, recall, f});
  }
  return out;
}

}  // namespace ggpfn
