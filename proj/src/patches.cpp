#include "ggpfn/patches.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace ggpfn {

namespace {

std::vector<int> axis_positions(int extent, int patch, int overlap) {
  if (patch > extent)
    throw ShapeError("decompose: patch extent " + std::to_string(patch) +
                     " exceeds slice extent " + std::to_string(extent));
  const int stride = patch - overlap;
  std::vector<int> pos;
  int p = 0;
  for (;;) {
    pos.push_back(p);
    if (p + patch >= extent) break;
    p += stride;
    if (p + patch > extent) p = extent - patch;
  }
  return pos;
}

// Half-open keep intervals: overlaps split at their midpoint, ends pinned to
// the slice boundary.
std::vector<std::pair<int, int>> axis_keeps(const std::vector<int>& pos,
                                            int patch, int extent) {
  std::vector<std::pair<int, int>> keep(pos.size());
  int prev = 0;
  for (std::size_t i = 0; i < pos.size(); ++i) {
    const int end = i + 1 < pos.size()
                        ? (pos[i] + patch + pos[i + 1]) / 2
                        : extent;
    keep[i] = {prev, end};
    prev = end;
  }
  return keep;
}

}  // namespace

PatchPlan decompose(int slice_h, int slice_w, int patch_h, int patch_w,
                    int overlap) {
  if (slice_h < 1 || slice_w < 1)
    throw ShapeError("decompose: empty slice");
  if (overlap < 0 || overlap >= std::min(patch_h, patch_w))
    throw ShapeError("decompose: overlap must be in [0, patch)");
  PatchPlan plan;
  plan.slice_h = slice_h;
  plan.slice_w = slice_w;
  plan.patch_h = patch_h;
  plan.patch_w = patch_w;
  plan.overlap = overlap;
  const std::vector<int> ys = axis_positions(slice_h, patch_h, overlap);
  const std::vector<int> xs = axis_positions(slice_w, patch_w, overlap);
  const auto ky = axis_keeps(ys, patch_h, slice_h);
  const auto kx = axis_keeps(xs, patch_w, slice_w);
  for (std::size_t iy = 0; iy < ys.size(); ++iy)
    for (std::size_t ix = 0; ix < xs.size(); ++ix) {
      PatchPlan::Window win;
      win.y0 = ys[iy];
      win.x0 = xs[ix];
      win.ky0 = ky[iy].first;
      win.ky1 = ky[iy].second;
      win.kx0 = kx[ix].first;
      win.kx1 = kx[ix].second;
      plan.windows.push_back(win);
    }
  return plan;
}

Tensor<float> merge(const std::vector<Tensor<float>>& patch_maps,
                    const PatchPlan& plan) {
  if (patch_maps.size() != plan.windows.size())
    throw ShapeError("merge: map count does not match plan");
  Tensor<float> out = Tensor<float>::zeros({1, plan.slice_h, plan.slice_w});
  for (std::size_t i = 0; i < plan.windows.size(); ++i) {
    const PatchPlan::Window& win = plan.windows[i];
    const Tensor<float>& m = patch_maps[i];
    if (m.rank() != 3 || m.dim(0) != 1 || m.dim(1) != plan.patch_h ||
        m.dim(2) != plan.patch_w)
      throw ShapeError("merge: patch map extents mismatch");
    for (int y = win.ky0; y < win.ky1; ++y) {
      const float* src = m.data() +
                         std::size_t(y - win.y0) * std::size_t(plan.patch_w) +
                         std::size_t(win.kx0 - win.x0);
      float* dst = out.data() + std::size_t(y) * std::size_t(plan.slice_w) +
                   std::size_t(win.kx0);
      std::copy(src, src + (win.kx1 - win.kx0), dst);
    }
  }
  return out;
}

namespace {

std::size_t voxel_of(const VolumeGrid& vg, ViewPlane p, int index, int a,
                     int b) {
  switch (p) {
    case ViewPlane::axial: return vg.index(index, a, b);
    case ViewPlane::sagittal: return vg.index(a, b, index);
    default: return vg.index(a, index, b);
  }
}

// [1, 2*halfwidth+1, ph, pw] around (slice_index, y0, x0); the slice index is
// clamped at the volume edge.
Tensor<float> patch_from_volume(const VolumeGrid& vg, ViewPlane plane,
                                int slice_index, int halfwidth, int y0, int x0,
                                int ph, int pw) {
  const int count = view_slice_count(vg, plane);
  const int d = 2 * halfwidth + 1;
  Tensor<float> t = Tensor<float>::zeros({1, d, ph, pw});
  float* out = t.data();
  for (int dz = -halfwidth; dz <= halfwidth; ++dz) {
    const int si = std::clamp(slice_index + dz, 0, count - 1);
    for (int y = 0; y < ph; ++y)
      for (int x = 0; x < pw; ++x)
        *out++ = vg.intensity[voxel_of(vg, plane, si, y0 + y, x0 + x)];
  }
  return t;
}

}  // namespace

TrainingSample sample_one_patch(const VolumeGrid& vg, ViewPlane plane,
                                PatchSampler sampler, Rng& rng,
                                const GgpfnConfig& cfg) {
  const int count = view_slice_count(vg, plane);
  const auto [sh, sw] = view_slice_extents(vg, plane);
  const int ph = cfg.patch_h, pw = cfg.patch_w;
  if (ph > sh || pw > sw)
    throw ShapeError("training patch " + std::to_string(ph) + "x" +
                     std::to_string(pw) + " exceeds slice " +
                     std::to_string(sh) + "x" + std::to_string(sw));

  std::array<int, 6> box;
  const bool boxed =
      sampler == PatchSampler::label_box && label_bbox(vg, box);

  int ci, cy, cx;
  if (boxed) {
    // Volume-coordinate box mapped into (slice index, row, col) of the plane.
    std::array<int, 2> ir, ar, br;
    switch (plane) {
      case ViewPlane::axial:
        ir = {box[0], box[1]}; ar = {box[2], box[3]}; br = {box[4], box[5]};
        break;
      case ViewPlane::sagittal:
        ir = {box[4], box[5]}; ar = {box[0], box[1]}; br = {box[2], box[3]};
        break;
      default:
        ir = {box[2], box[3]}; ar = {box[0], box[1]}; br = {box[4], box[5]};
        break;
    }
    ci = ir[0] + rng.below_int(ir[1] - ir[0] + 1);
    cy = ar[0] + rng.below_int(ar[1] - ar[0] + 1);
    cx = br[0] + rng.below_int(br[1] - br[0] + 1);
  } else {
    ci = rng.below_int(count);
    cy = rng.below_int(sh);
    cx = rng.below_int(sw);
  }

  TrainingSample s;
  s.slice_index = ci;
  s.y0 = std::clamp(cy - ph / 2, 0, sh - ph);
  s.x0 = std::clamp(cx - pw / 2, 0, sw - pw);
  s.slice_h = sh;
  s.slice_w = sw;
  s.patch3d = patch_from_volume(vg, plane, ci, cfg.fusion_steps, s.y0, s.x0,
                                ph, pw);
  s.target = Tensor<float>::zeros({1, ph, pw});
  if (vg.has_labels()) {
    float* out = s.target.data();
    for (int y = 0; y < ph; ++y)
      for (int x = 0; x < pw; ++x)
        *out++ =
            float(vg.labels[voxel_of(vg, plane, ci, s.y0 + y, s.x0 + x)]);
  }
  return s;
}

std::vector<TrainingSample> sample_training_patches(const VolumeGrid& vg,
                                                    ViewPlane plane, Rng& rng,
                                                    const GgpfnConfig& cfg) {
  std::vector<TrainingSample> out;
  out.push_back(sample_one_patch(vg, plane, PatchSampler::uniform, rng, cfg));
  out.push_back(
      sample_one_patch(vg, plane, PatchSampler::label_box, rng, cfg));
  return out;
}

namespace {

// Control grid bilinearly upsampled to (ph, pw), then Gaussian-smoothed.
std::vector<double> dense_field(const std::vector<double>& ctrl, int grid,
                                int ph, int pw, double sigma) {
  std::vector<double> field(std::size_t(ph) * std::size_t(pw));
  for (int y = 0; y < ph; ++y) {
    const double u = ph > 1 ? double(y) * (grid - 1) / (ph - 1) : 0.0;
    const int u0 = std::min(int(u), grid - 2);
    const double fu = u - u0;
    for (int x = 0; x < pw; ++x) {
      const double v = pw > 1 ? double(x) * (grid - 1) / (pw - 1) : 0.0;
      const int v0 = std::min(int(v), grid - 2);
      const double fv = v - v0;
      const double a = ctrl[std::size_t(u0) * std::size_t(grid) + std::size_t(v0)];
      const double b = ctrl[std::size_t(u0) * std::size_t(grid) + std::size_t(v0) + 1];
      const double c = ctrl[std::size_t(u0 + 1) * std::size_t(grid) + std::size_t(v0)];
      const double d = ctrl[std::size_t(u0 + 1) * std::size_t(grid) + std::size_t(v0) + 1];
      field[std::size_t(y) * std::size_t(pw) + std::size_t(x)] =
          (1 - fu) * ((1 - fv) * a + fv * b) + fu * ((1 - fv) * c + fv * d);
    }
  }
  if (sigma <= 0) return field;

  const int r = int(std::ceil(2 * sigma));
  std::vector<double> k(std::size_t(2 * r + 1));
  double ksum = 0;
  for (int i = -r; i <= r; ++i) {
    k[std::size_t(i + r)] = std::exp(-0.5 * i * i / (sigma * sigma));
    ksum += k[std::size_t(i + r)];
  }
  for (double& v : k) v /= ksum;

  std::vector<double> tmp(field.size());
  for (int y = 0; y < ph; ++y)
    for (int x = 0; x < pw; ++x) {
      double acc = 0;
      for (int i = -r; i <= r; ++i)
        acc += k[std::size_t(i + r)] *
               field[std::size_t(y) * std::size_t(pw) +
                     std::size_t(std::clamp(x + i, 0, pw - 1))];
      tmp[std::size_t(y) * std::size_t(pw) + std::size_t(x)] = acc;
    }
  for (int y = 0; y < ph; ++y)
    for (int x = 0; x < pw; ++x) {
      double acc = 0;
      for (int i = -r; i <= r; ++i)
        acc += k[std::size_t(i + r)] *
               tmp[std::size_t(std::clamp(y + i, 0, ph - 1)) *
                       std::size_t(pw) +
                   std::size_t(x)];
      field[std::size_t(y) * std::size_t(pw) + std::size_t(x)] = acc;
    }
  return field;
}

}  // namespace

void augment(Tensor<float>& patch3d, Tensor<float>& target, Rng& rng,
             const AugmentParams& params) {
  if (!params.enabled) return;
  if (patch3d.rank() != 4 || target.rank() != 3)
    throw ShapeError("augment: expected [1,d,h,w] patch and [1,h,w] target");
  const int d = patch3d.dim(1), ph = patch3d.dim(2), pw = patch3d.dim(3);
  if (target.dim(1) != ph || target.dim(2) != pw)
    throw ShapeError("augment: target extents mismatch");
  if (params.grid < 2) throw ConfigError("augment grid must be >= 2");

  const double angle = rng.uniform(-params.max_angle_deg, params.max_angle_deg) *
                       std::numbers::pi / 180.0;
  const int g = params.grid;
  std::vector<double> cy(std::size_t(g) * std::size_t(g));
  std::vector<double> cx(std::size_t(g) * std::size_t(g));
  for (auto& v : cy) v = rng.uniform(-params.max_disp, params.max_disp);
  for (auto& v : cx) v = rng.uniform(-params.max_disp, params.max_disp);
  const std::vector<double> dy = dense_field(cy, g, ph, pw, params.sigma);
  const std::vector<double> dx = dense_field(cx, g, ph, pw, params.sigma);

  // One source-coordinate map shared by every slice and the target.
  const double cos_a = std::cos(angle), sin_a = std::sin(angle);
  const double oy = (ph - 1) / 2.0, ox = (pw - 1) / 2.0;
  std::vector<double> sy(dy.size()), sx(dx.size());
  for (int y = 0; y < ph; ++y)
    for (int x = 0; x < pw; ++x) {
      const std::size_t i = std::size_t(y) * std::size_t(pw) + std::size_t(x);
      const double ry = y - oy, rx = x - ox;
      sy[i] = oy + ry * cos_a - rx * sin_a + dy[i];
      sx[i] = ox + ry * sin_a + rx * cos_a + dx[i];
    }

  Tensor<float> warped = Tensor<float>::zeros(patch3d.shape());
  for (int z = 0; z < d; ++z) {
    const float* src = patch3d.data() + std::size_t(z) * std::size_t(ph) * std::size_t(pw);
    float* dst = warped.data() + std::size_t(z) * std::size_t(ph) * std::size_t(pw);
    for (std::size_t i = 0; i < sy.size(); ++i) {
      const double yc = std::clamp(sy[i], 0.0, double(ph - 1));
      const double xc = std::clamp(sx[i], 0.0, double(pw - 1));
      const int y0 = int(yc), x0 = int(xc);
      const int y1 = std::min(y0 + 1, ph - 1), x1 = std::min(x0 + 1, pw - 1);
      const double fy = yc - y0, fx = xc - x0;
      dst[i] = float((1 - fy) * ((1 - fx) * src[std::size_t(y0) * std::size_t(pw) + std::size_t(x0)] +
                                 fx * src[std::size_t(y0) * std::size_t(pw) + std::size_t(x1)]) +
                     fy * ((1 - fx) * src[std::size_t(y1) * std::size_t(pw) + std::size_t(x0)] +
                           fx * src[std::size_t(y1) * std::size_t(pw) + std::size_t(x1)]));
    }
  }
  Tensor<float> warped_t = Tensor<float>::zeros(target.shape());
  {
    const float* src = target.data();
    float* dst = warped_t.data();
    for (std::size_t i = 0; i < sy.size(); ++i) {
      const int y = std::clamp(int(sy[i] + 0.5), 0, ph - 1);
      const int x = std::clamp(int(sx[i] + 0.5), 0, pw - 1);
      dst[i] = src[std::size_t(y) * std::size_t(pw) + std::size_t(x)];
    }
  }
  patch3d = warped;
  target = warped_t;
}

}  // namespace ggpfn
