#pragma once

#include <vector>

#include "ggpfn/config.hpp"
#include "ggpfn/rng.hpp"
#include "ggpfn/tensor.hpp"
#include "ggpfn/volume.hpp"

namespace ggpfn {

// Overlapping patch windows over a slice plus the keep-rectangle of each: the
// region it alone contributes when merging. Keep-rectangles split every
// overlap at its midpoint, so they partition the slice exactly.
struct PatchPlan {
  struct Window {
    int y0, x0;                  // top-left of the patch window
    int ky0, ky1, kx0, kx1;      // kept region, absolute, half-open
  };
  int slice_h = 0, slice_w = 0;
  int patch_h = 0, patch_w = 0;
  int overlap = 0;
  std::vector<Window> windows;
};

// Windows at 0, stride, 2*stride, ... (stride = patch - overlap) with the
// final one clamped to the boundary.
PatchPlan decompose(int slice_h, int slice_w, int patch_h, int patch_w,
                    int overlap);

// One [1, patch_h, patch_w] map per window; every output pixel is copied from
// the unique window that keeps it.
Tensor<float> merge(const std::vector<Tensor<float>>& patch_maps,
                    const PatchPlan& plan);

// --- training samples ---

struct TrainingSample {
  Tensor<float> patch3d;  // [1, 2T+1, ph, pw]
  Tensor<float> target;   // [1, ph, pw], binary
  int slice_index = 0;    // central slice in the chosen plane
  int y0 = 0, x0 = 0;     // patch window in slice coordinates
  int slice_h = 0, slice_w = 0;
};

enum class PatchSampler {
  uniform,   // center anywhere in the volume
  label_box  // center inside the label bounding box
};

struct AugmentParams {
  bool enabled = true;
  double max_angle_deg = 15.0;
  int grid = 8;           // control points per axis of the displacement field
  double sigma = 8.0;     // Gaussian smoothing of the field, in pixels
  double max_disp = 10.0; // control-point displacement bound, in pixels
};

// One patch with the requested center sampler; `label_box` falls back to
// uniform when the volume has no foreground. The window is clamped inside
// slice bounds and the 2T+1 neighbor slices replicate at the volume edge.
TrainingSample sample_one_patch(const VolumeGrid& vg, ViewPlane plane,
                                PatchSampler sampler, Rng& rng,
                                const GgpfnConfig& cfg);

// The balanced pair: one uniform draw plus one label-box draw.
std::vector<TrainingSample> sample_training_patches(const VolumeGrid& vg,
                                                    ViewPlane plane, Rng& rng,
                                                    const GgpfnConfig& cfg);

// In-plane rotation followed by an elastic deformation; the same warp is
// applied to every slice of the patch (bilinear) and to the target (nearest,
// so masks stay binary).
void augment(Tensor<float>& patch3d, Tensor<float>& target, Rng& rng,
             const AugmentParams& params);

}  // namespace ggpfn
