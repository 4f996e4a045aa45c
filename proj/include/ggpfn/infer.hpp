#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "ggpfn/config.hpp"
#include "ggpfn/params.hpp"
#include "ggpfn/tensor.hpp"
#include "ggpfn/volume.hpp"

namespace ggpfn {

// Probability map for one slice from its neighbor stack [1, 2T+1, h, w]:
// downsample the central slice for the global branch, tile the slice into
// patches, run encoder + gathered context + decoder per patch, and merge the
// kept regions. Patch extents larger than the slice are shrunk to the slice
// (floored to a multiple of 8).
Tensor<float> segment_slice(const Tensor<float>& stack, const ParamStore& store,
                            const GgpfnConfig& cfg);

// Every slice of the plane segmented and re-stacked into volume layout. The
// result carries probabilities in `intensity` and no labels.
VolumeGrid segment_volume_view(const VolumeGrid& vg, ViewPlane plane,
                               const ParamStore& store,
                               const GgpfnConfig& cfg);

// Voxelwise weighted average of per-view probability volumes
// (axial, sagittal, coronal order; weights must sum to 1).
VolumeGrid fuse_p3d(const VolumeGrid& va, const VolumeGrid& vs,
                    const VolumeGrid& vc, const std::array<double, 3>& weights);

std::vector<std::uint8_t> threshold_mask(const VolumeGrid& prob,
                                         double t = 0.5);

// 2|P∩G| / (|P|+|G|); both masks empty counts as perfect agreement (1.0).
double dsc(const std::vector<std::uint8_t>& pred,
           const std::vector<std::uint8_t>& gt);

struct PrPoint {
  double threshold;
  double precision;
  double recall;
  double f_score;
};

// Precision/recall/F at thresholds (i+1)/(n+1), i = 0..n-1. Precision 0/0 is
// taken as 1; an empty ground truth leaves recall undefined and is an error.
std::vector<PrPoint> pr_curve(const VolumeGrid& prob,
                              const std::vector<std::uint8_t>& gt,
                              int n_thresholds);

}  // namespace ggpfn
