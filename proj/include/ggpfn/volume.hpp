#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "ggpfn/errors.hpp"
#include "ggpfn/tensor.hpp"

namespace ggpfn {

enum class ViewPlane { axial, sagittal, coronal };

std::string to_string(ViewPlane p);
ViewPlane view_from_string(const std::string& s);

// A scalar volume with optional binary labels. Voxel (z, y, x) lives at
// flat index (z*h + y)*w + x: z indexes the l slices, y the h rows, x the w
// columns.
struct VolumeGrid {
  int l = 0, h = 0, w = 0;
  std::array<float, 3> spacing = {1.f, 1.f, 1.f};
  std::vector<float> intensity;
  std::vector<std::uint8_t> labels;  // empty, or one {0,1} byte per voxel

  bool has_labels() const { return !labels.empty(); }
  std::size_t voxels() const {
    return std::size_t(l) * std::size_t(h) * std::size_t(w);
  }
  std::size_t index(int z, int y, int x) const {
    return (std::size_t(z) * std::size_t(h) + std::size_t(y)) *
               std::size_t(w) +
           std::size_t(x);
  }
  void validate() const;
};

enum class VolumeFormat { raw_v1, nifti1_subset };

// raw_v1: fixed little-endian container (magic, version, extents, spacing,
// flags, float32 intensities, optional uint8 labels).
// nifti1_subset: uncompressed single-file .nii, little-endian, int16 or
// float32 data, scl_slope/scl_inter applied; orientation fields are ignored
// (identity assumed) and labels are not carried.
VolumeGrid load_volume(const std::string& path, VolumeFormat format);
VolumeGrid load_volume(const std::string& path);  // format from extension
void save_volume(const VolumeGrid& vg, const std::string& path,
                 VolumeFormat format);

// .nii / .nii.gz-free heuristic: *.nii selects nifti1_subset, anything else
// raw_v1.
VolumeFormat format_from_path(const std::string& path);

// --- view geometry ---

// Number of slices a plane yields: axial l, sagittal w, coronal h.
int view_slice_count(const VolumeGrid& vg, ViewPlane p);
// Per-slice extents: axial (h,w), sagittal (l,h), coronal (l,w).
std::array<int, 2> view_slice_extents(const VolumeGrid& vg, ViewPlane p);

Tensor<float> extract_view_slice(const VolumeGrid& vg, ViewPlane p, int index);
Tensor<float> extract_view_label(const VolumeGrid& vg, ViewPlane p, int index);
std::vector<Tensor<float>> extract_view_slices(const VolumeGrid& vg,
                                               ViewPlane p);

// [1, 2*halfwidth+1, a, b] around `index`, replicating the boundary slice
// beyond the volume.
Tensor<float> extract_neighbor_stack(const VolumeGrid& vg, ViewPlane p,
                                     int index, int halfwidth);

// Inverse of extract_view_slices: per-slice maps back into volume layout.
std::vector<float> stack_view_slices(const std::vector<Tensor<float>>& slices,
                                     int l, int h, int w, ViewPlane p);

// Inclusive label bounding box {z0,z1,y0,y1,x0,x1}; false when no labels set.
bool label_bbox(const VolumeGrid& vg, std::array<int, 6>& box);

// Deterministic synthetic volume: smooth polynomial background, a union of
// `n_blobs` random ellipsoids as labels with label-correlated brightness, and
// uniform noise. Integer-seeded arithmetic only, so results are bit-identical
// across platforms.
VolumeGrid make_phantom(std::uint64_t seed, std::array<int, 3> extents,
                        int n_blobs = 3);

}  // namespace ggpfn
