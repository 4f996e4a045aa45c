#include "ggpfn/volume.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>

#include "ggpfn/rng.hpp"

namespace ggpfn {

namespace {

void put_u16(std::vector<std::uint8_t>& b, std::uint16_t v) {
  b.push_back(std::uint8_t(v & 0xff));
  b.push_back(std::uint8_t(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& b, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back(std::uint8_t((v >> (8 * i)) & 0xff));
}

void put_f32(std::vector<std::uint8_t>& b, float v) {
  put_u32(b, std::bit_cast<std::uint32_t>(v));
}

std::uint16_t get_u16(const std::uint8_t* p) {
  return std::uint16_t(p[0] | (std::uint16_t(p[1]) << 8));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) |
         (std::uint32_t(p[2]) << 16) | (std::uint32_t(p[3]) << 24);
}

float get_f32(const std::uint8_t* p) {
  return std::bit_cast<float>(get_u32(p));
}

std::int16_t get_i16(const std::uint8_t* p) {
  return std::bit_cast<std::int16_t>(get_u16(p));
}

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return bytes;
}

void write_file(const std::string& path, const std::vector<std::uint8_t>& b) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write: " + path);
  out.write(reinterpret_cast<const char*>(b.data()),
            std::streamsize(b.size()));
  if (!out) throw IoError("write failed: " + path);
}

constexpr char kRawMagic[8] = {'G', 'G', 'P', 'F', 'N', 'V', 'O', 'L'};

VolumeGrid load_raw(const std::vector<std::uint8_t>& b,
                    const std::string& path) {
  if (b.size() < 8 + 4 + 12 + 12 + 4 ||
      std::memcmp(b.data(), kRawMagic, 8) != 0)
    throw IoError("not a raw volume file: " + path);
  std::size_t o = 8;
  const std::uint32_t version = get_u32(&b[o]);
  o += 4;
  if (version != 1)
    throw IoError("unsupported raw volume version " + std::to_string(version) +
                  ": " + path);
  VolumeGrid vg;
  vg.l = int(get_u32(&b[o]));
  vg.h = int(get_u32(&b[o + 4]));
  vg.w = int(get_u32(&b[o + 8]));
  o += 12;
  for (int i = 0; i < 3; ++i) vg.spacing[std::size_t(i)] = get_f32(&b[o + 4 * std::size_t(i)]);
  o += 12;
  const std::uint32_t flags = get_u32(&b[o]);
  o += 4;
  if (vg.l <= 0 || vg.h <= 0 || vg.w <= 0)
    throw IoError("bad extents in: " + path);
  const std::size_t n = vg.voxels();
  const bool with_labels = (flags & 1u) != 0;
  const std::size_t need = o + 4 * n + (with_labels ? n : 0);
  if (b.size() != need)
    throw IoError("truncated or oversized volume file: " + path);
  vg.intensity.resize(n);
  for (std::size_t i = 0; i < n; ++i) vg.intensity[i] = get_f32(&b[o + 4 * i]);
  o += 4 * n;
  if (with_labels) {
    vg.labels.assign(b.begin() + std::ptrdiff_t(o), b.begin() + std::ptrdiff_t(o + n));
    for (std::uint8_t v : vg.labels)
      if (v > 1) throw IoError("labels not binary in: " + path);
  }
  return vg;
}

void save_raw(const VolumeGrid& vg, const std::string& path) {
  std::vector<std::uint8_t> b;
  b.reserve(44 + 5 * vg.voxels());
  b.insert(b.end(), kRawMagic, kRawMagic + 8);
  put_u32(b, 1);
  put_u32(b, std::uint32_t(vg.l));
  put_u32(b, std::uint32_t(vg.h));
  put_u32(b, std::uint32_t(vg.w));
  for (float s : vg.spacing) put_f32(b, s);
  put_u32(b, vg.has_labels() ? 1u : 0u);
  for (float v : vg.intensity) put_f32(b, v);
  if (vg.has_labels()) b.insert(b.end(), vg.labels.begin(), vg.labels.end());
  write_file(path, b);
}

VolumeGrid load_nifti(const std::vector<std::uint8_t>& b,
                      const std::string& path) {
  if (b.size() < 348) throw IoError("file shorter than a nifti1 header: " + path);
  if (get_u32(&b[0]) != 348)
    throw IoError("not a little-endian nifti1 file (header size != 348): " +
                  path);
  if (!(b[344] == 'n' && b[345] == '+' && b[346] == '1'))
    throw IoError("not a single-file nifti1 (magic != n+1): " + path);
  const std::int16_t ndim = get_i16(&b[40]);
  if (ndim < 1 || ndim > 7)
    throw IoError("bad nifti dim[0] (byte order?): " + path);
  auto ext = [&](int i) {
    if (ndim < i) return 1;
    const std::int16_t d = get_i16(&b[40 + 2 * std::size_t(i)]);
    return d > 0 ? int(d) : 1;
  };
  const int nx = ext(1), ny = ext(2), nz = ext(3);
  for (int i = 4; i <= ndim; ++i)
    if (ext(i) != 1)
      throw IoError("nifti volume has more than 3 non-trivial dims: " + path);
  const std::int16_t datatype = get_i16(&b[70]);
  if (datatype != 4 && datatype != 16)
    throw IoError("unsupported nifti datatype " + std::to_string(datatype) +
                  " (int16 and float32 only): " + path);
  const std::size_t elem = datatype == 4 ? 2 : 4;
  const float vox_offset_f = get_f32(&b[108]);
  if (vox_offset_f < 348.f)
    throw IoError("bad nifti vox_offset: " + path);
  const std::size_t off = std::size_t(vox_offset_f);
  const float slope = get_f32(&b[112]);
  const float inter = get_f32(&b[116]);
  const std::size_t n = std::size_t(nx) * std::size_t(ny) * std::size_t(nz);
  if (b.size() < off + n * elem)
    throw IoError("truncated nifti body: " + path);

  VolumeGrid vg;
  vg.l = nz;
  vg.h = ny;
  vg.w = nx;
  auto pd = [&](int i) {
    const float v = get_f32(&b[76 + 4 * std::size_t(i)]);
    return v > 0.f ? v : 1.f;
  };
  vg.spacing = {pd(3), pd(2), pd(1)};
  vg.intensity.resize(n);
  // nifti stores x fastest, then y, then z — the same linear order as the
  // volume layout here, so one pass suffices.
  for (std::size_t i = 0; i < n; ++i) {
    float v;
    if (datatype == 4)
      v = float(get_i16(&b[off + 2 * i]));
    else
      v = get_f32(&b[off + 4 * i]);
    if (slope != 0.f) v = slope * v + inter;
    vg.intensity[i] = v;
  }
  return vg;
}

void save_nifti(const VolumeGrid& vg, const std::string& path) {
  std::vector<std::uint8_t> b(348, 0);
  auto set_u32 = [&](std::size_t o, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) b[o + std::size_t(i)] = std::uint8_t((v >> (8 * i)) & 0xff);
  };
  auto set_u16 = [&](std::size_t o, std::uint16_t v) {
    b[o] = std::uint8_t(v & 0xff);
    b[o + 1] = std::uint8_t(v >> 8);
  };
  auto set_f32 = [&](std::size_t o, float v) {
    set_u32(o, std::bit_cast<std::uint32_t>(v));
  };
  set_u32(0, 348);
  set_u16(40, 3);  // dim[0]
  set_u16(42, std::uint16_t(vg.w));
  set_u16(44, std::uint16_t(vg.h));
  set_u16(46, std::uint16_t(vg.l));
  for (std::size_t i = 48; i < 56; i += 2) set_u16(i, 1);  // dim[4..7]
  set_u16(70, 16);  // float32
  set_u16(72, 32);
  set_f32(76, 1.f);  // pixdim[0]
  set_f32(80, vg.spacing[2]);
  set_f32(84, vg.spacing[1]);
  set_f32(88, vg.spacing[0]);
  set_f32(108, 352.f);  // vox_offset
  set_f32(112, 1.f);    // scl_slope
  set_f32(116, 0.f);    // scl_inter
  b[344] = 'n';
  b[345] = '+';
  b[346] = '1';
  b.resize(352, 0);
  for (float v : vg.intensity) put_f32(b, v);
  write_file(path, b);
}

}  // namespace

std::string to_string(ViewPlane p) {
  switch (p) {
    case ViewPlane::axial: return "axial";
    case ViewPlane::sagittal: return "sagittal";
    default: return "coronal";
  }
}

ViewPlane view_from_string(const std::string& s) {
  if (s == "axial") return ViewPlane::axial;
  if (s == "sagittal") return ViewPlane::sagittal;
  if (s == "coronal") return ViewPlane::coronal;
  throw ConfigError("view must be axial, sagittal or coronal, got: " + s);
}

void VolumeGrid::validate() const {
  if (l <= 0 || h <= 0 || w <= 0) throw IoError("volume extents must be positive");
  for (float s : spacing)
    if (!(s > 0.f)) throw IoError("volume spacing must be positive");
  if (intensity.size() != voxels())
    throw IoError("volume intensity size does not match extents");
  if (!labels.empty()) {
    if (labels.size() != voxels())
      throw IoError("volume label size does not match extents");
    for (std::uint8_t v : labels)
      if (v > 1) throw IoError("volume labels must be binary");
  }
}

VolumeGrid load_volume(const std::string& path, VolumeFormat format) {
  const std::vector<std::uint8_t> bytes = read_file(path);
  VolumeGrid vg = format == VolumeFormat::raw_v1 ? load_raw(bytes, path)
                                                 : load_nifti(bytes, path);
  vg.validate();
  return vg;
}

VolumeGrid load_volume(const std::string& path) {
  return load_volume(path, format_from_path(path));
}

void save_volume(const VolumeGrid& vg, const std::string& path,
                 VolumeFormat format) {
  vg.validate();
  if (format == VolumeFormat::raw_v1)
    save_raw(vg, path);
  else
    save_nifti(vg, path);
}

VolumeFormat format_from_path(const std::string& path) {
  if (path.size() >= 4 && path.compare(path.size() - 4, 4, ".nii") == 0)
    return VolumeFormat::nifti1_subset;
  return VolumeFormat::raw_v1;
}

int view_slice_count(const VolumeGrid& vg, ViewPlane p) {
  switch (p) {
    case ViewPlane::axial: return vg.l;
    case ViewPlane::sagittal: return vg.w;
    default: return vg.h;
  }
}

std::array<int, 2> view_slice_extents(const VolumeGrid& vg, ViewPlane p) {
  switch (p) {
    case ViewPlane::axial: return {vg.h, vg.w};
    case ViewPlane::sagittal: return {vg.l, vg.h};
    default: return {vg.l, vg.w};
  }
}

namespace {

// Copies one view slice from `src` (volume layout) into `dst` (row-major
// slice of the plane's extents).
template <class Src, class E>
void copy_slice(const VolumeGrid& vg, ViewPlane p, int index, const Src& src,
                E* dst) {
  const auto [a, bdim] = view_slice_extents(vg, p);
  for (int i = 0; i < a; ++i)
    for (int j = 0; j < bdim; ++j) {
      std::size_t v;
      switch (p) {
        case ViewPlane::axial: v = vg.index(index, i, j); break;
        case ViewPlane::sagittal: v = vg.index(i, j, index); break;
        default: v = vg.index(i, index, j); break;
      }
      dst[std::size_t(i) * std::size_t(bdim) + std::size_t(j)] = E(src[v]);
    }
}

void check_view_index(const VolumeGrid& vg, ViewPlane p, int index) {
  if (index < 0 || index >= view_slice_count(vg, p))
    throw ShapeError("view slice index out of range");
}

}  // namespace

Tensor<float> extract_view_slice(const VolumeGrid& vg, ViewPlane p,
                                 int index) {
  check_view_index(vg, p, index);
  const auto [a, b] = view_slice_extents(vg, p);
  Tensor<float> t = Tensor<float>::zeros({1, a, b});
  copy_slice(vg, p, index, vg.intensity, t.data());
  return t;
}

Tensor<float> extract_view_label(const VolumeGrid& vg, ViewPlane p,
                                 int index) {
  check_view_index(vg, p, index);
  if (!vg.has_labels()) throw Error("volume has no labels");
  const auto [a, b] = view_slice_extents(vg, p);
  Tensor<float> t = Tensor<float>::zeros({1, a, b});
  copy_slice(vg, p, index, vg.labels, t.data());
  return t;
}

std::vector<Tensor<float>> extract_view_slices(const VolumeGrid& vg,
                                               ViewPlane p) {
  std::vector<Tensor<float>> out;
  const int n = view_slice_count(vg, p);
  out.reserve(std::size_t(n));
  for (int i = 0; i < n; ++i) out.push_back(extract_view_slice(vg, p, i));
  return out;
}

Tensor<float> extract_neighbor_stack(const VolumeGrid& vg, ViewPlane p,
                                     int index, int halfwidth) {
  check_view_index(vg, p, index);
  if (halfwidth < 0) throw ShapeError("negative neighbor halfwidth");
  const auto [a, b] = view_slice_extents(vg, p);
  const int d = 2 * halfwidth + 1;
  const int count = view_slice_count(vg, p);
  Tensor<float> t = Tensor<float>::zeros({1, d, a, b});
  for (int dz = -halfwidth; dz <= halfwidth; ++dz) {
    const int i = std::clamp(index + dz, 0, count - 1);
    copy_slice(vg, p, i, vg.intensity,
               t.data() + std::size_t(dz + halfwidth) * std::size_t(a) *
                              std::size_t(b));
  }
  return t;
}

std::vector<float> stack_view_slices(const std::vector<Tensor<float>>& slices,
                                     int l, int h, int w, ViewPlane p) {
  VolumeGrid shape;
  shape.l = l;
  shape.h = h;
  shape.w = w;
  const int n = view_slice_count(shape, p);
  const auto [a, b] = view_slice_extents(shape, p);
  if (int(slices.size()) != n)
    throw ShapeError("stack_view_slices: slice count mismatch");
  std::vector<float> vol(std::size_t(l) * std::size_t(h) * std::size_t(w));
  for (int i = 0; i < n; ++i) {
    const Tensor<float>& s = slices[std::size_t(i)];
    if (s.rank() != 3 || s.dim(0) != 1 || s.dim(1) != a || s.dim(2) != b)
      throw ShapeError("stack_view_slices: slice extents mismatch");
    for (int y = 0; y < a; ++y)
      for (int x = 0; x < b; ++x) {
        std::size_t v;
        switch (p) {
          case ViewPlane::axial: v = shape.index(i, y, x); break;
          case ViewPlane::sagittal: v = shape.index(y, x, i); break;
          default: v = shape.index(y, i, x); break;
        }
        vol[v] = s.data()[std::size_t(y) * std::size_t(b) + std::size_t(x)];
      }
  }
  return vol;
}

bool label_bbox(const VolumeGrid& vg, std::array<int, 6>& box) {
  if (!vg.has_labels()) return false;
  box = {vg.l, -1, vg.h, -1, vg.w, -1};
  for (int z = 0; z < vg.l; ++z)
    for (int y = 0; y < vg.h; ++y)
      for (int x = 0; x < vg.w; ++x)
        if (vg.labels[vg.index(z, y, x)]) {
          box[0] = std::min(box[0], z);
          box[1] = std::max(box[1], z);
          box[2] = std::min(box[2], y);
          box[3] = std::max(box[3], y);
          box[4] = std::min(box[4], x);
          box[5] = std::max(box[5], x);
        }
  return box[1] >= 0;
}

VolumeGrid make_phantom(std::uint64_t seed, std::array<int, 3> extents,
                        int n_blobs) {
  for (int e : extents)
    if (e < 16) throw ConfigError("phantom extents must be >= 16 per axis");
  if (n_blobs < 1) throw ConfigError("phantom needs at least one blob");

  VolumeGrid vg;
  vg.l = extents[0];
  vg.h = extents[1];
  vg.w = extents[2];
  vg.spacing = {2.5f, 1.f, 1.f};
  const std::size_t n = vg.voxels();
  vg.intensity.resize(n);
  vg.labels.assign(n, 0);

  Rng rng(derive_seed(seed, "phantom"));

  // Smooth background: quadratic polynomial in normalized coordinates.
  std::array<double, 9> c{};
  for (double& v : c) v = rng.uniform(-0.08, 0.08);

  // Ellipsoids, each drawn as center then semi-axes; kept away from the
  // boundary so full blobs always fit inside.
  struct Blob {
    double cz, cy, cx, rz, ry, rx;
  };
  std::vector<Blob> blobs(static_cast<std::size_t>(n_blobs));
  for (Blob& bl : blobs) {
    bl.cz = rng.uniform(0.22, 0.78) * (vg.l - 1);
    bl.cy = rng.uniform(0.22, 0.78) * (vg.h - 1);
    bl.cx = rng.uniform(0.22, 0.78) * (vg.w - 1);
    bl.rz = rng.uniform(0.09, 0.15) * vg.l;
    bl.ry = rng.uniform(0.09, 0.15) * vg.h;
    bl.rx = rng.uniform(0.09, 0.15) * vg.w;
  }

  std::size_t i = 0;
  for (int z = 0; z < vg.l; ++z)
    for (int y = 0; y < vg.h; ++y)
      for (int x = 0; x < vg.w; ++x, ++i) {
        for (const Blob& bl : blobs) {
          const double dz = (z - bl.cz) / bl.rz;
          const double dy = (y - bl.cy) / bl.ry;
          const double dx = (x - bl.cx) / bl.rx;
          if (dz * dz + dy * dy + dx * dx <= 1.0) {
            vg.labels[i] = 1;
            break;
          }
        }
      }

  i = 0;
  for (int z = 0; z < vg.l; ++z) {
    const double zn = double(z) / (vg.l - 1);
    for (int y = 0; y < vg.h; ++y) {
      const double yn = double(y) / (vg.h - 1);
      for (int x = 0; x < vg.w; ++x, ++i) {
        const double xn = double(x) / (vg.w - 1);
        double v = 0.25 + c[0] * zn + c[1] * yn + c[2] * xn + c[3] * zn * zn +
                   c[4] * yn * yn + c[5] * xn * xn + c[6] * zn * yn +
                   c[7] * yn * xn + c[8] * zn * xn;
        if (vg.labels[i]) v += 0.35;
        v += rng.uniform(-0.05, 0.05);
        vg.intensity[i] = float(v);
      }
    }
  }
  return vg;
}

}  // namespace ggpfn
