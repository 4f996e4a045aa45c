#include "ggpfn/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <fstream>
#include <vector>

#include "ggpfn/model.hpp"

namespace ggpfn {

namespace {

constexpr char kMagic[8] = {'G', 'G', 'P', 'F', 'N', 'C', 'K', 'P'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::vector<std::uint8_t>& b, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back(std::uint8_t(v >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t>& b, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) b.push_back(std::uint8_t(v >> (8 * i)));
}

void put_f32(std::vector<std::uint8_t>& b, float v) {
  put_u32(b, std::bit_cast<std::uint32_t>(v));
}

struct Cursor {
  const std::uint8_t* p;
  std::size_t left;

  void need(std::size_t n) const {
    if (n > left) throw IoError("truncated checkpoint");
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(p[i]) << (8 * i);
    p += 4;
    left -= 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(p[i]) << (8 * i);
    p += 8;
    left -= 8;
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(p), n);
    p += n;
    left -= n;
    return s;
  }
};

void put_record(std::vector<std::uint8_t>& b, const std::string& name,
                const Tensor<float>& t) {
  put_u32(b, std::uint32_t(name.size()));
  b.insert(b.end(), name.begin(), name.end());
  put_u32(b, std::uint32_t(t.rank()));
  for (int i = 0; i < t.rank(); ++i) put_u32(b, std::uint32_t(t.dim(i)));
  for (std::size_t i = 0; i < t.size(); ++i) put_f32(b, t[i]);
}

}  // namespace

void save_checkpoint(const std::string& path, const GgpfnConfig& cfg,
                     const ParamStore& store) {
  std::vector<std::uint8_t> b;
  b.insert(b.end(), kMagic, kMagic + 8);
  put_u32(b, kVersion);
  put_u64(b, store.opt_step);
  put_u64(b, store.epochs_done);
  const std::string cfg_text = cfg.to_text();
  put_u32(b, std::uint32_t(cfg_text.size()));
  b.insert(b.end(), cfg_text.begin(), cfg_text.end());
  put_u32(b, std::uint32_t(3 * store.names().size()));
  for (const std::string& name : store.names()) {
    const auto& e = store.entry(name);
    put_record(b, name, e.value);
    put_record(b, "opt.m/" + name, e.m);
    put_record(b, "opt.v/" + name, e.v);
  }

  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open for writing: " + path);
  f.write(reinterpret_cast<const char*>(b.data()),
          std::streamsize(b.size()));
  if (!f) throw IoError("write failed: " + path);
}

GgpfnConfig load_checkpoint(const std::string& path, ParamStore& store) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open: " + path);
  std::vector<std::uint8_t> b((std::istreambuf_iterator<char>(f)),
                              std::istreambuf_iterator<char>());

  Cursor c{b.data(), b.size()};
  if (c.str(8) != std::string(kMagic, kMagic + 8))
    throw IoError("not a checkpoint file: " + path);
  const std::uint32_t version = c.u32();
  if (version != kVersion)
    throw IoError("unsupported checkpoint version " + std::to_string(version));
  const std::uint64_t opt_step = c.u64();
  const std::uint64_t epochs_done = c.u64();
  const std::uint32_t cfg_len = c.u32();
  const GgpfnConfig cfg = GgpfnConfig::from_text(c.str(cfg_len));

  ParamStore out;
  const std::uint32_t n_records = c.u32();
  for (std::uint32_t r = 0; r < n_records; ++r) {
    const std::uint32_t name_len = c.u32();
    if (name_len > 4096) throw IoError("implausible record name length");
    const std::string name = c.str(name_len);
    const std::uint32_t rank = c.u32();
    if (rank < 1 || rank > 8) throw IoError("implausible record rank");
    std::vector<int> shape(rank);
    std::size_t n = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
      shape[i] = int(c.u32());
      if (shape[i] < 1) throw IoError("implausible record extent");
      n *= std::size_t(shape[i]);
    }
    c.need(4 * n);
    Tensor<float> t = Tensor<float>::zeros(shape);
    for (std::size_t i = 0; i < n; ++i) t.data()[i] = c.f32();

    if (name.rfind("opt.m/", 0) == 0 || name.rfind("opt.v/", 0) == 0) {
      const std::string base = name.substr(6);
      if (!out.has(base))
        throw IoError("moment record before value record: " + name);
      auto& e = out.entry(base);
      Tensor<float>& slot = name[4] == 'm' ? e.m : e.v;
      if (!slot.same_shape(t))
        throw IoError("moment extents mismatch for " + base);
      slot = std::move(t);
    } else {
      out.add(name, std::move(t));
    }
  }
  if (c.left != 0) throw IoError("trailing bytes in checkpoint: " + path);

  // The stored parameter set must be exactly what this config builds.
  const std::vector<ParamSpec> specs = enumerate_params(cfg);
  if (specs.size() != out.names().size())
    throw IoError("checkpoint parameter count mismatch");
  for (const ParamSpec& spec : specs) {
    if (!out.has(spec.name))
      throw IoError("checkpoint missing parameter: " + spec.name);
    if (out.at(spec.name).shape() != spec.shape)
      throw IoError("checkpoint extents mismatch for " + spec.name);
  }

  out.opt_step = opt_step;
  out.epochs_done = epochs_done;
  store = std::move(out);
  return cfg;
}

}  // namespace ggpfn
