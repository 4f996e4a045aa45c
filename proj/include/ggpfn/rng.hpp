#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace ggpfn {

// Deterministic 64-bit generator (splitmix64). Produces the same sequence on
// every platform for a given seed, which the std distributions do not
// guarantee.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform() {
    return double(next_u64() >> 11) * (1.0 / 9007199254740992.0);
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n), n > 0. Modulo bias is negligible for the
  // ranges used here (volume extents, sample counts).
  std::uint64_t below(std::uint64_t n) { return next_u64() % n; }

  int below_int(int n) { return int(below(std::uint64_t(n))); }

 private:
  std::uint64_t state_;
};

// Derives an independent stream seed from a base seed and a tag. Used to give
// every pipeline stage (init, per-stage data order, augmentation) its own
// reproducible stream.
inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag) {
  std::uint64_t h = 0xcbf29ce484222325ULL ^ seed;
  for (char c : tag) {
    h ^= std::uint64_t(static_cast<unsigned char>(c));
    h *= 0x100000001b3ULL;
  }
  // One splitmix scramble so nearby tags do not yield nearby states.
  h += 0x9e3779b97f4a7c15ULL;
  h = (h ^ (h >> 30)) * 0xbf58476d1ce4e5b9ULL;
  h = (h ^ (h >> 27)) * 0x94d049bb133111ebULL;
  return h ^ (h >> 31);
}

}  // namespace ggpfn
