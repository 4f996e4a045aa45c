#pragma once

#include <array>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "ggpfn/errors.hpp"

namespace ggpfn {

// Plain-text `key = value` settings ('#' starts a comment, blank lines
// ignored). Readers consume keys as they go; anything left unconsumed is an
// unknown key and rejected, so typos fail loudly instead of silently running
// with defaults.
class KvReader {
 public:
  static KvReader from_file(const std::string& path);
  static KvReader from_text(const std::string& text);

  // Command-line override; replaces any file value.
  void set(const std::string& key, const std::string& value);

  bool has(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& fallback);
  long long get_int(const std::string& key, long long fallback);
  double get_double(const std::string& key, double fallback);
  bool get_bool(const std::string& key, bool fallback);
  std::vector<long long> get_ints(const std::string& key,
                                  const std::vector<long long>& fallback);
  std::vector<double> get_doubles(const std::string& key,
                                  const std::vector<double>& fallback);

  // Keys never consumed by any getter.
  std::vector<std::string> unused() const;
  void reject_unused() const;  // throws ConfigError naming the first bad key

 private:
  std::map<std::string, std::string> kv_;
  mutable std::set<std::string> used_;
};

enum class FusionMode { progressive, one_off };

std::string to_string(FusionMode m);
FusionMode fusion_mode_from_string(const std::string& s);

// Architecture and loss hyperparameters. `fusion_steps` is the number of
// depth-shrinking 3D convolutions; each consumes two slices, so the network
// ingests 2*fusion_steps+1 slices and emits features for the central one.
struct GgpfnConfig {
  int fusion_steps = 15;
  std::array<int, 4> group_convs = {4, 2, 3, 6};  // per encoder group, sums to fusion_steps
  std::array<int, 4> channels = {16, 32, 64, 128};
  std::array<int, 3> decoder_channels = {64, 32, 16};  // first entry at patch/4
  std::array<int, 5> global_channels = {16, 32, 64, 64, 128};
  int patch_h = 256;
  int patch_w = 256;
  int overlap = 64;
  int global_h = 224;
  int global_w = 224;
  double alpha = 0.5;
  double beta = 0.5;
  std::array<double, 3> view_weights = {0.8, 0.1, 0.1};  // axial, sagittal, coronal
  FusionMode fusion_mode = FusionMode::progressive;
  bool global_enabled = true;

  int required_depth() const { return 2 * fusion_steps + 1; }

  // Throws ConfigError describing the first violated constraint.
  void validate() const;

  // Canonical `key = value` serialization; parses back via from_kv.
  std::string to_text() const;
  void read_kv(KvReader& kv);  // overwrites fields present in kv
  static GgpfnConfig from_text(const std::string& text);
};

}  // namespace ggpfn
