#include "ggpfn/config.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace ggpfn {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_commas(const std::string& s) {
  std::vector<std::string> parts;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) parts.push_back(trim(item));
  return parts;
}

}  // namespace

KvReader KvReader::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return from_text(ss.str());
}

KvReader KvReader::from_text(const std::string& text) {
  KvReader r;
  std::stringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) +
                        ": expected `key = value`, got: " + line);
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty())
      throw ConfigError("config line " + std::to_string(lineno) +
                        ": empty key");
    r.kv_[key] = value;
  }
  return r;
}

void KvReader::set(const std::string& key, const std::string& value) {
  kv_[key] = trim(value);
}

bool KvReader::has(const std::string& key) const { return kv_.count(key) > 0; }

std::string KvReader::get_string(const std::string& key,
                                 const std::string& fallback) {
  auto it = kv_.find(key);
  if (it == kv_.end()) return fallback;
  used_.insert(key);
  return it->second;
}

long long KvReader::get_int(const std::string& key, long long fallback) {
  auto it = kv_.find(key);
  if (it == kv_.end()) return fallback;
  used_.insert(key);
  char* end = nullptr;
  const long long v = std::strtoll(it->second.c_str(), &end, 10);
  if (end == it->second.c_str() || *end != '\0')
    throw ConfigError("key `" + key + "`: not an integer: " + it->second);
  return v;
}

double KvReader::get_double(const std::string& key, double fallback) {
  auto it = kv_.find(key);
  if (it == kv_.end()) return fallback;
  used_.insert(key);
  char* end = nullptr;
  const double v = std::strtod(it->second.c_str(), &end);
  if (end == it->second.c_str() || *end != '\0')
    throw ConfigError("key `" + key + "`: not a number: " + it->second);
  return v;
}

bool KvReader::get_bool(const std::string& key, bool fallback) {
  auto it = kv_.find(key);
  if (it == kv_.end()) return fallback;
  used_.insert(key);
  const std::string& v = it->second;
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("key `" + key + "`: not a boolean: " + v);
}

std::vector<long long> KvReader::get_ints(
    const std::string& key, const std::vector<long long>& fallback) {
  auto it = kv_.find(key);
  if (it == kv_.end()) return fallback;
  used_.insert(key);
  std::vector<long long> out;
  for (const std::string& part : split_commas(it->second)) {
    char* end = nullptr;
    const long long v = std::strtoll(part.c_str(), &end, 10);
    if (end == part.c_str() || *end != '\0')
      throw ConfigError("key `" + key + "`: not an integer list: " +
                        it->second);
    out.push_back(v);
  }
  return out;
}

std::vector<double> KvReader::get_doubles(const std::string& key,
                                          const std::vector<double>& fallback) {
  auto it = kv_.find(key);
  if (it == kv_.end()) return fallback;
  used_.insert(key);
  std::vector<double> out;
  for (const std::string& part : split_commas(it->second)) {
    char* end = nullptr;
    const double v = std::strtod(part.c_str(), &end);
    if (end == part.c_str() || *end != '\0')
      throw ConfigError("key `" + key + "`: not a number list: " + it->second);
    out.push_back(v);
  }
  return out;
}

std::vector<std::string> KvReader::unused() const {
  std::vector<std::string> out;
  for (const auto& [k, v] : kv_)
    if (!used_.count(k)) out.push_back(k);
  return out;
}

void KvReader::reject_unused() const {
  const auto bad = unused();
  if (!bad.empty()) throw ConfigError("unknown config key: " + bad.front());
}

std::string to_string(FusionMode m) {
  return m == FusionMode::progressive ? "progressive" : "one_off";
}

FusionMode fusion_mode_from_string(const std::string& s) {
  if (s == "progressive") return FusionMode::progressive;
  if (s == "one_off") return FusionMode::one_off;
  throw ConfigError("fusion_mode must be `progressive` or `one_off`, got: " +
                    s);
}

void GgpfnConfig::validate() const {
  if (fusion_steps < 1) throw ConfigError("fusion_steps must be >= 1");
  int sum = 0;
  for (int g : group_convs) {
    if (g < 0) throw ConfigError("group_convs entries must be >= 0");
    sum += g;
  }
  if (sum != fusion_steps)
    throw ConfigError("group_convs must sum to fusion_steps (" +
                      std::to_string(sum) + " != " +
                      std::to_string(fusion_steps) + ")");
  for (int c : channels)
    if (c < 1) throw ConfigError("channels entries must be >= 1");
  for (int c : decoder_channels)
    if (c < 1) throw ConfigError("decoder_channels entries must be >= 1");
  for (int c : global_channels)
    if (c < 1) throw ConfigError("global_channels entries must be >= 1");
  if (patch_h < 8 || patch_h % 8)
    throw ConfigError("patch_h must be a positive multiple of 8");
  if (patch_w < 8 || patch_w % 8)
    throw ConfigError("patch_w must be a positive multiple of 8");
  if (overlap < 0 || overlap >= std::min(patch_h, patch_w))
    throw ConfigError("overlap must be in [0, min(patch_h, patch_w))");
  if (global_h < 32 || global_h % 32)
    throw ConfigError("global_h must be a positive multiple of 32");
  if (global_w < 32 || global_w % 32)
    throw ConfigError("global_w must be a positive multiple of 32");
  if (alpha < 0 || beta < 0) throw ConfigError("alpha and beta must be >= 0");
  double wsum = 0;
  for (double w : view_weights) {
    if (w < 0) throw ConfigError("view_weights must be >= 0");
    wsum += w;
  }
  if (std::abs(wsum - 1.0) > 1e-6)
    throw ConfigError("view_weights must sum to 1");
}

std::string GgpfnConfig::to_text() const {
  std::ostringstream os;
  os.precision(17);
  os << "fusion_steps = " << fusion_steps << "\n";
  os << "group_convs = " << group_convs[0] << "," << group_convs[1] << ","
     << group_convs[2] << "," << group_convs[3] << "\n";
  os << "channels = " << channels[0] << "," << channels[1] << "," << channels[2]
     << "," << channels[3] << "\n";
  os << "decoder_channels = " << decoder_channels[0] << ","
     << decoder_channels[1] << "," << decoder_channels[2] << "\n";
  os << "global_channels = " << global_channels[0] << "," << global_channels[1]
     << "," << global_channels[2] << "," << global_channels[3] << ","
     << global_channels[4] << "\n";
  os << "patch_h = " << patch_h << "\n";
  os << "patch_w = " << patch_w << "\n";
  os << "overlap = " << overlap << "\n";
  os << "global_h = " << global_h << "\n";
  os << "global_w = " << global_w << "\n";
  os << "alpha = " << alpha << "\n";
  os << "beta = " << beta << "\n";
  os << "view_weights = " << view_weights[0] << "," << view_weights[1] << ","
     << view_weights[2] << "\n";
  os << "fusion_mode = " << to_string(fusion_mode) << "\n";
  os << "global_enabled = " << (global_enabled ? "true" : "false") << "\n";
  return os.str();
}

void GgpfnConfig::read_kv(KvReader& kv) {
  fusion_steps = int(kv.get_int("fusion_steps", fusion_steps));

  auto fill = [&](const char* key, auto& arr) {
    std::vector<long long> def(arr.begin(), arr.end());
    std::vector<long long> got = kv.get_ints(key, def);
    if (got.size() != arr.size())
      throw ConfigError(std::string("key `") + key + "`: expected " +
                        std::to_string(arr.size()) + " values");
    for (std::size_t i = 0; i < arr.size(); ++i) arr[i] = int(got[i]);
  };
  fill("group_convs", group_convs);
  fill("channels", channels);
  fill("decoder_channels", decoder_channels);
  fill("global_channels", global_channels);

  patch_h = int(kv.get_int("patch_h", patch_h));
  patch_w = int(kv.get_int("patch_w", patch_w));
  overlap = int(kv.get_int("overlap", overlap));
  global_h = int(kv.get_int("global_h", global_h));
  global_w = int(kv.get_int("global_w", global_w));
  alpha = kv.get_double("alpha", alpha);
  beta = kv.get_double("beta", beta);
  {
    std::vector<double> def(view_weights.begin(), view_weights.end());
    std::vector<double> got = kv.get_doubles("view_weights", def);
    if (got.size() != 3)
      throw ConfigError("key `view_weights`: expected 3 values");
    for (int i = 0; i < 3; ++i) view_weights[std::size_t(i)] = got[std::size_t(i)];
  }
  fusion_mode = fusion_mode_from_string(
      kv.get_string("fusion_mode", to_string(fusion_mode)));
  global_enabled = kv.get_bool("global_enabled", global_enabled);
}

GgpfnConfig GgpfnConfig::from_text(const std::string& text) {
  KvReader kv = KvReader::from_text(text);
  GgpfnConfig cfg;
  cfg.read_kv(kv);
  kv.reject_unused();
  return cfg;
}

}  // namespace ggpfn
