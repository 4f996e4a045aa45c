#include "ggpfn/train.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <optional>
#include <sstream>

#include "ggpfn/infer.hpp"
#include "ggpfn/model.hpp"
#include "ggpfn/resample.hpp"

namespace ggpfn {

StageScope scope_from_string(const std::string& s) {
  if (s == "global_only") return StageScope::global_only;
  if (s == "pfn_only") return StageScope::pfn_only;
  if (s == "all") return StageScope::all;
  throw ConfigError("unknown stage scope: " + s);
}

std::string to_string(StageScope s) {
  switch (s) {
    case StageScope::global_only: return "global_only";
    case StageScope::pfn_only: return "pfn_only";
    default: return "all";
  }
}

std::vector<TrainStage> default_stages() {
  return {
      {"global", 200, 32, 0.5, 0.5, StageScope::global_only},
      {"pfn", 200, 4, 0.5, 0.5, StageScope::pfn_only},
      {"all", 100, 4, 0.01, 0.0, StageScope::all},
  };
}

std::string format_log_record(const LogRecord& r) {
  std::ostringstream o;
  o << "stage=" << r.stage << " epoch=" << r.epoch << " loss="
    << std::setprecision(10) << r.loss;
  if (r.val_dsc >= 0) o << " val_dsc=" << std::setprecision(6) << r.val_dsc;
  return o.str();
}

void adam_step(ParamStore& store,
               const std::unordered_map<std::string, Tensor<float>>& grads,
               double lr, double beta1, double beta2, double eps) {
  const auto t = double(++store.opt_step);
  const double bc1 = 1.0 - std::pow(beta1, t);
  const double bc2 = 1.0 - std::pow(beta2, t);
  for (const auto& [name, g] : grads) {
    auto& e = store.entry(name);
    if (!e.value.same_shape(g))
      throw ShapeError("adam_step: gradient extents mismatch for " + name);
    float* th = e.value.data();
    float* m = e.m.data();
    float* v = e.v.data();
    const float* gd = g.data();
    for (std::size_t i = 0; i < e.value.size(); ++i) {
      const double gi = gd[i];
      const double mi = beta1 * m[i] + (1.0 - beta1) * gi;
      const double vi = beta2 * v[i] + (1.0 - beta2) * gi * gi;
      m[i] = float(mi);
      v[i] = float(vi);
      th[i] -= float(lr * (mi / bc1) / (std::sqrt(vi / bc2) + eps));
    }
  }
}

namespace {

bool is_global_param(const std::string& name) {
  return name.rfind("glob.", 0) == 0 || name.rfind("ghead.", 0) == 0;
}

std::vector<std::string> trainable_names(const ParamStore& store,
                                         StageScope scope) {
  std::vector<std::string> out;
  for (const std::string& n : store.names()) {
    const bool g = is_global_param(n);
    if (scope == StageScope::all || (scope == StageScope::global_only) == g)
      out.push_back(n);
  }
  return out;
}

struct SliceItem {               // global-only stages train on whole slices
  Tensor<float> down;            // [1, gh, gw]
  Tensor<float> gt_coarse;       // [1, gh/32, gw/32]
  Tensor<float> gt_mid;          // [1, gh/16, gw/16]
};

struct PatchItem {               // patch stages
  TrainingSample s;
  Tensor<float> down;                         // set when the branch is enabled
  std::optional<Tensor<float>> gt_coarse, gt_mid;  // set when alpha/beta bite
};

SliceItem make_slice_item(const VolumeGrid& vg, ViewPlane plane, Rng& rng,
                          const GgpfnConfig& cfg) {
  const int count = view_slice_count(vg, plane);
  const int si = rng.below_int(count);
  SliceItem it;
  it.down = area_downsample(extract_view_slice(vg, plane, si), cfg.global_h,
                            cfg.global_w);
  Tensor<float> lab = extract_view_label(vg, plane, si);
  it.gt_coarse = max_downsample(lab, cfg.global_h / 32, cfg.global_w / 32);
  it.gt_mid = max_downsample(lab, cfg.global_h / 16, cfg.global_w / 16);
  return it;
}

PatchItem make_patch_item(const VolumeGrid& vg, ViewPlane plane,
                          PatchSampler sampler, Rng& rng,
                          const TrainOptions& opt, bool want_targets) {
  PatchItem it;
  it.s = sample_one_patch(vg, plane, sampler, rng, opt.cfg);
  augment(it.s.patch3d, it.s.target, rng, opt.aug);
  if (opt.cfg.global_enabled) {
    it.down = area_downsample(extract_view_slice(vg, plane, it.s.slice_index),
                              opt.cfg.global_h, opt.cfg.global_w);
    if (want_targets) {
      Tensor<float> lab = extract_view_label(vg, plane, it.s.slice_index);
      it.gt_coarse =
          max_downsample(lab, opt.cfg.global_h / 32, opt.cfg.global_w / 32);
      it.gt_mid =
          max_downsample(lab, opt.cfg.global_h / 16, opt.cfg.global_w / 16);
    }
  }
  return it;
}

Tensor<float> slice_loss(const SliceItem& it, const ParamRef<float>& P,
                         const GgpfnConfig& cfg, double alpha, double beta) {
  GlobalFeatures<float> gf = global_forward(it.down, P, cfg);
  auto [pf, pfp] = global_heads(gf, P);
  std::optional<Tensor<float>> acc;
  if (alpha != 0) acc = scale(bce_loss(pf, it.gt_coarse), alpha);
  if (beta != 0) {
    Tensor<float> b = scale(bce_loss(pfp, it.gt_mid), beta);
    acc = acc ? add(*acc, b) : b;
  }
  return *acc;
}

Tensor<float> patch_loss(const PatchItem& it, const ParamRef<float>& P,
                         const GgpfnConfig& cfg, double alpha, double beta) {
  EncoderPyramid<float> enc = run_encoder(it.s.patch3d, P, cfg);
  std::optional<Tensor<float>> fk;
  std::optional<GlobalFeatures<float>> gf;
  if (cfg.global_enabled) {
    gf = global_forward(it.down, P, cfg);
    fk = subpixel_gather(gf->f, it.s.y0, it.s.x0, cfg.patch_h, cfg.patch_w,
                         it.s.slice_h, it.s.slice_w, enc.ek.dim(2),
                         enc.ek.dim(3));
  }
  Tensor<float> pk = decoder_forward(enc, fk, P, cfg);
  std::array<Tensor<float>, 4> pj = multiscale_heads(enc, P);
  std::optional<Tensor<float>> pf, pfp;
  if (alpha != 0 || beta != 0) {
    auto heads = global_heads(*gf, P);
    pf = heads.first;
    pfp = heads.second;
  }
  return total_loss<float>({pk}, {it.s.target}, {pj}, pf, pfp, it.gt_coarse,
                           it.gt_mid, alpha, beta);
}

}  // namespace

std::vector<LogRecord> run_stage(
    const TrainStage& stage, const TrainOptions& opt, ParamStore& store,
    const std::vector<const VolumeGrid*>& volumes,
    const std::function<double(std::uint64_t)>& hook) {
  if (volumes.empty()) throw ShapeError("run_stage: empty data");
  if (stage.epochs < 0 || stage.batch < 1)
    throw ConfigError("run_stage: bad epoch/batch counts");
  if (stage.alpha < 0 || stage.beta < 0)
    throw ConfigError("run_stage: alpha/beta must be >= 0");
  const bool global_scope = stage.scope == StageScope::global_only;
  if (global_scope && !opt.cfg.global_enabled)
    throw ConfigError("stage '" + stage.name +
                      "' trains the guidance branch but it is disabled");
  if (global_scope && stage.alpha == 0 && stage.beta == 0)
    throw ConfigError("stage '" + stage.name +
                      "' has no loss terms (alpha = beta = 0)");
  // In the fusion-only stage the guidance branch is frozen, so its loss
  // terms are constants and are dropped from the objective.
  const double alpha = stage.scope == StageScope::pfn_only ? 0.0 : stage.alpha;
  const double beta = stage.scope == StageScope::pfn_only ? 0.0 : stage.beta;
  if ((alpha != 0 || beta != 0) && !opt.cfg.global_enabled)
    throw ConfigError("stage '" + stage.name +
                      "' weights guidance losses but the branch is disabled");

  const std::vector<std::string> trainables = trainable_names(store, stage.scope);
  std::vector<LogRecord> log;
  log.reserve(std::size_t(stage.epochs));

  for (int e = 0; e < stage.epochs; ++e) {
    const std::uint64_t epoch_no = store.epochs_done + 1;
    Rng er(derive_seed(opt.seed,
                       stage.name + "/epoch/" + std::to_string(epoch_no)));

    // Lazy descriptors; samples are materialized one batch at a time.
    struct Desc {
      int vol;
      std::uint64_t item_seed;
    };
    const int per_epoch =
        opt.samples_per_epoch > 0
            ? opt.samples_per_epoch
            : 2 * int(volumes.size());
    std::vector<Desc> descs;
    if (global_scope) {
      descs.resize(std::size_t(per_epoch));
    } else {
      descs.resize(std::size_t((per_epoch + 1) / 2));  // each yields a pair
    }
    for (Desc& d : descs) {
      d.vol = er.below_int(int(volumes.size()));
      d.item_seed = er.next_u64();
    }

    double loss_sum = 0;
    std::size_t n_seen = 0;

    // Each descriptor yields one slice (global stage) or one balanced pair of
    // patches, so a batch holds at most `cap` samples.
    const int step = global_scope ? 1 : 2;
    const int cap = std::max(stage.batch, step);
    std::size_t cursor = 0;
    std::vector<SliceItem> sbatch;
    std::vector<PatchItem> pbatch;
    while (cursor < descs.size()) {
      sbatch.clear();
      pbatch.clear();
      while (cursor < descs.size() &&
             int(global_scope ? sbatch.size() : pbatch.size()) + step <= cap) {
        const Desc& d = descs[cursor++];
        Rng sr(d.item_seed);
        const VolumeGrid& vg = *volumes[std::size_t(d.vol)];
        if (global_scope) {
          sbatch.push_back(make_slice_item(vg, opt.plane, sr, opt.cfg));
        } else {
          const bool want = alpha != 0 || beta != 0;
          pbatch.push_back(make_patch_item(vg, opt.plane,
                                           PatchSampler::uniform, sr, opt, want));
          pbatch.push_back(make_patch_item(vg, opt.plane,
                                           PatchSampler::label_box, sr, opt, want));
        }
      }
      const std::size_t bsz = global_scope ? sbatch.size() : pbatch.size();

      Tape<float> tape;
      std::unordered_map<std::string, Tensor<float>> live;
      live.reserve(trainables.size());
      for (const std::string& n : trainables)
        live.emplace(n, tape.watch(store.at(n)));
      ParamRef<float> P(store, live);

      std::optional<Tensor<float>> acc;
      for (const SliceItem& it : sbatch) {
        Tensor<float> l = slice_loss(it, P, opt.cfg, alpha, beta);
        acc = acc ? add(*acc, l) : l;
      }
      for (const PatchItem& it : pbatch) {
        Tensor<float> l = patch_loss(it, P, opt.cfg, alpha, beta);
        acc = acc ? add(*acc, l) : l;
      }
      Tensor<float> loss = scale(*acc, 1.0 / double(bsz));
      tape.backward(loss);

      std::unordered_map<std::string, Tensor<float>> grads;
      grads.reserve(trainables.size());
      for (const std::string& n : trainables)
        grads.emplace(n, tape.grad(live.at(n)));
      adam_step(store, grads, opt.lr);

      loss_sum += double(loss[0]) * double(bsz);
      n_seen += bsz;
    }

    store.epochs_done = epoch_no;
    LogRecord rec;
    rec.stage = stage.name;
    rec.epoch = epoch_no;
    rec.loss = n_seen ? loss_sum / double(n_seen) : 0.0;
    if (hook) rec.val_dsc = hook(epoch_no);
    log.push_back(rec);
  }
  return log;
}

TrainResult train_full_schedule(const TrainOptions& opt, ParamStore& store,
                                const std::vector<const VolumeGrid*>& train_vols,
                                const std::vector<const VolumeGrid*>& val_vols,
                                std::ostream* log_out) {
  if (train_vols.empty())
    throw ConfigError("train_full_schedule: empty training split");
  if (val_vols.empty())
    throw ConfigError("train_full_schedule: empty validation split");
  for (const VolumeGrid* vg : val_vols)
    if (!vg->has_labels())
      throw ConfigError("train_full_schedule: validation volume has no labels");

  const std::vector<TrainStage> stages =
      opt.stages.empty() ? default_stages() : opt.stages;
  std::uint64_t total_epochs = 0;
  for (const TrainStage& s : stages) total_epochs += std::uint64_t(s.epochs);

  TrainResult res;
  auto validate = [&]() {
    double sum = 0;
    for (const VolumeGrid* vg : val_vols) {
      VolumeGrid prob = segment_volume_view(*vg, opt.plane, store, opt.cfg);
      sum += dsc(threshold_mask(prob), vg->labels);
    }
    return sum / double(val_vols.size());
  };

  std::uint64_t done = 0;
  auto hook = [&](std::uint64_t) -> double {
    ++done;
    const bool due =
        opt.val_interval > 0 && done % std::uint64_t(opt.val_interval) == 0;
    if (!due && done != total_epochs) return -1.0;
    const double d = validate();
    if (d > res.best_dsc) {
      res.best_dsc = d;
      res.best = store;
    }
    return d;
  };

  for (const TrainStage& s : stages) {
    std::vector<LogRecord> part = run_stage(s, opt, store, train_vols, hook);
    for (const LogRecord& r : part) {
      if (log_out) *log_out << format_log_record(r) << '\n';
      res.log.push_back(r);
    }
    if (log_out) log_out->flush();
  }

  if (res.best_dsc < 0) {  // zero-epoch schedule: score the initial weights
    res.best_dsc = validate();
    res.best = store;
  }
  return res;
}

}  // namespace ggpfn
