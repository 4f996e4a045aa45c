#pragma once

#include <cstdint>
#include <functional>
#include <ostream>
#include <string>
#include <unordered_map>
#include <vector>

#include "ggpfn/config.hpp"
#include "ggpfn/params.hpp"
#include "ggpfn/patches.hpp"
#include "ggpfn/volume.hpp"

namespace ggpfn {

// Which parameter groups a stage updates. `global_only` trains the guidance
// branch on whole downsampled slices; `pfn_only` trains everything else on
// patches with the guidance branch frozen; `all` fine-tunes jointly.
enum class StageScope { global_only, pfn_only, all };

StageScope scope_from_string(const std::string& s);
std::string to_string(StageScope s);

struct TrainStage {
  std::string name;
  int epochs = 1;
  int batch = 4;
  double alpha = 0.5;
  double beta = 0.5;
  StageScope scope = StageScope::all;
};

// Desk-scale default schedule: 200 guidance-only epochs at batch 32, 200
// fusion-only epochs at batch 4, 100 joint epochs at batch 4 with the
// fine-tune weights (alpha 0.01, beta 0).
std::vector<TrainStage> default_stages();

struct TrainOptions {
  GgpfnConfig cfg;
  double lr = 1e-4;
  int val_interval = 10;     // epochs between validation passes
  int samples_per_epoch = 0; // 0: one balanced pair per training volume
  std::uint64_t seed = 0;
  ViewPlane plane = ViewPlane::axial;
  AugmentParams aug;
  std::vector<TrainStage> stages; // empty: default_stages()
};

struct LogRecord {
  std::string stage;
  std::uint64_t epoch = 0; // cumulative across stages and resumes
  double loss = 0.0;
  double val_dsc = -1.0;   // < 0 when this epoch had no validation pass
};

std::string format_log_record(const LogRecord& r);

// Bias-corrected Adam on the named gradients; every tensor shares one step
// counter (store.opt_step, incremented once per call).
void adam_step(ParamStore& store,
               const std::unordered_map<std::string, Tensor<float>>& grads,
               double lr, double beta1 = 0.9, double beta2 = 0.999,
               double eps = 1e-8);

// One stage over `volumes`. Per-epoch mean loss is recorded; `hook`, when
// set, runs after each epoch with the cumulative epoch number and may return
// a validation DSC to attach (negative: none). Deterministic given opt.seed.
std::vector<LogRecord> run_stage(
    const TrainStage& stage, const TrainOptions& opt, ParamStore& store,
    const std::vector<const VolumeGrid*>& volumes,
    const std::function<double(std::uint64_t)>& hook = {});

struct TrainResult {
  ParamStore best;        // snapshot at the best validation DSC (ties: earliest)
  double best_dsc = -1.0;
  std::vector<LogRecord> log;
};

// Runs every stage in sequence, validating each `val_interval` epochs and
// after the final epoch; `store` is left at the final-epoch weights while the
// returned snapshot holds the best ones. Starts from the given store, so a
// loaded checkpoint resumes with its epoch numbering.
TrainResult train_full_schedule(const TrainOptions& opt, ParamStore& store,
                                const std::vector<const VolumeGrid*>& train_vols,
                                const std::vector<const VolumeGrid*>& val_vols,
                                std::ostream* log_out = nullptr);

}  // namespace ggpfn
