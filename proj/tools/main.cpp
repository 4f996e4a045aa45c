#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "ggpfn/checkpoint.hpp"
#include "ggpfn/gradcheck.hpp"
#include "ggpfn/infer.hpp"
#include "ggpfn/model.hpp"
#include "ggpfn/ops.hpp"
#include "ggpfn/parallel.hpp"
#include "ggpfn/train.hpp"
#include "ggpfn/volume.hpp"

namespace fs = std::filesystem;
using namespace ggpfn;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

struct SynthArgs {
  std::string out_dir;
  int count = 3;
  std::uint64_t seed = 0;
  std::vector<int> extents = {24, 128, 128};
};

int cmd_synth(const SynthArgs& a) {
  if (a.extents.size() != 3)
    throw ConfigError("--extents wants three values: slices,rows,cols");
  fs::create_directories(a.out_dir);
  std::ofstream manifest(fs::path(a.out_dir) / "manifest.txt");
  if (!manifest)
    throw IoError("cannot write manifest in " + a.out_dir);
  for (int i = 0; i < a.count; ++i) {
    const std::uint64_t vseed =
        derive_seed(a.seed, "vol/" + std::to_string(i));
    VolumeGrid vg = make_phantom(
        vseed, {a.extents[0], a.extents[1], a.extents[2]});
    std::ostringstream name;
    name << "phantom_" << std::setw(3) << std::setfill('0') << i << ".vol";
    save_volume(vg, (fs::path(a.out_dir) / name.str()).string(),
                VolumeFormat::raw_v1);
    manifest << name.str() << " seed=" << vseed << "\n";
  }
  std::cout << "wrote " << a.count << " volumes to " << a.out_dir << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string only_stage;
  std::string resume;
  bool print_config = false;
};

std::vector<VolumeGrid> load_manifest_volumes(const std::string& data_dir) {
  const fs::path mpath = fs::path(data_dir) / "manifest.txt";
  std::ifstream m(mpath);
  if (!m) throw IoError("cannot open " + mpath.string());
  std::vector<VolumeGrid> vols;
  std::string line;
  while (std::getline(m, line)) {
    std::istringstream ls(line);
    std::string name;
    if (!(ls >> name) || name.empty() || name[0] == '#') continue;
    vols.push_back(load_volume((fs::path(data_dir) / name).string()));
  }
  if (vols.empty()) throw IoError("manifest lists no volumes: " + mpath.string());
  return vols;
}

int cmd_train(const TrainArgs& a) {
  KvReader kv = KvReader::from_file(a.config_path);
  for (const std::string& ov : a.overrides) {
    const auto eq = ov.find('=');
    if (eq == std::string::npos)
      throw ConfigError("--set wants key=value, got: " + ov);
    kv.set(ov.substr(0, eq), ov.substr(eq + 1));
  }

  GgpfnConfig cfg;
  cfg.read_kv(kv);

  const std::string data_dir = kv.get_string("data_dir", "");
  const std::string out_path = kv.get_string("out", "model.ckpt");
  const std::string log_path = kv.get_string("log", "train.log");
  const std::uint64_t seed = std::uint64_t(kv.get_int("seed", 0));
  const ViewPlane plane = view_from_string(kv.get_string("view", "axial"));
  const double lr = kv.get_double("lr", 1e-4);
  const int val_interval = int(kv.get_int("val_interval", 10));
  const int val_count = int(kv.get_int("val_count", 1));
  const int samples_per_epoch = int(kv.get_int("samples_per_epoch", 0));

  std::vector<TrainStage> stages = default_stages();
  {
    std::vector<long long> def_e, def_b;
    std::vector<double> def_a, def_be;
    for (const TrainStage& s : stages) {
      def_e.push_back(s.epochs);
      def_b.push_back(s.batch);
      def_a.push_back(s.alpha);
      def_be.push_back(s.beta);
    }
    const auto ep = kv.get_ints("stage_epochs", def_e);
    const auto ba = kv.get_ints("stage_batches", def_b);
    const auto al = kv.get_doubles("stage_alphas", def_a);
    const auto be = kv.get_doubles("stage_betas", def_be);
    if (ep.size() != 3 || ba.size() != 3 || al.size() != 3 || be.size() != 3)
      throw ConfigError("stage_* keys want exactly three comma-separated values");
    for (int i = 0; i < 3; ++i) {
      stages[std::size_t(i)].epochs = int(ep[std::size_t(i)]);
      stages[std::size_t(i)].batch = int(ba[std::size_t(i)]);
      stages[std::size_t(i)].alpha = al[std::size_t(i)];
      stages[std::size_t(i)].beta = be[std::size_t(i)];
    }
  }

  AugmentParams aug;
  aug.enabled = kv.get_bool("aug_enabled", aug.enabled);
  aug.max_angle_deg = kv.get_double("aug_max_angle", aug.max_angle_deg);
  aug.grid = int(kv.get_int("aug_grid", aug.grid));
  aug.sigma = kv.get_double("aug_sigma", aug.sigma);
  aug.max_disp = kv.get_double("aug_max_disp", aug.max_disp);

  kv.reject_unused();
  cfg.validate();

  if (!a.only_stage.empty()) {
    std::vector<TrainStage> picked;
    for (const TrainStage& s : stages)
      if (s.name == a.only_stage) picked.push_back(s);
    if (picked.empty())
      throw ConfigError("unknown stage: " + a.only_stage +
                        " (expected global, pfn, or all)");
    stages = picked;
  }

  if (a.print_config) {
    std::cout << cfg.to_text();
    std::cout << "data_dir = " << data_dir << "\nout = " << out_path
              << "\nlog = " << log_path << "\nseed = " << seed
              << "\nview = " << to_string(plane) << "\nlr = " << lr
              << "\nval_interval = " << val_interval
              << "\nval_count = " << val_count
              << "\nsamples_per_epoch = " << samples_per_epoch << "\n";
    for (const TrainStage& s : stages)
      std::cout << "# stage " << s.name << ": epochs=" << s.epochs
                << " batch=" << s.batch << " alpha=" << s.alpha
                << " beta=" << s.beta << " scope=" << to_string(s.scope)
                << "\n";
    return kExitOk;
  }

  if (data_dir.empty()) throw ConfigError("config needs data_dir");
  std::vector<VolumeGrid> vols = load_manifest_volumes(data_dir);
  if (val_count < 1 || val_count >= int(vols.size()))
    throw ConfigError("val_count must leave at least one training volume");
  std::vector<const VolumeGrid*> train_v, val_v;
  for (std::size_t i = 0; i < vols.size(); ++i)
    (i + std::size_t(val_count) < vols.size() ? train_v : val_v)
        .push_back(&vols[i]);

  ParamStore store;
  if (!a.resume.empty()) {
    const GgpfnConfig ck_cfg = load_checkpoint(a.resume, store);
    if (ck_cfg.to_text() != cfg.to_text())
      throw ConfigError("resume checkpoint was built with a different config");
  } else {
    store = build_model<float>(cfg, seed);
  }

  TrainOptions opt;
  opt.cfg = cfg;
  opt.lr = lr;
  opt.val_interval = val_interval;
  opt.samples_per_epoch = samples_per_epoch;
  opt.seed = seed;
  opt.plane = plane;
  opt.aug = aug;
  opt.stages = stages;

  std::ofstream log(log_path);
  if (!log) throw IoError("cannot write log: " + log_path);
  TrainResult res = train_full_schedule(opt, store, train_v, val_v, &log);
  save_checkpoint(out_path, cfg, res.best);
  std::cout << "best val_dsc=" << res.best_dsc << " checkpoint=" << out_path
            << " log=" << log_path << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// infer
// ---------------------------------------------------------------------------

struct InferArgs {
  std::string volume;
  std::string out;
  std::string ckpt_axial, ckpt_sagittal, ckpt_coronal;
  std::string views = "axial";
  std::vector<double> weights = {0.8, 0.1, 0.1};
  bool per_view = false;
};

int cmd_infer(const InferArgs& a) {
  std::vector<ViewPlane> views;
  {
    std::istringstream vs(a.views);
    std::string tok;
    while (std::getline(vs, tok, ','))
      if (!tok.empty())
        views.push_back(view_from_string(tok));
  }
  if (views.empty()) throw ConfigError("--views lists no views");
  if (views.size() == 2)
    throw ConfigError("fusion wants all three views; give one or three");

  const VolumeGrid vg = load_volume(a.volume);
  std::vector<VolumeGrid> per_view;
  for (ViewPlane v : views) {
    const std::string* path = v == ViewPlane::axial ? &a.ckpt_axial
                              : v == ViewPlane::sagittal ? &a.ckpt_sagittal
                                                         : &a.ckpt_coronal;
    if (path->empty())
      throw ConfigError("no checkpoint for view: " + to_string(v));
    ParamStore store;
    const GgpfnConfig cfg = load_checkpoint(*path, store);
    per_view.push_back(segment_volume_view(vg, v, store, cfg));
  }

  VolumeGrid fused;
  if (views.size() == 1) {
    fused = per_view[0];
  } else {
    if (a.weights.size() != 3)
      throw ConfigError("--weights wants three values");
    fused = fuse_p3d(per_view[0], per_view[1], per_view[2],
                     {a.weights[0], a.weights[1], a.weights[2]});
  }
  save_volume(fused, a.out, VolumeFormat::raw_v1);
  if (a.per_view)
    for (std::size_t i = 0; i < views.size(); ++i)
      save_volume(per_view[i], a.out + "." + to_string(views[i]) + ".vol",
                  VolumeFormat::raw_v1);
  std::cout << "wrote " << a.out << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

struct EvalArgs {
  std::string pred;
  std::string gt;
  std::string out;
  int thresholds = 19;
};

int cmd_eval(const EvalArgs& a) {
  const VolumeGrid pred = load_volume(a.pred);
  const VolumeGrid gt = load_volume(a.gt);
  if (!gt.has_labels())
    throw IoError("ground-truth volume has no labels: " + a.gt);
  if (pred.l != gt.l || pred.h != gt.h || pred.w != gt.w)
    throw ShapeError("prediction and ground-truth extents differ");

  const double d = dsc(threshold_mask(pred), gt.labels);
  const std::vector<PrPoint> pr = pr_curve(pred, gt.labels, a.thresholds);

  std::ofstream out(a.out);
  if (!out) throw IoError("cannot write metrics: " + a.out);
  out << "dsc " << std::setprecision(10) << d << "\n";
  for (const PrPoint& p : pr)
    out << p.threshold << " " << p.precision << " " << p.recall << " "
        << p.f_score << "\n";
  std::cout << "dsc=" << d << " metrics=" << a.out << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// gradcheck
// ---------------------------------------------------------------------------

using T = Tensor<double>;

T rnd(Rng& rng, std::vector<int> shape, double lo = -1.0, double hi = 1.0) {
  T t = T::zeros(shape);
  for (std::size_t i = 0; i < t.size(); ++i) t.data()[i] = rng.uniform(lo, hi);
  return t;
}

// Scalar objective: fixed-weight combination so permuted outputs don't cancel.
T wsum(const T& y, const T& w) { return sum(mul(y, w)); }

struct GradReport {
  std::string op;
  double err;
};

int cmd_gradcheck(std::uint64_t seed) {
  Rng rng(derive_seed(seed, "gradcheck"));
  std::vector<GradReport> rep;
  auto run = [&](const std::string& op, double err) {
    rep.push_back({op, err});
  };

  {  // conv2d: input, kernel, bias
    T x = rnd(rng, {2, 6, 7}), k = rnd(rng, {3, 2, 3, 3}), b = rnd(rng, {3});
    T w = rnd(rng, {3, 6, 7});
    double e = finite_diff_check(x, [&](const T& v) { return wsum(conv2d(v, k, b), w); });
    e = std::max(e, finite_diff_check(k, [&](const T& v) { return wsum(conv2d(x, v, b), w); }));
    e = std::max(e, finite_diff_check(b, [&](const T& v) { return wsum(conv2d(x, k, v), w); }));
    T ws = rnd(rng, {3, 3, 4});
    e = std::max(e, finite_diff_check(x, [&](const T& v) {
      return wsum(conv2d(v, k, b, 2, 1), ws);
    }));
    run("conv2d", e);
  }
  {  // conv3d_dvalid
    T x = rnd(rng, {2, 5, 5, 6}), k = rnd(rng, {3, 2, 3, 3, 3}), b = rnd(rng, {3});
    T w = rnd(rng, {3, 3, 5, 6});
    double e = finite_diff_check(x, [&](const T& v) { return wsum(conv3d_dvalid(v, k, b), w); });
    e = std::max(e, finite_diff_check(k, [&](const T& v) { return wsum(conv3d_dvalid(x, v, b), w); }));
    e = std::max(e, finite_diff_check(b, [&](const T& v) { return wsum(conv3d_dvalid(x, k, v), w); }));
    run("conv3d_dvalid", e);
  }
  {  // transposed_conv2d
    T x = rnd(rng, {3, 4, 5}), k = rnd(rng, {3, 2, 2, 2}), b = rnd(rng, {2});
    T w = rnd(rng, {2, 8, 10});
    double e = finite_diff_check(x, [&](const T& v) { return wsum(transposed_conv2d(v, k, b), w); });
    e = std::max(e, finite_diff_check(k, [&](const T& v) { return wsum(transposed_conv2d(x, v, b), w); }));
    e = std::max(e, finite_diff_check(b, [&](const T& v) { return wsum(transposed_conv2d(x, k, v), w); }));
    run("transposed_conv2d", e);
  }
  {  // max_pool on well-separated values (no argmax ties near +-h)
    T x = T::zeros({2, 4, 6});
    std::vector<int> order(x.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = int(i);
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[std::size_t(rng.below(i))]);
    for (std::size_t i = 0; i < x.size(); ++i) x.data()[i] = 0.1 * order[i];
    T w = rnd(rng, {2, 2, 3});
    run("max_pool", finite_diff_check(x, [&](const T& v) {
      return wsum(max_pool(v, {2, 2}), w);
    }));
  }
  {  // relu away from the kink
    T x = rnd(rng, {3, 5, 4});
    for (std::size_t i = 0; i < x.size(); ++i)
      if (std::abs(x[i]) < 0.1) x.data()[i] = x[i] < 0 ? -0.1 : 0.1;
    T w = rnd(rng, {3, 5, 4});
    run("relu", finite_diff_check(x, [&](const T& v) { return wsum(relu(v), w); }));
  }
  {  // sigmoid
    T x = rnd(rng, {2, 3, 4}, -3.0, 3.0);
    T w = rnd(rng, {2, 3, 4});
    run("sigmoid", finite_diff_check(x, [&](const T& v) { return wsum(sigmoid(v), w); }));
  }
  {  // concat_channels, both operands
    T a = rnd(rng, {2, 4, 5}), b2 = rnd(rng, {3, 4, 5});
    T w = rnd(rng, {5, 4, 5});
    double e = finite_diff_check(a, [&](const T& v) { return wsum(concat_channels(v, b2), w); });
    e = std::max(e, finite_diff_check(b2, [&](const T& v) { return wsum(concat_channels(a, v), w); }));
    run("concat_channels", e);
  }
  {  // center_crop
    T x = rnd(rng, {2, 7, 9});
    T w = rnd(rng, {2, 3, 4});
    run("center_crop", finite_diff_check(x, [&](const T& v) {
      return wsum(center_crop(v, {2, 3, 4}), w);
    }));
  }
  {  // bilinear_sample at off-lattice points
    T f = rnd(rng, {3, 6, 7});
    std::vector<std::array<double, 2>> coords;
    for (int i = 0; i < 9; ++i)
      coords.push_back({rng.uniform(0.12, 0.88), rng.uniform(0.12, 0.88)});
    T w = rnd(rng, {3, int(coords.size())});
    run("bilinear_sample", finite_diff_check(f, [&](const T& v) {
      return wsum(bilinear_sample(v, coords), w);
    }));
  }
  {  // bce_loss with probabilities clear of the clamp band
    T p = rnd(rng, {1, 5, 5}, 0.2, 0.8);
    T g = T::zeros({1, 5, 5});
    for (std::size_t i = 0; i < g.size(); ++i)
      g.data()[i] = rng.uniform() < 0.5 ? 0.0 : 1.0;
    run("bce_loss", finite_diff_check(p, [&](const T& v) { return bce_loss(v, g); }));
  }
  {  // add, mul, scale, sum, reshape
    T a = rnd(rng, {2, 3, 4}), b2 = rnd(rng, {2, 3, 4});
    T w = rnd(rng, {2, 3, 4});
    double e = finite_diff_check(a, [&](const T& v) { return wsum(add(v, b2), w); });
    run("add", e);
    e = finite_diff_check(a, [&](const T& v) { return wsum(mul(v, b2), w); });
    e = std::max(e, finite_diff_check(b2, [&](const T& v) { return wsum(mul(a, v), w); }));
    run("mul", e);
    run("scale", finite_diff_check(a, [&](const T& v) { return wsum(scale(v, -1.7), w); }));
    run("sum", finite_diff_check(a, [&](const T& v) { return sum(v); }));
    T wr = rnd(rng, {4, 6});
    run("reshape", finite_diff_check(a, [&](const T& v) {
      return wsum(reshape(v, {4, 6}), wr);
    }));
  }
  {  // tiny full model end to end
    GgpfnConfig cfg;
    cfg.fusion_steps = 2;
    cfg.group_convs = {1, 1, 0, 0};
    cfg.channels = {2, 3, 3, 3};
    cfg.decoder_channels = {4, 3, 2};
    cfg.global_channels = {2, 3, 3, 3, 4};
    cfg.patch_h = cfg.patch_w = 16;
    cfg.overlap = 0;
    cfg.global_h = cfg.global_w = 32;
    cfg.validate();
    ParamStoreT<double> st = build_model<double>(cfg, derive_seed(seed, "gc/model"));
    T patch = rnd(rng, {1, cfg.required_depth(), 16, 16});
    T slice = rnd(rng, {1, 32, 32});
    T gk = T::zeros({1, 16, 16});
    for (std::size_t i = 0; i < gk.size(); ++i)
      gk.data()[i] = rng.uniform() < 0.4 ? 1.0 : 0.0;
    T gf = T::zeros({1, 1, 1});
    gf.data()[0] = 1.0;
    T gfp = T::zeros({1, 2, 2});
    gfp.data()[1] = 1.0;

    auto model_loss = [&](const ParamRef<double>& P) {
      GlobalFeatures<double> glob = global_forward(slice, P, cfg);
      EncoderPyramid<double> enc = run_encoder(patch, P, cfg);
      T fk = subpixel_gather(glob.f, 3, 5, 16, 16, 32, 32, enc.ek.dim(2),
                             enc.ek.dim(3));
      T pk = decoder_forward(enc, std::optional<T>(fk), P, cfg);
      auto pj = multiscale_heads(enc, P);
      auto heads = global_heads(glob, P);
      return total_loss<double>({pk}, {gk}, {pj}, heads.first, heads.second,
                                gf, gfp, 0.3, 0.2);
    };

    // Analytic gradients once, then central differences parameter by
    // parameter on a deterministic subsample.
    Tape<double> tape;
    std::unordered_map<std::string, T> live;
    for (const std::string& n : st.names())
      live.emplace(n, tape.watch(st.at(n)));
    ParamRef<double> P(st, live);
    T loss = model_loss(P);
    tape.backward(loss);

    double worst = 0;
    for (const std::string& n : st.names()) {
      T g = tape.grad(live.at(n));
      T& v = st.entry(n).value;
      const std::size_t stride = std::max<std::size_t>(1, v.size() / 5);
      for (std::size_t i = 0; i < v.size(); i += stride) {
        const double orig = v[i];
        const double h = 1e-5;
        v.data()[i] = orig + h;
        const double lp = model_loss(ParamRef<double>(st))[0];
        v.data()[i] = orig - h;
        const double lm = model_loss(ParamRef<double>(st))[0];
        v.data()[i] = orig;
        const double num = (lp - lm) / (2 * h);
        worst = std::max(worst, std::abs(num - double(g[i])) /
                                    std::max(1.0, std::abs(num)));
      }
    }
    run("full_model", worst);
  }

  bool ok = true;
  for (const GradReport& r : rep) {
    const bool pass = r.err <= 1e-4;
    ok = ok && pass;
    std::cout << (pass ? "pass " : "FAIL ") << r.op
              << " max_rel_err=" << std::scientific << std::setprecision(3)
              << r.err << std::defaultfloat << "\n";
  }
  std::cout << (ok ? "gradcheck passed" : "gradcheck FAILED") << "\n";
  return ok ? kExitOk : kExitNumeric;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Volumetric segmentation with globally guided progressive fusion"};
  app.require_subcommand(1);
  int threads = 1;
  app.add_option("--threads", threads, "worker thread cap")->capture_default_str();

  SynthArgs sy;
  CLI::App* synth = app.add_subcommand("synth", "generate labeled phantom volumes");
  synth->add_option("--out", sy.out_dir, "output directory")->required();
  synth->add_option("--count", sy.count, "number of volumes")->capture_default_str();
  synth->add_option("--seed", sy.seed, "base seed")->capture_default_str();
  synth->add_option("--extents", sy.extents, "slices,rows,cols")
      ->delimiter(',')
      ->capture_default_str();

  TrainArgs tr;
  CLI::App* train = app.add_subcommand("train", "train a per-view model");
  train->add_option("config", tr.config_path, "key = value config file")->required();
  train->add_option("--set", tr.overrides, "override a config key (key=value)");
  train->add_option("--stage", tr.only_stage, "run a single stage (global|pfn|all)");
  train->add_option("--resume", tr.resume, "checkpoint to resume from");
  train->add_flag("--print-config", tr.print_config, "print the merged config and exit");

  InferArgs in;
  CLI::App* infer = app.add_subcommand("infer", "segment a volume");
  infer->add_option("--volume", in.volume, "input volume (.vol or .nii)")->required();
  infer->add_option("--out", in.out, "output probability volume (raw)")->required();
  infer->add_option("--ckpt", in.ckpt_axial, "axial checkpoint");
  infer->add_option("--ckpt-sagittal", in.ckpt_sagittal, "sagittal checkpoint");
  infer->add_option("--ckpt-coronal", in.ckpt_coronal, "coronal checkpoint");
  infer->add_option("--views", in.views, "comma list of views")->capture_default_str();
  infer->add_option("--weights", in.weights, "fusion weights wa,ws,wc")
      ->delimiter(',')
      ->capture_default_str();
  infer->add_flag("--per-view", in.per_view, "also write per-view volumes");

  EvalArgs ev;
  CLI::App* eval = app.add_subcommand("eval", "score a probability volume");
  eval->add_option("--pred", ev.pred, "predicted probability volume")->required();
  eval->add_option("--gt", ev.gt, "labeled ground-truth volume")->required();
  eval->add_option("--out", ev.out, "metrics output file")->required();
  eval->add_option("--thresholds", ev.thresholds, "PR curve points")
      ->capture_default_str();

  std::uint64_t gc_seed = 0;
  CLI::App* gradcheck = app.add_subcommand("gradcheck", "finite-difference audit of every op");
  gradcheck->add_option("--seed", gc_seed, "suite seed")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int r = app.exit(e);
    return r == 0 ? kExitOk : kExitUsage;
  }

  try {
    set_max_threads(threads);
    if (*synth) return cmd_synth(sy);
    if (*train) return cmd_train(tr);
    if (*infer) return cmd_infer(in);
    if (*eval) return cmd_eval(ev);
    if (*gradcheck) return cmd_gradcheck(gc_seed);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const IoError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const ShapeError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}
