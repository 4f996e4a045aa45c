#include <doctest.h>

#include <cmath>
#include <string>
#include <vector>

#include "ggpfn/model.hpp"
#include "ggpfn/rng.hpp"
#include "oracles.hpp"

using namespace ggpfn;
using Tf = Tensor<float>;

namespace {

// Small config used throughout: T=2, one conv in each of the first two
// groups, 32x32 patches, 32x32 context input.
GgpfnConfig tiny_config() {
  GgpfnConfig cfg;
  cfg.fusion_steps = 2;
  cfg.group_convs = {1, 1, 0, 0};
  cfg.channels = {4, 8, 8, 8};
  cfg.decoder_channels = {8, 8, 4};
  cfg.global_channels = {4, 8, 8, 8, 8};
  cfg.patch_h = cfg.patch_w = 32;
  cfg.overlap = 8;
  cfg.global_h = cfg.global_w = 32;
  cfg.validate();
  return cfg;
}

Tf rndf(Rng& rng, std::vector<int> shape, double lo = -1, double hi = 1) {
  Tf t = Tf::zeros(shape);
  for (std::size_t i = 0; i < t.size(); ++i)
    t.data()[i] = float(rng.uniform(lo, hi));
  return t;
}

Tf constant(std::vector<int> shape, float v) {
  Tf t = Tf::zeros(shape);
  for (std::size_t i = 0; i < t.size(); ++i) t.data()[i] = v;
  return t;
}

}  // namespace

TEST_CASE("required depth is one plus twice the fusion step count") {
  GgpfnConfig cfg;
  cfg.fusion_steps = 15;
  CHECK(required_depth(cfg) == 31);
  cfg.fusion_steps = 0;
  CHECK(required_depth(cfg) == 1);
  cfg.fusion_steps = 2;
  CHECK(required_depth(cfg) == 5);
}

TEST_CASE("receptive field recurrence") {
  GgpfnConfig cfg;  // (4,2,3,6)
  auto [rh, rw] = receptive_field(cfg);
  CHECK(rh == 144);
  CHECK(rw == 144);

  cfg.group_convs = {1, 1, 1, 1};
  CHECK(receptive_field(cfg).first == 38);

  cfg.group_convs = {1, 1, 0, 0};
  CHECK(receptive_field(cfg).first == 14);

  // A lone 3x3 convolution sees 3 pixels.
  CHECK(receptive_field_seq({{3, 1}}) == 3);
}

TEST_CASE("default config enumerates a fixed parameter set") {
  GgpfnConfig cfg;
  std::vector<ParamSpec> specs = enumerate_params(cfg);
  CHECK(specs.size() == 89);
  std::size_t total = 0;
  for (const ParamSpec& s : specs) {
    std::size_t n = 1;
    for (int d : s.shape) n *= std::size_t(d);
    total += n;
  }
  CHECK(total == 3584055);

  // Only the 16->32 two-conv group needs a projected identity path.
  int projs = 0;
  for (const ParamSpec& s : specs)
    if (s.name.find("res.proj") != std::string::npos) {
      ++projs;
      CHECK(s.name == "enc.g1.res.proj.w");
      CHECK(s.shape == std::vector<int>{32, 16, 1, 1, 1});
      CHECK(s.fan_in == 16);
    }
  CHECK(projs == 1);
}

TEST_CASE("small config enumerates exactly the expected layer names") {
  const std::vector<std::string> expected = {
      "enc.g0.conv0.w",   "enc.g0.conv0.b",   "enc.g1.conv0.w",
      "enc.g1.conv0.b",   "head.s0.w",        "head.s0.b",
      "head.s1.w",        "head.s1.b",        "head.s2.w",
      "head.s2.b",        "head.s3.w",        "head.s3.b",
      "glob.s0.conv0.w",  "glob.s0.conv0.b",  "glob.s0.conv1.w",
      "glob.s0.conv1.b",  "glob.s1.conv0.w",  "glob.s1.conv0.b",
      "glob.s1.conv1.w",  "glob.s1.conv1.b",  "glob.s2.conv0.w",
      "glob.s2.conv0.b",  "glob.s2.conv1.w",  "glob.s2.conv1.b",
      "glob.s2.conv2.w",  "glob.s2.conv2.b",  "glob.s3.conv0.w",
      "glob.s3.conv0.b",  "glob.s3.conv1.w",  "glob.s3.conv1.b",
      "glob.s3.conv2.w",  "glob.s3.conv2.b",  "glob.s4.conv0.w",
      "glob.s4.conv0.b",  "glob.s4.conv1.w",  "glob.s4.conv1.b",
      "glob.s4.conv2.w",  "glob.s4.conv2.b",  "ghead.f.w",
      "ghead.f.b",        "ghead.fp.w",       "ghead.fp.b",
      "dec.s0.up.w",      "dec.s0.up.b",      "dec.s0.conv1.w",
      "dec.s0.conv1.b",   "dec.s0.conv2.w",   "dec.s0.conv2.b",
      "dec.s1.up.w",      "dec.s1.up.b",      "dec.s1.conv1.w",
      "dec.s1.conv1.b",   "dec.s1.conv2.w",   "dec.s1.conv2.b",
      "dec.s2.up.w",      "dec.s2.up.b",      "dec.s2.conv1.w",
      "dec.s2.conv1.b",   "dec.s2.conv2.w",   "dec.s2.conv2.b",
      "dec.out.w",        "dec.out.b"};

  std::vector<ParamSpec> specs = enumerate_params(tiny_config());
  REQUIRE(specs.size() == expected.size());
  for (std::size_t i = 0; i < specs.size(); ++i)
    CHECK(specs[i].name == expected[i]);

  std::size_t total = 0;
  for (const ParamSpec& s : specs) {
    std::size_t n = 1;
    for (int d : s.shape) n *= std::size_t(d);
    total += n;
  }
  CHECK(total == 12207);

  // Spot-check shapes and fan-ins at both ends of the enumeration.
  CHECK(specs[0].shape == std::vector<int>{4, 1, 3, 3, 3});
  CHECK(specs[0].fan_in == 27);
  CHECK(specs[2].shape == std::vector<int>{8, 4, 3, 3, 3});
  CHECK(specs[2].fan_in == 108);
  CHECK(specs[42].name == "dec.s0.up.w");
  CHECK(specs[42].shape == std::vector<int>{16, 8, 2, 2});
  CHECK(specs[42].fan_in == 64);
  CHECK(specs[44].shape == std::vector<int>{8, 16, 3, 3});
  CHECK(specs[60].shape == std::vector<int>{1, 4, 1, 1});
}

TEST_CASE("build_model is deterministic, bounded, and zero-biased") {
  GgpfnConfig cfg = tiny_config();
  ParamStore a = build_model<float>(cfg, 42);
  ParamStore b = build_model<float>(cfg, 42);
  ParamStore c = build_model<float>(cfg, 43);

  REQUIRE(a.size() == 62);
  bool any_diff_from_c = false;
  for (const std::string& name : a.names()) {
    const Tf& ta = a.at(name);
    const Tf& tb = b.at(name);
    REQUIRE(ta.same_shape(tb));
    for (std::size_t i = 0; i < ta.size(); ++i) CHECK(ta[i] == tb[i]);
    const Tf& tc = c.at(name);
    for (std::size_t i = 0; i < ta.size(); ++i)
      if (ta[i] != tc[i]) any_diff_from_c = true;
  }
  CHECK(any_diff_from_c);

  for (const ParamSpec& s : enumerate_params(cfg)) {
    const Tf& t = a.at(s.name);
    if (s.fan_in == 0) {
      for (std::size_t i = 0; i < t.size(); ++i) CHECK(t[i] == 0.0f);
    } else {
      const double bound = std::sqrt(6.0 / s.fan_in);
      for (std::size_t i = 0; i < t.size(); ++i)
        CHECK(std::abs(double(t[i])) <= bound);
    }
  }
}

TEST_CASE("encoder depth bookkeeping for the full 15-conv stack") {
  GgpfnConfig cfg;
  cfg.channels = {1, 1, 1, 1};
  cfg.decoder_channels = {1, 1, 1};
  cfg.global_channels = {1, 1, 1, 1, 1};
  cfg.validate();
  ParamStore store = build_model<float>(cfg, 3);
  ParamRef<float> P(store);

  Rng rng(9);
  Tf in = rndf(rng, {1, 31, 256, 256});
  EncoderPyramid<float> pyr = encoder_forward(in, P, cfg);

  const int depths[4] = {23, 19, 13, 1};
  const int hw[4] = {256, 128, 64, 32};
  for (int g = 0; g < 4; ++g) {
    CHECK(pyr.scales[std::size_t(g)].dim(1) == depths[g]);
    CHECK(pyr.scales[std::size_t(g)].dim(2) == hw[g]);
    CHECK(pyr.scales[std::size_t(g)].dim(3) == hw[g]);
  }
  CHECK(pyr.ek.dim(1) == 1);
  CHECK(pyr.ek.dim(2) == 32);
  CHECK(pyr.ek.dim(3) == 32);

  CHECK_THROWS_AS(encoder_forward(rndf(rng, {1, 29, 256, 256}), P, cfg),
                  ShapeError);
}

TEST_CASE("zero input with fresh biases gives a zero pyramid and 0.5 heads") {
  GgpfnConfig cfg = tiny_config();
  ParamStore store = build_model<float>(cfg, 5);
  ParamRef<float> P(store);

  Tf in = Tf::zeros({1, 5, 32, 32});
  EncoderPyramid<float> pyr = encoder_forward(in, P, cfg);
  for (const Tf& s : pyr.scales)
    for (std::size_t i = 0; i < s.size(); ++i) CHECK(s[i] == 0.0f);

  std::array<Tf, 4> heads = multiscale_heads(pyr, P);
  const int hw[4] = {32, 16, 8, 4};
  for (int g = 0; g < 4; ++g) {
    CHECK(heads[std::size_t(g)].dim(1) == hw[g]);
    CHECK(heads[std::size_t(g)].dim(2) == hw[g]);
    for (std::size_t i = 0; i < heads[std::size_t(g)].size(); ++i)
      CHECK(heads[std::size_t(g)][i] == 0.5f);
  }
}

TEST_CASE("residual identity path survives dead convolutions") {
  GgpfnConfig cfg = tiny_config();
  cfg.group_convs = {2, 0, 0, 0};
  cfg.channels = {2, 2, 2, 2};
  cfg.validate();
  ParamStore store = build_model<float>(cfg, 1);
  REQUIRE(store.has("enc.g0.res.proj.w"));

  // Kill both convolutions; route the input through the projection alone.
  for (const std::string& name :
       {std::string("enc.g0.conv0.w"), std::string("enc.g0.conv1.w")}) {
    Tf& w = store.entry(name).value;
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = 0.0f;
  }
  Tf& pw = store.entry("enc.g0.res.proj.w").value;
  pw[0] = 2.0f;   // channel 0 <- 2 * input
  pw[1] = -1.0f;  // channel 1 <- -input, clipped by the relu

  Rng rng(4);
  Tf in = rndf(rng, {1, 5, 8, 8}, 0.1, 1.0);
  ParamRef<float> P(store);
  EncoderPyramid<float> pyr = encoder_forward(in, P, cfg);

  // Identity path center-crops depth 5 -> 1, i.e. slice index 2.
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) {
      const float v = in[std::size_t((2 * 8 + y) * 8 + x)];
      CHECK(pyr.scales[0][std::size_t((y)*8 + x)] ==
            doctest::Approx(2.0f * v).epsilon(1e-6));
      CHECK(pyr.scales[0][std::size_t(64 + y * 8 + x)] == 0.0f);
    }
}

TEST_CASE("one-off mode matches progressive output shapes") {
  GgpfnConfig prog = tiny_config();
  GgpfnConfig oneoff = tiny_config();
  oneoff.fusion_mode = FusionMode::one_off;

  ParamStore sp = build_model<float>(prog, 2);
  ParamStore so = build_model<float>(oneoff, 2);
  REQUIRE(so.has("enc.fuse.w"));
  CHECK(so.at("enc.fuse.w").shape() == std::vector<int>{4, 5, 3, 3});
  CHECK_FALSE(sp.has("enc.fuse.w"));

  Rng rng(8);
  Tf in = rndf(rng, {1, 5, 32, 32});
  EncoderPyramid<float> a = encoder_forward(in, ParamRef<float>(sp), prog);
  EncoderPyramid<float> b = run_encoder(in, ParamRef<float>(so), oneoff);
  CHECK(a.ek.shape() == b.ek.shape());
  for (int g = 0; g < 4; ++g) {
    CHECK(a.scales[std::size_t(g)].dim(0) == b.scales[std::size_t(g)].dim(0));
    CHECK(a.scales[std::size_t(g)].dim(2) == b.scales[std::size_t(g)].dim(2));
    CHECK(a.scales[std::size_t(g)].dim(3) == b.scales[std::size_t(g)].dim(3));
  }
  CHECK_THROWS_AS(one_off_encoder_forward(rndf(rng, {1, 3, 32, 32}),
                                          ParamRef<float>(so), oneoff),
                  ShapeError);
}

TEST_CASE("one-off fusion is a channel-stacked 2D convolution") {
  // No convolutions in the first group, so its scale exposes the fused map.
  GgpfnConfig cfg = tiny_config();
  cfg.fusion_steps = 1;
  cfg.group_convs = {0, 1, 0, 0};
  cfg.channels = {3, 4, 4, 4};
  cfg.fusion_mode = FusionMode::one_off;
  cfg.validate();
  ParamStore store = build_model<float>(cfg, 6);
  ParamRef<float> P(store);

  Rng rng(12);
  Tf in = rndf(rng, {1, 3, 8, 8});
  EncoderPyramid<float> pyr = one_off_encoder_forward(in, P, cfg);
  REQUIRE(pyr.scales[0].shape() == std::vector<int>{3, 1, 8, 8});

  Tensor<double> stacked = reshape(in, {3, 8, 8}).cast<double>();
  Tensor<double> expect =
      oracle::conv2d(stacked, store.at("enc.fuse.w").cast<double>(),
                     store.at("enc.fuse.b").cast<double>());
  for (std::size_t i = 0; i < expect.size(); ++i)
    CHECK(double(pyr.scales[0][i]) ==
          doctest::Approx(std::max(0.0, expect[i])).epsilon(1e-6));

  // A fusion kernel that only reads the central slice reproduces a plain 2D
  // convolution of that slice.
  Tf& fw = store.entry("enc.fuse.w").value;
  for (std::size_t i = 0; i < fw.size(); ++i) fw[i] = 0.0f;
  Rng rng2(13);
  Tf w2d = rndf(rng2, {3, 1, 3, 3});
  for (int c = 0; c < 3; ++c)
    for (int t = 0; t < 9; ++t)
      fw[std::size_t(c * 27 + 9 + t)] = w2d[std::size_t(c * 9 + t)];

  EncoderPyramid<float> pyr2 = one_off_encoder_forward(in, P, cfg);
  Tensor<double> central =
      reshape(center_crop(in, {1, 1, 8, 8}), {1, 8, 8}).cast<double>();
  Tensor<double> expect2 = oracle::conv2d(
      central, w2d.cast<double>(), store.at("enc.fuse.b").cast<double>());
  for (std::size_t i = 0; i < expect2.size(); ++i)
    CHECK(double(pyr2.scales[0][i]) ==
          doctest::Approx(std::max(0.0, expect2[i])).epsilon(1e-6));
}

TEST_CASE("context branch output sits at 1/32 with a 1/16 midpoint") {
  GgpfnConfig cfg;
  cfg.global_channels = {1, 1, 1, 1, 1};
  cfg.global_h = cfg.global_w = 224;
  cfg.validate();
  ParamStore store = build_model<float>(cfg, 20);
  ParamRef<float> P(store);

  Rng rng(3);
  GlobalFeatures<float> gf = global_forward(rndf(rng, {1, 224, 224}), P, cfg);
  CHECK(gf.f.shape() == std::vector<int>{1, 7, 7});
  CHECK(gf.f_prime.shape() == std::vector<int>{1, 14, 14});

  GlobalFeatures<float> zf = global_forward(Tf::zeros({1, 224, 224}), P, cfg);
  for (std::size_t i = 0; i < zf.f.size(); ++i) CHECK(zf.f[i] == 0.0f);
  for (std::size_t i = 0; i < zf.f_prime.size(); ++i)
    CHECK(zf.f_prime[i] == 0.0f);

  auto [pf, pfp] = global_heads(zf, P);
  for (std::size_t i = 0; i < pf.size(); ++i) CHECK(pf[i] == 0.5f);
  for (std::size_t i = 0; i < pfp.size(); ++i) CHECK(pfp[i] == 0.5f);

  CHECK_THROWS_AS(global_forward(rndf(rng, {1, 224, 192}), P, cfg),
                  ShapeError);
}

TEST_CASE("context branch at its smallest legal input") {
  GgpfnConfig cfg = tiny_config();
  ParamStore store = build_model<float>(cfg, 21);
  Rng rng(5);
  GlobalFeatures<float> gf =
      global_forward(rndf(rng, {1, 32, 32}), ParamRef<float>(store), cfg);
  CHECK(gf.f.shape() == std::vector<int>{8, 1, 1});
  CHECK(gf.f_prime.shape() == std::vector<int>{8, 2, 2});
}

TEST_CASE("sub-pixel gather centers and shift consistency") {
  // Column ramp: sampling at continuous column u reads back u exactly.
  Tf ramp = Tf::zeros({1, 256, 256});
  for (int y = 0; y < 256; ++y)
    for (int x = 0; x < 256; ++x)
      ramp[std::size_t(y * 256 + x)] = float(x);

  // 256-wide window at the origin of a 512 slice, 32 cells: cell (0,0) has
  // center 4.0 in slice units, i.e. 4/512 normalized, i.e. column 1.5 of the
  // 256-wide map.
  Tf g = subpixel_gather(ramp, 0, 0, 256, 256, 512, 512, 32, 32);
  REQUIRE(g.shape() == std::vector<int>{1, 32, 32});
  CHECK(g[0] == doctest::Approx(1.5).epsilon(1e-6));
  CHECK(g[1] == doctest::Approx(5.5).epsilon(1e-6));
  CHECK(g[31] == doctest::Approx(1.5 + 31 * 4.0).epsilon(1e-6));

  // Translating the window moves every sampling point by the same offset.
  Tf g2 = subpixel_gather(ramp, 0, 16, 256, 256, 512, 512, 32, 32);
  for (std::size_t i = 0; i < g.size(); ++i)
    CHECK(g2[i] - g[i] == doctest::Approx(8.0).epsilon(1e-6));

  Tf flat = constant({3, 7, 7}, 2.5f);
  Tf gc = subpixel_gather(flat, 0, 0, 512, 512, 512, 512, 8, 8);
  for (std::size_t i = 0; i < gc.size(); ++i) CHECK(gc[i] == 2.5f);

  CHECK_THROWS_AS(subpixel_gather(ramp, 300, 0, 256, 256, 512, 512, 8, 8),
                  ShapeError);
}

TEST_CASE("decoder output and independence from a disabled context branch") {
  GgpfnConfig cfg = tiny_config();
  ParamStore store = build_model<float>(cfg, 30);
  ParamRef<float> P(store);
  Rng rng(31);
  Tf in = rndf(rng, {1, 5, 32, 32});
  EncoderPyramid<float> pyr = encoder_forward(in, P, cfg);

  GlobalFeatures<float> gf =
      global_forward(rndf(rng, {1, 32, 32}), P, cfg);
  Tf fk = subpixel_gather(gf.f, 0, 0, 32, 32, 64, 64, pyr.ek.dim(2),
                          pyr.ek.dim(3));
  Tf out = decoder_forward(pyr, std::optional<Tf>(fk), P, cfg);
  REQUIRE(out.shape() == std::vector<int>{1, 32, 32});
  for (std::size_t i = 0; i < out.size(); ++i) {
    CHECK(out[i] > 0.0f);
    CHECK(out[i] < 1.0f);
  }

  CHECK_THROWS_AS(decoder_forward(pyr, std::optional<Tf>{}, P, cfg), ShapeError);
  Tf bad = Tf::zeros({8, 3, 4});
  CHECK_THROWS_AS(decoder_forward(pyr, std::optional<Tf>(bad), P, cfg),
                  ShapeError);

  // With the context branch off, its parameters must not matter at all.
  GgpfnConfig off = tiny_config();
  off.global_enabled = false;
  ParamStore s1 = build_model<float>(off, 40);
  Tf base = decoder_forward(encoder_forward(in, ParamRef<float>(s1), off),
                            std::optional<Tf>{}, ParamRef<float>(s1), off);
  for (const std::string& name : s1.names())
    if (name.rfind("glob.", 0) == 0 || name.rfind("ghead.", 0) == 0) {
      Tf& t = s1.entry(name).value;
      for (std::size_t i = 0; i < t.size(); ++i) t[i] += 17.0f;
    }
  Tf again = decoder_forward(encoder_forward(in, ParamRef<float>(s1), off),
                             std::optional<Tf>{}, ParamRef<float>(s1), off);
  for (std::size_t i = 0; i < base.size(); ++i) CHECK(base[i] == again[i]);
}

TEST_CASE("combined loss plug-in values") {
  auto half = [](std::vector<int> shape) { return constant(shape, 0.5f); };
  Tf gk = Tf::zeros({1, 8, 8});
  for (int i = 0; i < 8; ++i) gk[std::size_t(i * 8 + i)] = 1.0f;

  std::vector<Tf> pk = {half({1, 8, 8})};
  std::vector<Tf> gks = {gk};
  std::vector<std::array<Tf, 4>> pj = {{half({1, 8, 8}), half({1, 4, 4}),
                                        half({1, 2, 2}), half({1, 1, 1})}};
  const double ln2 = std::log(2.0);

  SUBCASE("all-0.5 predictions cost (2 + a + b) ln 2") {
    Tf loss =
        total_loss<float>(pk, gks, pj, std::optional<Tf>(half({1, 1, 1})),
                          std::optional<Tf>(half({1, 2, 2})),
                          std::optional<Tf>(constant({1, 1, 1}, 1.0f)),
                          std::optional<Tf>(Tf::zeros({1, 2, 2})), 0.5, 0.25);
    CHECK(double(loss[0]) ==
          doctest::Approx(2 * ln2 + 0.75 * ln2).epsilon(1e-5));
  }

  SUBCASE("zero context weights drop the context terms") {
    Tf loss = total_loss<float>(pk, gks, pj, std::nullopt, std::nullopt,
                                std::nullopt, std::nullopt, 0.0, 0.0);
    CHECK(double(loss[0]) == doctest::Approx(2 * ln2).epsilon(1e-5));
  }

  SUBCASE("nonzero weight with missing maps is rejected") {
    CHECK_THROWS_AS(total_loss<float>(pk, gks, pj, std::nullopt, std::nullopt,
                                      std::nullopt, std::nullopt, 0.5, 0.0),
                    ShapeError);
  }

  SUBCASE("duplicating the patch leaves the mean unchanged") {
    std::vector<Tf> pk2 = {pk[0], pk[0]};
    std::vector<Tf> gk2 = {gk, gk};
    std::vector<std::array<Tf, 4>> pj2 = {pj[0], pj[0]};
    Tf a = total_loss<float>(pk, gks, pj, std::nullopt, std::nullopt,
                             std::nullopt, std::nullopt, 0, 0);
    Tf b = total_loss<float>(pk2, gk2, pj2, std::nullopt, std::nullopt,
                             std::nullopt, std::nullopt, 0, 0);
    CHECK(double(a[0]) == doctest::Approx(double(b[0])).epsilon(1e-6));
  }

  SUBCASE("perfect predictions cost nearly nothing") {
    std::vector<Tf> perfect = {gk};
    std::vector<Tf> gjs = gt_pyramid(gk, 4);
    std::vector<std::array<Tf, 4>> pjp = {{gjs[0], gjs[1], gjs[2], gjs[3]}};
    Tf loss = total_loss<float>(perfect, gks, pjp, std::nullopt, std::nullopt,
                                std::nullopt, std::nullopt, 0, 0);
    CHECK(double(loss[0]) <= 1e-5);
  }
}

TEST_CASE("central slice picks the middle depth") {
  Tf x = Tf::zeros({2, 5, 2, 2});
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = float(i);
  Tf c = central_slice(x);
  REQUIRE(c.shape() == std::vector<int>{2, 2, 2});
  // Channel 0, depth 2 starts at element 2*4 = 8.
  CHECK(c[0] == 8.0f);
  CHECK(c[3] == 11.0f);
  // Channel 1, depth 2 starts at 5*4 + 8 = 28.
  CHECK(c[4] == 28.0f);
  CHECK_THROWS_AS(central_slice(Tf::zeros({2, 3, 3})), ShapeError);
}
