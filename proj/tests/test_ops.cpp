#include <doctest.h>

#include <cmath>

#include "ggpfn/gradcheck.hpp"
#include "ggpfn/ops.hpp"
#include "ggpfn/rng.hpp"
#include "oracles.hpp"

using namespace ggpfn;
using Td = Tensor<double>;
using Tf = Tensor<float>;

namespace {

template <class S>
Tensor<S> rnd(Rng& rng, std::vector<int> shape, double lo = -1, double hi = 1) {
  Tensor<S> t = Tensor<S>::zeros(shape);
  for (std::size_t i = 0; i < t.size(); ++i)
    t.data()[i] = S(rng.uniform(lo, hi));
  return t;
}

double max_abs_diff(const Td& a, const Td& b) {
  REQUIRE(a.same_shape(b));
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

Td wsum_w;  // fixed weights for the current objective

Td wsum(const Td& y) {
  REQUIRE(y.same_shape(wsum_w));
  return sum(mul(y, wsum_w));
}

}  // namespace

TEST_CASE("conv2d matches the naive reference across random geometries") {
  Rng rng(derive_seed(99, "conv2d"));
  for (int it = 0; it < 12; ++it) {
    const int C = 1 + rng.below_int(3), K = 1 + rng.below_int(3);
    const int H = 3 + rng.below_int(6), W = 3 + rng.below_int(6);
    const int kh = 1 + 2 * rng.below_int(2);  // 1 or 3
    const int stride = 1 + rng.below_int(2);
    const int pad = rng.below_int(2) ? -1 : rng.below_int(2);
    const int eh = kh == 1 ? 1 : 3;
    if (pad >= 0 && (H + 2 * pad < eh || W + 2 * pad < eh)) continue;
    Td x = rnd<double>(rng, {C, H, W});
    Td k = rnd<double>(rng, {K, C, kh, kh});
    Td b = rnd<double>(rng, {K});
    Td got = conv2d(x, k, b, stride, pad);
    Td want = oracle::conv2d(x, k, b, stride, pad);
    CHECK(max_abs_diff(got, want) < 1e-12);
  }
}

TEST_CASE("conv2d same-padding geometry") {
  Rng rng(derive_seed(1, "g"));
  Td x = rnd<double>(rng, {2, 5, 7});
  Td k = rnd<double>(rng, {3, 2, 3, 3});
  Td b = rnd<double>(rng, {3});
  Td y = conv2d(x, k, b);  // pad = -1: same
  CHECK(y.dim(0) == 3);
  CHECK(y.dim(1) == 5);
  CHECK(y.dim(2) == 7);
  Td ys = conv2d(x, k, b, 2, 1);
  CHECK(ys.dim(1) == 3);  // (5+2-3)/2+1
  CHECK(ys.dim(2) == 4);  // (7+2-3)/2+1
  CHECK_THROWS_AS(conv2d(x, rnd<double>(rng, {3, 1, 3, 3}), b), ShapeError);
}

TEST_CASE("conv2d gradients: input, kernel, bias, strided") {
  Rng rng(derive_seed(2, "cg"));
  Td x = rnd<double>(rng, {2, 5, 6});
  Td k = rnd<double>(rng, {3, 2, 3, 3});
  Td b = rnd<double>(rng, {3});
  wsum_w = rnd<double>(rng, {3, 5, 6});
  CHECK(finite_diff_check(x, [&](const Td& v) { return wsum(conv2d(v, k, b)); }) < 1e-7);
  CHECK(finite_diff_check(k, [&](const Td& v) { return wsum(conv2d(x, v, b)); }) < 1e-7);
  CHECK(finite_diff_check(b, [&](const Td& v) { return wsum(conv2d(x, k, v)); }) < 1e-7);
  wsum_w = rnd<double>(rng, {3, 3, 3});
  CHECK(finite_diff_check(x, [&](const Td& v) { return wsum(conv2d(v, k, b, 2, 1)); }) < 1e-7);
}

TEST_CASE("conv3d_dvalid matches the naive reference and shrinks depth") {
  Rng rng(derive_seed(3, "c3"));
  for (int it = 0; it < 10; ++it) {
    const int C = 1 + rng.below_int(2), K = 1 + rng.below_int(2);
    const int D = 3 + rng.below_int(4), H = 3 + rng.below_int(4),
              W = 3 + rng.below_int(4);
    Td x = rnd<double>(rng, {C, D, H, W});
    Td k = rnd<double>(rng, {K, C, 3, 3, 3});
    Td b = rnd<double>(rng, {K});
    Td got = conv3d_dvalid(x, k, b);
    CHECK(got.dim(1) == D - 2);
    CHECK(max_abs_diff(got, oracle::conv3d_dvalid(x, k, b)) < 1e-12);
  }
  Td thin = rnd<double>(rng, {1, 2, 4, 4});
  Td k = rnd<double>(rng, {1, 1, 3, 3, 3});
  Td b = rnd<double>(rng, {1});
  CHECK_THROWS_AS(conv3d_dvalid(thin, k, b), ShapeError);
}

TEST_CASE("conv3d_dvalid gradients") {
  Rng rng(derive_seed(4, "c3g"));
  Td x = rnd<double>(rng, {2, 4, 4, 5});
  Td k = rnd<double>(rng, {2, 2, 3, 3, 3});
  Td b = rnd<double>(rng, {2});
  wsum_w = rnd<double>(rng, {2, 2, 4, 5});
  CHECK(finite_diff_check(x, [&](const Td& v) { return wsum(conv3d_dvalid(v, k, b)); }) < 1e-7);
  CHECK(finite_diff_check(k, [&](const Td& v) { return wsum(conv3d_dvalid(x, v, b)); }) < 1e-7);
  CHECK(finite_diff_check(b, [&](const Td& v) { return wsum(conv3d_dvalid(x, k, v)); }) < 1e-7);
}

TEST_CASE("transposed_conv2d doubles extents and matches scatter reference") {
  Rng rng(derive_seed(5, "tc"));
  for (int it = 0; it < 10; ++it) {
    const int C = 1 + rng.below_int(3), K = 1 + rng.below_int(3);
    const int H = 2 + rng.below_int(5), W = 2 + rng.below_int(5);
    Td x = rnd<double>(rng, {C, H, W});
    Td k = rnd<double>(rng, {C, K, 2, 2});
    Td b = rnd<double>(rng, {K});
    Td got = transposed_conv2d(x, k, b);
    CHECK(got.dim(1) == 2 * H);
    CHECK(got.dim(2) == 2 * W);
    CHECK(max_abs_diff(got, oracle::tconv2d(x, k, b)) < 1e-12);
  }
}

TEST_CASE("transposed_conv2d place/spread identity") {
  // One input pixel spreads its kernel over the matching 2x2 output block.
  Td x = Td::zeros({1, 2, 2});
  x.data()[3] = 1.0;  // (1,1)
  Td k = Td::from({1, 1, 2, 2}, {10, 20, 30, 40});
  Td b = Td::zeros({1});
  Td y = transposed_conv2d(x, k, b);
  CHECK(y[std::size_t(2 * 4 + 2)] == 10);
  CHECK(y[std::size_t(2 * 4 + 3)] == 20);
  CHECK(y[std::size_t(3 * 4 + 2)] == 30);
  CHECK(y[std::size_t(3 * 4 + 3)] == 40);
  CHECK(y[0] == 0);
}

TEST_CASE("transposed_conv2d gradients") {
  Rng rng(derive_seed(6, "tcg"));
  Td x = rnd<double>(rng, {2, 3, 4});
  Td k = rnd<double>(rng, {2, 3, 2, 2});
  Td b = rnd<double>(rng, {3});
  wsum_w = rnd<double>(rng, {3, 6, 8});
  CHECK(finite_diff_check(x, [&](const Td& v) { return wsum(transposed_conv2d(v, k, b)); }) < 1e-7);
  CHECK(finite_diff_check(k, [&](const Td& v) { return wsum(transposed_conv2d(x, v, b)); }) < 1e-7);
  CHECK(finite_diff_check(b, [&](const Td& v) { return wsum(transposed_conv2d(x, k, v)); }) < 1e-7);
}

TEST_CASE("max_pool forward, divisibility, and argmax-first gradient") {
  Rng rng(derive_seed(7, "mp"));
  for (int it = 0; it < 8; ++it) {
    const int C = 1 + rng.below_int(3);
    const int H = 2 * (1 + rng.below_int(4)), W = 2 * (1 + rng.below_int(4));
    Td x = rnd<double>(rng, {C, H, W});
    CHECK(max_abs_diff(max_pool(x, {2, 2}), oracle::max_pool(x, 2, 2)) == 0);
  }
  Td odd = rnd<double>(rng, {1, 3, 4});
  CHECK_THROWS_AS(max_pool(odd, {2, 2}), ShapeError);

  // Tie: gradient goes to the first maximal element in scan order.
  Tape<double> tape;
  Td x = tape.watch(Td::from({1, 2, 2}, {5.0, 5.0, 1.0, 5.0}));
  tape.backward(sum(max_pool(x, {2, 2})));
  Td g = tape.grad(x);
  CHECK(g[0] == 1.0);
  CHECK(g[1] == 0.0);
  CHECK(g[3] == 0.0);
}

TEST_CASE("max_pool rectangular windows and rank-4 depth-preserving pools") {
  Rng rng(derive_seed(8, "mp3"));
  Td x = rnd<double>(rng, {2, 4, 6});
  Td y = max_pool(x, {2, 3});
  CHECK(y.dim(1) == 2);
  CHECK(y.dim(2) == 2);
  Td x4 = rnd<double>(rng, {2, 3, 4, 6});
  Td y4 = max_pool(x4, {1, 2, 2});
  CHECK(y4.dim(1) == 3);
  CHECK(y4.dim(2) == 2);
  CHECK(y4.dim(3) == 3);
}

TEST_CASE("relu and sigmoid forward/backward") {
  Td x = Td::from({4}, {-2.0, -0.5, 0.5, 2.0});
  Td r = relu(x);
  CHECK(r[0] == 0.0);
  CHECK(r[3] == 2.0);
  Td s = sigmoid(x);
  CHECK(s[2] == doctest::Approx(1.0 / (1.0 + std::exp(-0.5))));
  // stability at large magnitudes
  Td big = Td::from({2}, {500.0, -500.0});
  Td sb = sigmoid(big);
  CHECK(sb[0] == doctest::Approx(1.0));
  CHECK(sb[1] == doctest::Approx(0.0));
  CHECK(std::isfinite(sb[1]));

  Rng rng(derive_seed(9, "rs"));
  Td xr = rnd<double>(rng, {3, 4});
  for (std::size_t i = 0; i < xr.size(); ++i)
    if (std::abs(xr[i]) < 0.1) xr.data()[i] = 0.2;
  wsum_w = rnd<double>(rng, {3, 4});
  CHECK(finite_diff_check(xr, [&](const Td& v) { return wsum(relu(v)); }) < 1e-8);
  CHECK(finite_diff_check(xr, [&](const Td& v) { return wsum(sigmoid(v)); }) < 1e-8);
}

TEST_CASE("concat_channels layout and split gradient") {
  Td a = Td::from({1, 2, 2}, {1, 2, 3, 4});
  Td b = Td::from({2, 2, 2}, {5, 6, 7, 8, 9, 10, 11, 12});
  Td c = concat_channels(a, b);
  CHECK(c.dim(0) == 3);
  CHECK(c[0] == 1);
  CHECK(c[4] == 5);
  CHECK(c[11] == 12);
  CHECK_THROWS_AS(concat_channels(a, Td::zeros({1, 3, 2})), ShapeError);

  Tape<double> tape;
  Td aw = tape.watch(a);
  Td bw = tape.watch(b);
  Td w = Td::zeros({3, 2, 2});
  for (std::size_t i = 0; i < w.size(); ++i) w.data()[i] = double(i + 1);
  tape.backward(sum(mul(concat_channels(aw, bw), w)));
  CHECK(tape.grad(aw)[3] == 4.0);
  CHECK(tape.grad(bw)[0] == 5.0);
  CHECK(tape.grad(bw)[7] == 12.0);
}

TEST_CASE("center_crop picks the centered window") {
  Td x = Td::zeros({1, 4, 5});
  for (std::size_t i = 0; i < x.size(); ++i) x.data()[i] = double(i);
  Td c = center_crop(x, {1, 2, 3});
  // rows 1..2, cols 1..3
  CHECK(c[0] == 6.0);
  CHECK(c[5] == 13.0);
  CHECK_THROWS_AS(center_crop(x, {1, 5, 3}), ShapeError);

  Rng rng(derive_seed(10, "cc"));
  Td xr = rnd<double>(rng, {2, 5, 5});
  wsum_w = rnd<double>(rng, {2, 3, 3});
  CHECK(finite_diff_check(xr, [&](const Td& v) { return wsum(center_crop(v, {2, 3, 3})); }) < 1e-8);
}

TEST_CASE("bilinear_sample: exact at cell centers, clamped at borders") {
  // 2x2 map, values 1..4; sampling a cell center returns that cell.
  Td f = Td::from({1, 2, 2}, {1, 2, 3, 4});
  std::vector<std::array<double, 2>> centers = {{0.25, 0.25}, {0.25, 0.75},
                                                {0.75, 0.25}, {0.75, 0.75}};
  Td y = bilinear_sample(f, centers);
  CHECK(y[0] == doctest::Approx(1));
  CHECK(y[1] == doctest::Approx(2));
  CHECK(y[2] == doctest::Approx(3));
  CHECK(y[3] == doctest::Approx(4));
  // midpoint blends all four
  Td m = bilinear_sample(f, {{0.5, 0.5}});
  CHECK(m[0] == doctest::Approx(2.5));
  // outside [0,1] clamps to the border value
  Td c = bilinear_sample(f, {{-1.0, -1.0}, {2.0, 2.0}});
  CHECK(c[0] == doctest::Approx(1));
  CHECK(c[1] == doctest::Approx(4));

  Rng rng(derive_seed(11, "bs"));
  Td fr = rnd<double>(rng, {2, 5, 6});
  std::vector<std::array<double, 2>> pts;
  for (int i = 0; i < 7; ++i)
    pts.push_back({rng.uniform(0.15, 0.85), rng.uniform(0.15, 0.85)});
  wsum_w = rnd<double>(rng, {2, 7});
  CHECK(finite_diff_check(fr, [&](const Td& v) { return wsum(bilinear_sample(v, pts)); }) < 1e-8);
}

TEST_CASE("bce_loss value, clamping, and gradient") {
  // -log(0.5) for p=0.5 against either class.
  Td p = Td::from({1, 1, 2}, {0.5, 0.5});
  Td g = Td::from({1, 1, 2}, {0.0, 1.0});
  Td l = bce_loss(p, g);
  CHECK(l[0] == doctest::Approx(std::log(2.0)));

  // p=0 against g=1 is clamped, not infinite.
  Td p0 = Td::from({1, 1, 1}, {0.0});
  Td g1 = Td::from({1, 1, 1}, {1.0});
  CHECK(std::isfinite(bce_loss(p0, g1)[0]));
  CHECK(bce_loss(p0, g1)[0] == doctest::Approx(-std::log(1e-7)));

  // Clamped elements get zero slope.
  Tape<double> tape;
  Td pw = tape.watch(p0);
  tape.backward(bce_loss(pw, g1));
  CHECK(tape.grad(pw)[0] == 0.0);

  Rng rng(derive_seed(12, "bce"));
  Td pr = rnd<double>(rng, {1, 3, 3}, 0.2, 0.8);
  Td gr = Td::zeros({1, 3, 3});
  for (std::size_t i = 0; i < gr.size(); ++i)
    gr.data()[i] = rng.uniform() < 0.5 ? 0.0 : 1.0;
  CHECK(finite_diff_check(pr, [&](const Td& v) { return bce_loss(v, gr); }) < 1e-7);
}

TEST_CASE("elementwise ops and reshape") {
  Td a = Td::from({2, 2}, {1, 2, 3, 4});
  Td b = Td::from({2, 2}, {10, 20, 30, 40});
  CHECK(add(a, b)[3] == 44);
  CHECK(mul(a, b)[2] == 90);
  CHECK(scale(a, -2.0)[1] == -4);
  CHECK(sum(a)[0] == 10);
  Td r = reshape(a, {4});
  CHECK(r.rank() == 1);
  CHECK(r[2] == 3);
  CHECK_THROWS_AS(reshape(a, {3}), ShapeError);
  CHECK_THROWS_AS(add(a, Td::zeros({2, 3})), ShapeError);
}
