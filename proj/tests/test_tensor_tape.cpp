#include <doctest.h>

#include "ggpfn/ops.hpp"
#include "ggpfn/tensor.hpp"

using namespace ggpfn;

TEST_CASE("tensor construction and element access") {
  Tensor<float> t = Tensor<float>::zeros({2, 3});
  CHECK(t.size() == 6);
  CHECK(t.rank() == 2);
  CHECK(t.dim(0) == 2);
  CHECK(t.dim(1) == 3);
  t.data()[5] = 4.5f;
  CHECK(t[5] == 4.5f);
  CHECK_THROWS_AS(Tensor<float>::zeros({2, 0}), ShapeError);
  CHECK_THROWS_AS(Tensor<float>::zeros({-1, 3}), ShapeError);

  Tensor<float> u = Tensor<float>::from({3}, {1.f, 2.f, 3.f});
  CHECK(u[2] == 3.f);
  CHECK_THROWS_AS(Tensor<float>::from({4}, {1.f}), ShapeError);
}

TEST_CASE("clone detaches and deep-copies") {
  Tape<float> tape;
  Tensor<float> x = tape.watch(Tensor<float>::from({2}, {1.f, 2.f}));
  CHECK(x.tracked());
  Tensor<float> c = x.clone();
  CHECK_FALSE(c.tracked());
  c.data()[0] = 99.f;
  CHECK(x[0] == 1.f);
}

TEST_CASE("backward requires a tracked scalar") {
  Tape<float> tape;
  Tensor<float> x = tape.watch(Tensor<float>::from({2}, {1.f, 2.f}));
  CHECK_THROWS_AS(tape.backward(x), Error);  // not scalar
  Tensor<float> plain = Tensor<float>::from({1}, {3.f});
  CHECK_THROWS_AS(tape.backward(plain), Error);  // not tracked
}

TEST_CASE("simple chain: d/dx sum(x*x + 2x) = 2x + 2") {
  Tape<float> tape;
  Tensor<float> x = tape.watch(Tensor<float>::from({3}, {1.f, -2.f, 0.5f}));
  Tensor<float> y = add(mul(x, x), scale(x, 2.0));
  Tensor<float> loss = sum(y);
  tape.backward(loss);
  Tensor<float> g = tape.grad(x);
  CHECK(g[0] == doctest::Approx(4.0));
  CHECK(g[1] == doctest::Approx(-2.0));
  CHECK(g[2] == doctest::Approx(3.0));
}

TEST_CASE("gradient accumulates when a node fans out") {
  Tape<float> tape;
  Tensor<float> x = tape.watch(Tensor<float>::from({2}, {3.f, 4.f}));
  Tensor<float> loss = sum(add(x, x));
  tape.backward(loss);
  Tensor<float> g = tape.grad(x);
  CHECK(g[0] == doctest::Approx(2.0));
  CHECK(g[1] == doctest::Approx(2.0));
}

TEST_CASE("watched but unused leaves get zero gradients") {
  Tape<float> tape;
  Tensor<float> x = tape.watch(Tensor<float>::from({2}, {1.f, 2.f}));
  Tensor<float> unused = tape.watch(Tensor<float>::from({2}, {5.f, 6.f}));
  tape.backward(sum(x));
  Tensor<float> g = tape.grad(unused);
  CHECK(g[0] == 0.f);
  CHECK(g[1] == 0.f);
}

TEST_CASE("ops without a tape stay untracked") {
  Tensor<float> a = Tensor<float>::from({2}, {1.f, 2.f});
  Tensor<float> b = Tensor<float>::from({2}, {3.f, 4.f});
  Tensor<float> c = add(a, b);
  CHECK_FALSE(c.tracked());
  CHECK(c[0] == 4.f);
  CHECK(c[1] == 6.f);
}

TEST_CASE("mixing tensors from two tapes is rejected") {
  Tape<float> t1, t2;
  Tensor<float> a = t1.watch(Tensor<float>::from({2}, {1.f, 2.f}));
  Tensor<float> b = t2.watch(Tensor<float>::from({2}, {3.f, 4.f}));
  CHECK_THROWS_AS(add(a, b), Error);
}

TEST_CASE("tracked op with one untracked operand still flows gradient") {
  Tape<float> tape;
  Tensor<float> x = tape.watch(Tensor<float>::from({2}, {1.f, 2.f}));
  Tensor<float> k = Tensor<float>::from({2}, {10.f, 20.f});
  tape.backward(sum(mul(x, k)));
  Tensor<float> g = tape.grad(x);
  CHECK(g[0] == doctest::Approx(10.0));
  CHECK(g[1] == doctest::Approx(20.0));
}

TEST_CASE("cast converts scalar type and drops tracking") {
  Tape<float> tape;
  Tensor<float> x = tape.watch(Tensor<float>::from({2}, {1.5f, -2.5f}));
  Tensor<double> d = x.cast<double>();
  CHECK_FALSE(d.tracked());
  CHECK(d[0] == doctest::Approx(1.5));
  CHECK(d[1] == doctest::Approx(-2.5));
}

TEST_CASE("second backward on the same tape is rejected") {
  Tape<float> tape;
  Tensor<float> x = tape.watch(Tensor<float>::from({1}, {2.f}));
  Tensor<float> l = mul(x, x);
  tape.backward(l);
  CHECK_THROWS(tape.backward(l));
}
