#pragma once

#include <cmath>
#include <utility>

#include "ggpfn/tape.hpp"
#include "ggpfn/tensor.hpp"

namespace ggpfn {

// Central finite-difference check of the tape against a scalar objective.
// `fn` maps the input tensor to a size-1 tensor and must work both tracked
// and untracked. Returns the max over elements of
//   |analytic - numeric| / max(1, |analytic|).
template <class S, class Fn>
double finite_diff_check(const Tensor<S>& x0, Fn&& fn, double h = 1e-5) {
  Tape<S> tape;
  Tensor<S> x = tape.watch(x0);
  Tensor<S> loss = fn(x);
  if (loss.size() != 1)
    throw ShapeError("finite_diff_check: objective must be scalar");
  tape.backward(loss);
  Tensor<S> analytic = tape.grad(x);

  Tensor<S> xp = x0.clone();
  double worst = 0.0;
  for (std::size_t i = 0; i < xp.size(); ++i) {
    const S orig = xp[i];
    xp[i] = orig + S(h);
    const double lp = double(fn(std::as_const(xp))[0]);
    xp[i] = orig - S(h);
    const double lm = double(fn(std::as_const(xp))[0]);
    xp[i] = orig;
    const double numeric = (lp - lm) / (2.0 * h);
    const double a = double(analytic[i]);
    const double rel = std::abs(a - numeric) / std::max(1.0, std::abs(a));
    worst = std::max(worst, rel);
  }
  return worst;
}

}  // namespace ggpfn
