#pragma once

#include <doctest.h>

#include <functional>

#include "batchens/rng.hpp"
#include "batchens/tape.hpp"

namespace batchens::testing {

// Compares the tape gradient of `param` against central finite differences
// of the same loss. build_loss must construct the graph fresh on each call,
// leafing `param` through the pass it is given. Error is measured as
// |ad - fd| / max(1, |fd|) per coordinate.
inline void check_gradient(Tensor& param, const std::function<Var(Pass&)>& build_loss,
                           double tol = 1e-5, double h = 1e-5) {
  REQUIRE(param.requires_grad);
  param.zero_grad();
  Pass pass(true);
  Var loss = build_loss(pass);
  pass.tape.backward(loss);
  std::vector<double> ad = param.grad;

  const std::vector<double> saved = param.values;
  auto f = [&](const Tensor& probe) {
    param.values = probe.values;
    Pass p(false);
    double v = p.tape.value(build_loss(p)).item();
    return v;
  };
  Tensor probe;
  probe.shape = param.shape;
  probe.values = saved;
  Tensor fd = finite_diff_grad(f, probe, h);
  param.values = saved;
  param.zero_grad();

  for (size_t i = 0; i < ad.size(); ++i) {
    const double denom = std::max(1.0, std::abs(fd.values[i]));
    const double err = std::abs(ad[i] - fd.values[i]) / denom;
    INFO("coordinate " << i << ": ad=" << ad[i] << " fd=" << fd.values[i]);
    CHECK(err < tol);
  }
}

inline Tensor random_tensor(int r, int c, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t = Tensor::zeros(r, c);
  for (double& v : t.values) v = rng.uniform(lo, hi);
  return t;
}

}  // namespace batchens::testing
