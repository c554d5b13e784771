#include <doctest.h>

#include <cmath>

#include "batchens/errors.hpp"
#include "batchens/recurrent.hpp"
#include "gradcheck.hpp"

using namespace batchens;
using batchens::testing::check_gradient;
using batchens::testing::random_tensor;

namespace {

GruCell scalar_gru(double w, double b = 0.0) {
  Rng rng(0);
  GruCell c = GruCell::make(1, 1, rng);
  for (auto* g : {&c.reset, &c.update, &c.candidate}) {
    g->W = Tensor::matrix(2, 1, {w, w});
    g->W.set_requires_grad(true);
    g->b_in = Tensor::matrix(1, 1, {b});
    g->b_in.set_requires_grad(true);
    g->b_hid = Tensor::matrix(1, 1, {0.0});
    g->b_hid.set_requires_grad(true);
  }
  return c;
}

double sigmoid_ref(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

TEST_CASE("gru_step convex-combination endpoints") {
  Rng rng(1);
  GruCell c = GruCell::make(2, 3, rng);
  Tensor x = random_tensor(4, 2, rng);
  Tensor h = random_tensor(4, 3, rng);

  SUBCASE("update gate forced to 0 keeps the hidden state") {
    c.update.b_in = Tensor::full(1, 3, -1e3);
    Pass p(false);
    Var out = gru_step(p, c, p.constant(x), p.constant(h));
    for (size_t i = 0; i < h.values.size(); ++i)
      CHECK(p.tape.value(out).values[i] == doctest::Approx(h.values[i]));
  }
  SUBCASE("update gate forced to 1 replaces it with the candidate") {
    c.update.b_in = Tensor::full(1, 3, 1e3);
    Pass p(false);
    Var out = gru_step(p, c, p.constant(x), p.constant(h));
    // candidate recomputed by hand through the public pieces
    Pass q(false);
    Var xh = concat_cols(q.constant(x), q.constant(h));
    Var f = sigmoid(add_rowvec(add_rowvec(matmul(xh, q.leaf(c.reset.W)), q.leaf(c.reset.b_in)),
                               q.leaf(c.reset.b_hid)));
    Var xfh = concat_cols(q.constant(x), mul(f, q.constant(h)));
    Var cand = tanh_(add_rowvec(
        add_rowvec(matmul(xfh, q.leaf(c.candidate.W)), q.leaf(c.candidate.b_in)),
        q.leaf(c.candidate.b_hid)));
    for (size_t i = 0; i < h.values.size(); ++i)
      CHECK(p.tape.value(out).values[i] == doctest::Approx(q.tape.value(cand).values[i]));
  }
}

TEST_CASE("gru_step scalar oracle") {
  // p=q=1, all weights 0.5, biases 0, x=1, h=0. Independent evaluation of
  // the three gate formulas:
  //   f = sigmoid(0.5*1 + 0.5*0), z = same, cand = tanh(0.5*1 + 0.5*(f*0)),
  //   h' = (1-z)*0 + z*cand
  GruCell c = scalar_gru(0.5);
  Pass p(false);
  Var out = gru_step(p, c, p.constant(Tensor::scalar(1.0)), p.constant(Tensor::scalar(0.0)));
  const double z = sigmoid_ref(0.5);
  const double cand = std::tanh(0.5);
  CHECK(p.tape.value(out).item() == doctest::Approx(z * cand).epsilon(1e-12));
}

TEST_CASE("gru_step shape mismatch") {
  Rng rng(2);
  GruCell c = GruCell::make(2, 3, rng);
  Pass p(false);
  CHECK_THROWS_AS(
      gru_step(p, c, p.constant(Tensor::zeros(4, 3)), p.constant(Tensor::zeros(4, 3))),
      ShapeError);
}

TEST_CASE("gru parameter count") {
  Rng rng(3);
  GruCell c = GruCell::make(5, 7, rng);
  CHECK(c.param_count() == 3 * (7 * (5 + 7) + 2 * 7));
}

TEST_CASE("grube neutral adapters collapse to a single-bias gru") {
  Rng rng(4);
  const int K = 3, in = 2, hid = 4;
  GrubeCell be = GrubeCell::make(in, hid, K, rng);
  // Neutralize adapters; share one bias row b per gate.
  Rng rng2(5);
  GruCell plain = GruCell::make(in, hid, rng2);
  auto neutralize = [&](GrubeCell::BeGate& g, GruCell::Gate& pg) {
    g.ens.R = Tensor::full(K, in + hid, 1.0);
    g.ens.S = Tensor::full(K, hid, 1.0);
    Tensor b = random_tensor(1, hid, rng);
    for (int k = 0; k < K; ++k)
      for (int j = 0; j < hid; ++j) g.ens.B.at(k, j) = b.values[j];
    pg.W = g.ens.W;
    pg.b_in = b;
    pg.b_hid = Tensor::zeros(1, hid);
  };
  neutralize(be.reset, plain.reset);
  neutralize(be.update, plain.update);
  neutralize(be.candidate, plain.candidate);

  Tensor x = random_tensor(2, in, rng);
  Tensor h = random_tensor(2, hid, rng);
  Pass p(false);
  Var be_out = grube_step(p, be, repeat_rows(p.constant(x), K), repeat_rows(p.constant(h), K));
  Var g_out = gru_step(p, plain, p.constant(x), p.constant(h));
  const Tensor& bo = p.tape.value(be_out);
  const Tensor& go = p.tape.value(g_out);
  for (int i = 0; i < 2; ++i)
    for (int k = 0; k < K; ++k)
      for (int j = 0; j < hid; ++j)
        CHECK(std::abs(bo.at(i * K + k, j) - go.at(i, j)) <= 1e-10);
}

TEST_CASE("grube members diverge when an adapter row differs") {
  Rng rng(6);
  const int K = 2;
  GrubeCell c = GrubeCell::make(1, 3, K, rng);
  Tensor x = random_tensor(1, 1, rng);
  Tensor h = random_tensor(1, 3, rng);
  Pass p(false);
  Var out = grube_step(p, c, repeat_rows(p.constant(x), K), repeat_rows(p.constant(h), K));
  const Tensor& o = p.tape.value(out);
  bool differ = false;
  for (int j = 0; j < 3; ++j)
    if (o.at(0, j) != o.at(1, j)) differ = true;
  CHECK(differ);
}

TEST_CASE("grube update gate saturated low freezes every member") {
  Rng rng(7);
  const int K = 2;
  GrubeCell c = GrubeCell::make(2, 3, K, rng);
  c.update.ens.B = Tensor::full(K, 3, -1e3);
  Tensor x = random_tensor(2, 2, rng);
  Tensor h = random_tensor(2 * K, 3, rng);
  Pass p(false);
  Var out = grube_step(p, c, repeat_rows(p.constant(x), K), p.constant(h));
  for (size_t i = 0; i < h.values.size(); ++i)
    CHECK(p.tape.value(out).values[i] == doctest::Approx(h.values[i]));
}

TEST_CASE("grube parameter counts across gate masks") {
  Rng rng(8);
  const int in = 1, hid = 32, K = 10;
  const long be_gate = static_cast<long>(in + hid) * hid + K * ((in + hid) + hid + hid);
  const long plain_gate = static_cast<long>(in + hid) * hid + hid;
  long max_count = 0;
  std::vector<std::string> masks = {"C", "Z", "F", "CZ", "CF", "ZF", "CZF"};
  for (const auto& label : masks) {
    GrubeCell c = GrubeCell::make(in, hid, K, rng, GateMask::from_label(label));
    long expect = 0;
    for (int g = 0; g < 3; ++g) expect += plain_gate;
    expect += static_cast<long>(label.size()) * (be_gate - plain_gate);
    CHECK(c.param_count() == expect);
    max_count = std::max(max_count, c.param_count());
  }
  GrubeCell full = GrubeCell::make(in, hid, K, rng, GateMask::from_label("CZF"));
  CHECK(full.param_count() == max_count);
  // strictly largest: every reduced mask is below the full one
  for (const auto& label : masks) {
    if (label == "CZF") continue;
    GrubeCell c = GrubeCell::make(in, hid, K, rng, GateMask::from_label(label));
    CHECK(c.param_count() < full.param_count());
  }
}

TEST_CASE("unroll") {
  Rng rng(9);
  GruCell c = GruCell::make(1, 2, rng);
  Tensor h0 = Tensor::zeros(1, 2);

  SUBCASE("L=1 equals a single step") {
    Tensor x = random_tensor(1, 1, rng);
    Pass p(false);
    Var h0v = p.constant(h0);
    Var xv = p.constant(x);
    auto hs = unroll_gru(p, c, {xv}, h0v);
    Var single = gru_step(p, c, xv, h0v);
    CHECK(p.tape.value(hs.back()).values == p.tape.value(single).values);
  }
  SUBCASE("frozen cell keeps h0 for any length") {
    c.update.b_in = Tensor::full(1, 2, -1e3);
    Tensor h = random_tensor(1, 2, rng);
    Pass p(false);
    std::vector<Var> steps;
    for (int i = 0; i < 5; ++i) steps.push_back(p.constant(random_tensor(1, 1, rng)));
    auto hs = unroll_gru(p, c, steps, p.constant(h));
    for (size_t i = 0; i < h.values.size(); ++i)
      CHECK(p.tape.value(hs.back()).values[i] == doctest::Approx(h.values[i]));
  }
  SUBCASE("L=3 equals three manual steps") {
    Pass p(false);
    std::vector<Var> steps;
    for (int i = 0; i < 3; ++i) steps.push_back(p.constant(random_tensor(1, 1, rng)));
    auto hs = unroll_gru(p, c, steps, p.constant(h0));
    Var h = p.constant(h0);
    for (int i = 0; i < 3; ++i) h = gru_step(p, c, steps[i], h);
    CHECK(p.tape.value(hs.back()).values == p.tape.value(h).values);
  }
  SUBCASE("empty sequence rejected") {
    Pass p(false);
    CHECK_THROWS_AS(unroll_gru(p, c, {}, p.constant(h0)), ContractError);
  }
}

TEST_CASE("hidden state magnitude bound") {
  // |h_t| <= max(|h_{t-1}|, 1) since the candidate lies in (-1,1).
  Rng rng(10);
  GruCell c = GruCell::make(2, 3, rng);
  Tensor x = random_tensor(5, 2, rng, -3.0, 3.0);
  Tensor h = random_tensor(5, 3, rng, -2.0, 2.0);
  Pass p(false);
  Var out = gru_step(p, c, p.constant(x), p.constant(h));
  const Tensor& o = p.tape.value(out);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 3; ++j)
      CHECK(std::abs(o.at(i, j)) <= std::max(std::abs(h.at(i, j)), 1.0) + 1e-12);
}

TEST_CASE("gru and grube gradients through 3-step BPTT") {
  Rng rng(11);
  SUBCASE("plain gru") {
    GruCell c = GruCell::make(1, 1, rng);
    std::vector<Tensor> xs;
    for (int i = 0; i < 3; ++i) xs.push_back(random_tensor(2, 1, rng));
    Tensor w = random_tensor(2, 1, rng);
    auto loss = [&](Pass& p) {
      std::vector<Var> steps;
      for (auto& x : xs) steps.push_back(p.constant(x));
      auto hs = unroll_gru(p, c, steps, p.constant(Tensor::zeros(2, 1)));
      return sum(mul(hs.back(), p.constant(w)));
    };
    check_gradient(c.reset.W, loss);
    check_gradient(c.update.W, loss);
    check_gradient(c.candidate.W, loss);
    check_gradient(c.candidate.b_in, loss);
  }
  SUBCASE("grube") {
    const int K = 2;
    GrubeCell c = GrubeCell::make(1, 2, K, rng);
    std::vector<Tensor> xs;
    for (int i = 0; i < 3; ++i) xs.push_back(random_tensor(2 * K, 1, rng));
    Tensor w = random_tensor(2 * K, 2, rng);
    auto loss = [&](Pass& p) {
      std::vector<Var> steps;
      for (auto& x : xs) steps.push_back(p.constant(x));
      auto hs = unroll_grube(p, c, steps, p.constant(Tensor::zeros(2 * K, 2)));
      return sum(mul(hs.back(), p.constant(w)));
    };
    check_gradient(c.candidate.ens.W, loss);
    check_gradient(c.candidate.ens.R, loss);
    check_gradient(c.update.ens.S, loss);
    check_gradient(c.reset.ens.B, loss);
  }
}
