#include <doctest.h>

#include <cmath>
#include <cstdio>

#include "batchens/errors.hpp"
#include "batchens/models.hpp"
#include "gradcheck.hpp"

using namespace batchens;
using batchens::testing::random_tensor;

namespace {

ModelConfig tabular_config(Task task, Method method, int input_dim, int K = 10) {
  ModelConfig cfg;
  cfg.task = task;
  cfg.method = method;
  cfg.input_dim = input_dim;
  cfg.K = K;
  return cfg;
}

long count_for(Task task, Method method, int input_dim) {
  Rng rng(1);
  ModelConfig cfg = tabular_config(task, method, input_dim);
  Model m = build_model(cfg, rng);
  return m.param_count();
}

}  // namespace

TEST_CASE("parameter counts across model types") {
  // classification, hidden [32,32], K=10, fused class head
  CHECK(count_for(Task::classification, Method::batch_ensemble, 108) == 7584);
  CHECK(count_for(Task::classification, Method::mc_dropout, 108) == 4610);
  CHECK(count_for(Task::classification, Method::single, 108) == 4610);
  CHECK(count_for(Task::classification, Method::deep_ensemble, 108) == 46100);
  CHECK(count_for(Task::classification, Method::batch_ensemble, 30) == 4308);
  CHECK(count_for(Task::classification, Method::mc_dropout, 30) == 2114);
  CHECK(count_for(Task::classification, Method::deep_ensemble, 30) == 21140);
  CHECK(count_for(Task::classification, Method::batch_ensemble, 5) == 3258);
  CHECK(count_for(Task::classification, Method::mc_dropout, 5) == 1314);
  CHECK(count_for(Task::classification, Method::deep_ensemble, 5) == 13140);

  // regression, two separate heads
  CHECK(count_for(Task::regression, Method::batch_ensemble, 8) == 3704);
  CHECK(count_for(Task::regression, Method::mc_dropout, 8) == 1410);
  CHECK(count_for(Task::regression, Method::single, 8) == 1410);
  CHECK(count_for(Task::regression, Method::deep_ensemble, 8) == 14100);
  CHECK(count_for(Task::regression, Method::batch_ensemble, 10) == 3788);
  CHECK(count_for(Task::regression, Method::mc_dropout, 10) == 1474);
  CHECK(count_for(Task::regression, Method::deep_ensemble, 10) == 14740);

  // univariate sequence models: recurrent cell + two-layer head stack
  CHECK(count_for(Task::timeseries, Method::batch_ensemble, 1) == 10790);
  CHECK(count_for(Task::timeseries, Method::mc_dropout, 1) == 5538);
  CHECK(count_for(Task::timeseries, Method::single, 1) == 5538);
  CHECK(count_for(Task::timeseries, Method::deep_ensemble, 1) == 55380);
}

TEST_CASE("config validation") {
  Rng rng(2);
  ModelConfig cfg = tabular_config(Task::regression, Method::single, 4);
  cfg.hidden_dims.clear();
  CHECK_THROWS_AS(build_model(cfg, rng), ConfigError);

  cfg = tabular_config(Task::regression, Method::batch_ensemble, 4);
  cfg.K = 0;
  CHECK_THROWS_AS(build_model(cfg, rng), ConfigError);

  cfg = tabular_config(Task::regression, Method::batch_ensemble, 4);
  cfg.gate_mask = GateMask::from_label("CZ");
  CHECK_THROWS_AS(build_model(cfg, rng), ConfigError);

  cfg = tabular_config(Task::regression, Method::batch_ensemble, 4);
  cfg.be_layer_count = 3;  // only two hidden layers
  CHECK_THROWS_AS(build_model(cfg, rng), ConfigError);

  Model unbuilt;
  Rng prng(3);
  CHECK_THROWS_AS(predict(unbuilt, Tensor::zeros(2, 4), prng), ContractError);
}

TEST_CASE("neutral ensemble with K=1 predicts like the single model") {
  // identical seed, no adapters: shared draws make the nets identical
  Rng rng_a(7), rng_b(7);
  ModelConfig single_cfg = tabular_config(Task::regression, Method::single, 6, 1);
  ModelConfig be_cfg = tabular_config(Task::regression, Method::batch_ensemble, 6, 1);
  be_cfg.adapter_mask = AdapterMask{false, false, false};
  Model single = build_model(single_cfg, rng_a);
  Model be = build_model(be_cfg, rng_b);

  Rng xr(8);
  Tensor X = random_tensor(40, 6, xr);
  Rng pr1(9), pr2(9);
  PredictiveDistribution ps = predict(single, X, pr1);
  PredictiveDistribution pb = predict(be, X, pr2);
  for (int i = 0; i < 40; ++i) {
    CHECK(std::abs(ps.mu_star[i] - pb.mu_star[i]) <= 1e-12);
    CHECK(std::abs(ps.var_star[i] - pb.var_star[i]) <= 1e-12 * std::max(1.0, ps.var_star[i]));
  }
}

TEST_CASE("predict shapes and member behavior") {
  Rng rng(11);
  Rng xr(12);
  Tensor X = random_tensor(16, 5, xr);

  SUBCASE("single model is one member, aggregation is identity") {
    Model m = build_model(tabular_config(Task::regression, Method::single, 5), rng);
    Rng pr(13);
    PredictiveDistribution p = predict(m, X, pr);
    CHECK(p.K == 1);
    for (int i = 0; i < p.n; ++i) {
      CHECK(p.mu_star[i] == doctest::Approx(p.mu_at(i, 0)));
      CHECK(p.var_star[i] == doctest::Approx(p.var_at(i, 0)));
    }
  }
  SUBCASE("deep ensemble with copied members has zero epistemic spread") {
    Model m = build_model(tabular_config(Task::regression, Method::deep_ensemble, 5, 4), rng);
    for (size_t k = 1; k < m.plain.size(); ++k) m.plain[k] = m.plain[0];
    Rng pr(14);
    PredictiveDistribution p = predict(m, X, pr);
    for (int i = 0; i < p.n; ++i)
      for (int k = 1; k < p.K; ++k) CHECK(p.mu_at(i, k) == doctest::Approx(p.mu_at(i, 0)));
  }
  SUBCASE("mc dropout with rate zero repeats the same pass") {
    ModelConfig cfg = tabular_config(Task::regression, Method::mc_dropout, 5, 6);
    cfg.dropout_rate = 0.0;
    Model m = build_model(cfg, rng);
    Rng pr(15);
    PredictiveDistribution p = predict(m, X, pr);
    for (int i = 0; i < p.n; ++i)
      for (int k = 1; k < p.K; ++k) {
        CHECK(p.mu_at(i, k) == doctest::Approx(p.mu_at(i, 0)));
        CHECK(p.var_at(i, k) == doctest::Approx(p.var_at(i, 0)));
      }
  }
  SUBCASE("mc dropout with positive rate varies across members") {
    ModelConfig cfg = tabular_config(Task::regression, Method::mc_dropout, 5, 6);
    Model m = build_model(cfg, rng);
    Rng pr(16);
    PredictiveDistribution p = predict(m, X, pr);
    bool any_differ = false;
    for (int i = 0; i < p.n && !any_differ; ++i)
      for (int k = 1; k < p.K; ++k)
        if (p.mu_at(i, k) != p.mu_at(i, 0)) any_differ = true;
    CHECK(any_differ);
  }
  SUBCASE("classification probabilities are rows summing to one") {
    Model m = build_model(tabular_config(Task::classification, Method::batch_ensemble, 5), rng);
    Rng pr(17);
    PredictiveDistribution p = predict(m, X, pr);
    CHECK(p.C == 2);
    for (int i = 0; i < p.n; ++i) {
      double s = 0.0;
      for (int c = 0; c < p.C; ++c) s += p.avg_prob_at(i, c);
      CHECK(s == doctest::Approx(1.0).epsilon(1e-9));
      for (int k = 0; k < p.K; ++k) {
        double sk = 0.0;
        for (int c = 0; c < p.C; ++c) sk += p.prob_at(i, k, c);
        CHECK(sk == doctest::Approx(1.0).epsilon(1e-9));
      }
    }
  }
}

TEST_CASE("variance head is clamped positive") {
  Rng rng(19);
  Model m = build_model(tabular_config(Task::regression, Method::single, 3, 1), rng);
  // blow up the log-variance head bias; clamp keeps exp() finite
  m.plain[0].logvar_head.b = Tensor::full(1, 1, 1e6);
  Rng xr(20), pr(21);
  Tensor X = random_tensor(8, 3, xr);
  PredictiveDistribution p = predict(m, X, pr);
  for (int i = 0; i < p.n; ++i) {
    CHECK(p.var_star[i] > 0.0);
    CHECK(p.var_star[i] <= std::exp(ModelConfig::kLogVarMax) * 1.0001);
  }
}

TEST_CASE("layer ablation splits hidden stack into plain prefix and ensemble tail") {
  Rng rng(23);
  ModelConfig cfg = tabular_config(Task::regression, Method::batch_ensemble, 4, 3);
  cfg.hidden_dims = {16, 16, 16, 16};
  cfg.be_layer_count = 2;
  Model m = build_model(cfg, rng);
  CHECK(m.ens->plain_prefix.size() == 2);
  CHECK(m.ens->be_hidden.size() == 2);

  // parameter count grows with the number of ensemble layers
  long prev = 0;
  for (int k = 0; k <= 4; ++k) {
    cfg.be_layer_count = k;
    Rng r(23);
    Model mk = build_model(cfg, r);
    CHECK(mk.param_count() > prev);
    prev = mk.param_count();
  }

  // forward still works end to end with the mixed stack
  Rng xr(24), pr(25);
  Tensor X = random_tensor(6, 4, xr);
  cfg.be_layer_count = 2;
  Rng r2(26);
  Model m2 = build_model(cfg, r2);
  PredictiveDistribution p = predict(m2, X, pr);
  CHECK(p.n == 6);
  CHECK(p.K == 3);
}

TEST_CASE("checkpoint round-trips bit-exactly") {
  Rng rng(29);
  ModelConfig cfg = tabular_config(Task::timeseries, Method::batch_ensemble, 1, 4);
  cfg.gate_mask = GateMask::from_label("CZ");
  Model m = build_model(cfg, rng);
  const std::string path = "test_checkpoint.json";
  save_model(m, 1234, path);
  uint64_t seed = 0;
  Model loaded = load_model(path, &seed);
  CHECK(seed == 1234);
  auto orig = m.parameters();
  auto back = loaded.parameters();
  REQUIRE(orig.size() == back.size());
  for (size_t i = 0; i < orig.size(); ++i) {
    CHECK(orig[i].first == back[i].first);
    CHECK(orig[i].second->values == back[i].second->values);  // bitwise equality
  }
  std::remove(path.c_str());
}

TEST_CASE("model config json round-trip") {
  ModelConfig cfg;
  cfg.task = Task::timeseries;
  cfg.method = Method::batch_ensemble;
  cfg.K = 7;
  cfg.gate_mask = GateMask::from_label("CF");
  cfg.adapter_mask = AdapterMask{true, false, true};
  cfg.init_scheme = InitScheme::orthogonal;
  cfg.ortho_lambda = 1e-3;
  nlohmann::json j = cfg;
  ModelConfig back = j.get<ModelConfig>();
  CHECK(back.K == 7);
  CHECK(back.gate_mask.label() == "CF");
  CHECK(back.adapter_mask.label() == "RB");
  CHECK(back.init_scheme == InitScheme::orthogonal);
  CHECK(back.ortho_lambda == 1e-3);
}
