#include <doctest.h>

#include <cmath>

#include "batchens/errors.hpp"
#include "batchens/trainer.hpp"
#include "gradcheck.hpp"

using namespace batchens;
using batchens::testing::random_tensor;

TEST_CASE("adam_step") {
  TrainConfig cfg;
  cfg.learning_rate = 0.005;

  SUBCASE("zero gradient leaves parameters unchanged") {
    Tensor w = Tensor::matrix(1, 3, {1.0, -2.0, 0.5});
    w.set_requires_grad(true);
    AdamState st = AdamState::init({&w});
    adam_step({&w}, st, cfg);
    CHECK(w.values == std::vector<double>{1.0, -2.0, 0.5});
  }
  SUBCASE("first step with unit gradient moves by about -lr") {
    Tensor w = Tensor::matrix(1, 1, {0.0});
    w.set_requires_grad(true);
    w.grad[0] = 1.0;
    AdamState st = AdamState::init({&w});
    adam_step({&w}, st, cfg);
    CHECK(w.values[0] == doctest::Approx(-0.005).epsilon(1e-6));
  }
  SUBCASE("update magnitude bounded by lr for constant unit gradient") {
    Tensor w = Tensor::matrix(1, 1, {0.0});
    w.set_requires_grad(true);
    AdamState st = AdamState::init({&w});
    double prev = 0.0;
    for (int t = 0; t < 50; ++t) {
      w.grad[0] = 1.0;
      adam_step({&w}, st, cfg);
      const double delta = std::abs(w.values[0] - prev);
      CHECK(delta <= cfg.learning_rate * (1.0 + 1e-9));
      prev = w.values[0];
    }
  }
  SUBCASE("state/parameter mismatch rejected") {
    Tensor w = Tensor::matrix(1, 1, {0.0});
    w.set_requires_grad(true);
    AdamState st = AdamState::init({&w});
    Tensor v = Tensor::matrix(1, 1, {0.0});
    v.set_requires_grad(true);
    CHECK_THROWS_AS(adam_step({&w, &v}, st, cfg), ContractError);
  }
}

namespace {

// y = 2x + heteroscedastic noise; enough signal for a couple of epochs.
void toy_regression(int n, Rng& rng, Tensor& X, std::vector<double>& y) {
  X = Tensor::zeros(n, 1);
  y.resize(n);
  for (int i = 0; i < n; ++i) {
    const double x = rng.uniform(0.0, 1.0);
    X.at(i, 0) = x;
    y[i] = 2.0 * x + 0.05 * (1.0 + x) * rng.normal();
  }
}

TrainConfig quick_config(int epochs) {
  TrainConfig cfg;
  cfg.epochs = epochs;
  cfg.batch_size = 32;
  return cfg;
}

}  // namespace

TEST_CASE("zero learning rate leaves every parameter unchanged") {
  Rng rng(31);
  ModelConfig mcfg;
  mcfg.task = Task::regression;
  mcfg.method = Method::single;
  mcfg.input_dim = 1;
  mcfg.hidden_dims = {8};
  Model m = build_model(mcfg, rng);
  std::vector<std::vector<double>> before;
  for (auto& [name, t] : m.parameters()) before.push_back(t->values);

  Tensor X;
  std::vector<double> y;
  Rng data(32);
  toy_regression(64, data, X, y);
  TrainConfig cfg = quick_config(3);
  cfg.learning_rate = 0.0;
  Rng train_rng(33);
  train_regression(m, X, y, cfg, train_rng);
  size_t i = 0;
  for (auto& [name, t] : m.parameters()) CHECK(t->values == before[i++]);
}

TEST_CASE("training reduces the loss on a linear toy problem") {
  int improved = 0;
  for (uint64_t seed = 1; seed <= 5; ++seed) {
    Rng rng(seed);
    ModelConfig mcfg;
    mcfg.task = Task::regression;
    mcfg.method = Method::single;
    mcfg.input_dim = 1;
    mcfg.hidden_dims = {16};
    Model m = build_model(mcfg, rng);
    Tensor X;
    std::vector<double> y;
    Rng data(seed * 100);
    toy_regression(256, data, X, y);
    TrainConfig cfg = quick_config(10);
    Rng train_rng(seed * 7);
    TrainResult r = train_regression(m, X, y, cfg, train_rng);
    if (r.epoch_loss.back() < r.epoch_loss.front()) ++improved;
  }
  CHECK(improved >= 4);
}

TEST_CASE("same seed trains to bit-identical parameters") {
  auto run_once = [](Method method) {
    Rng rng(77);
    ModelConfig mcfg;
    mcfg.task = Task::regression;
    mcfg.method = method;
    mcfg.input_dim = 1;
    mcfg.hidden_dims = {8};
    mcfg.K = 3;
    Model m = build_model(mcfg, rng);
    Tensor X;
    std::vector<double> y;
    Rng data(78);
    toy_regression(60, data, X, y);
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.batch_size = 30;
    Rng train_rng(79);
    train_regression(m, X, y, cfg, train_rng);
    std::vector<double> flat;
    for (auto& [name, t] : m.parameters())
      flat.insert(flat.end(), t->values.begin(), t->values.end());
    return flat;
  };
  for (Method method : {Method::single, Method::batch_ensemble, Method::deep_ensemble,
                        Method::mc_dropout}) {
    std::vector<double> a = run_once(method);
    std::vector<double> b = run_once(method);
    CHECK(a == b);  // bitwise
  }
}

TEST_CASE("ensemble training touches shared and member parameters") {
  Rng rng(41);
  ModelConfig mcfg;
  mcfg.task = Task::regression;
  mcfg.method = Method::batch_ensemble;
  mcfg.input_dim = 2;
  mcfg.hidden_dims = {8};
  mcfg.K = 4;
  Model m = build_model(mcfg, rng);
  Tensor W0 = m.ens->be_hidden[0].W;
  Tensor R0 = m.ens->be_hidden[0].R;

  Rng data(42);
  Tensor X = random_tensor(80, 2, data);
  std::vector<double> y(80);
  for (int i = 0; i < 80; ++i) y[i] = X.at(i, 0) - X.at(i, 1);
  TrainConfig cfg = quick_config(2);
  Rng train_rng(43);
  train_regression(m, X, y, cfg, train_rng);
  CHECK(m.ens->be_hidden[0].W.values != W0.values);
  CHECK(m.ens->be_hidden[0].R.values != R0.values);
}

TEST_CASE("replicate and rotate training modes both run") {
  for (bool replicate : {false, true}) {
    Rng rng(51);
    ModelConfig mcfg;
    mcfg.task = Task::regression;
    mcfg.method = Method::batch_ensemble;
    mcfg.input_dim = 1;
    mcfg.hidden_dims = {8};
    mcfg.K = 5;
    Model m = build_model(mcfg, rng);
    Tensor X;
    std::vector<double> y;
    Rng data(52);
    toy_regression(100, data, X, y);
    TrainConfig cfg = quick_config(2);
    cfg.replicate_training = replicate;
    Rng train_rng(53);
    TrainResult r = train_regression(m, X, y, cfg, train_rng);
    CHECK(r.epoch_loss.size() == 2);
    CHECK(std::isfinite(r.epoch_loss.back()));
  }
}

TEST_CASE("classification training runs and improves") {
  Rng rng(61);
  ModelConfig mcfg;
  mcfg.task = Task::classification;
  mcfg.method = Method::single;
  mcfg.input_dim = 2;
  mcfg.hidden_dims = {8};
  Model m = build_model(mcfg, rng);
  Rng data(62);
  Tensor X = random_tensor(200, 2, data);
  std::vector<int> y(200);
  for (int i = 0; i < 200; ++i) y[i] = X.at(i, 0) + X.at(i, 1) > 0 ? 1 : 0;
  TrainConfig cfg = quick_config(10);
  Rng train_rng(63);
  TrainResult r = train_classification(m, X, y, cfg, train_rng);
  CHECK(r.epoch_loss.back() < r.epoch_loss.front());
}

TEST_CASE("series training is autoregressive, never teacher forced") {
  Rng rng(71);
  ModelConfig mcfg;
  mcfg.task = Task::timeseries;
  mcfg.method = Method::single;
  mcfg.input_dim = 1;
  mcfg.hidden_dims = {8, 8};
  mcfg.rnn_hidden = 8;
  Model m = build_model(mcfg, rng);

  // simple sine series windows
  const int L = 6, H = 3, n_windows = 20;
  SeriesWindows w;
  w.contexts = Tensor::zeros(n_windows, L);
  w.targets = Tensor::zeros(n_windows, H);
  for (int i = 0; i < n_windows; ++i) {
    for (int t = 0; t < L; ++t) w.contexts.at(i, t) = 0.5 + 0.4 * std::sin(0.3 * (i + t));
    for (int h = 0; h < H; ++h) w.targets.at(i, h) = 0.5 + 0.4 * std::sin(0.3 * (i + L + h));
  }
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 10;
  cfg.context_len = L;
  cfg.horizon = H;
  Rng train_rng(72);
  TrainResult r = train_series(m, w, cfg, train_rng);
  CHECK(r.teacher_forced_feeds == 0);
  // two epochs x two batches x (H-1) fed-back steps
  CHECK(r.predicted_feeds == 2 * 2 * (H - 1));
  CHECK(std::isfinite(r.epoch_loss.back()));
}

TEST_CASE("grube series training runs with all methods") {
  for (Method method : {Method::batch_ensemble, Method::deep_ensemble}) {
    Rng rng(81);
    ModelConfig mcfg;
    mcfg.task = Task::timeseries;
    mcfg.method = method;
    mcfg.input_dim = 1;
    mcfg.hidden_dims = {8, 8};
    mcfg.rnn_hidden = 8;
    mcfg.K = 3;
    Model m = build_model(mcfg, rng);
    const int L = 4, H = 2;
    SeriesWindows w;
    w.contexts = Tensor::zeros(12, L);
    w.targets = Tensor::zeros(12, H);
    for (int i = 0; i < 12; ++i) {
      for (int t = 0; t < L; ++t) w.contexts.at(i, t) = 0.1 * (i + t);
      for (int h = 0; h < H; ++h) w.targets.at(i, h) = 0.1 * (i + L + h);
    }
    TrainConfig cfg;
    cfg.epochs = 1;
    cfg.batch_size = 6;
    cfg.context_len = L;
    cfg.horizon = H;
    Rng train_rng(82);
    TrainResult r = train_series(m, w, cfg, train_rng);
    CHECK(std::isfinite(r.epoch_loss.back()));
  }
}

TEST_CASE("window/config mismatch rejected") {
  Rng rng(91);
  ModelConfig mcfg;
  mcfg.task = Task::timeseries;
  mcfg.method = Method::single;
  mcfg.input_dim = 1;
  Model m = build_model(mcfg, rng);
  SeriesWindows w;
  w.contexts = Tensor::zeros(4, 6);
  w.targets = Tensor::zeros(4, 3);
  TrainConfig cfg;
  cfg.context_len = 12;
  cfg.horizon = 5;
  Rng train_rng(92);
  CHECK_THROWS_AS(train_series(m, w, cfg, train_rng), ConfigError);
}
