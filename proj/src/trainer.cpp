#include "batchens/trainer.hpp"

#include <chrono>
#include <cmath>

#include "batchens/errors.hpp"
#include "batchens/losses.hpp"

namespace batchens {

void TrainConfig::validate() const {
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  if (learning_rate < 0.0) throw ConfigError("learning_rate must be >= 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (weight_decay < 0.0) throw ConfigError("weight_decay must be >= 0");
  if (context_len < 1 || horizon < 1) throw ConfigError("context_len and horizon must be >= 1");
}

AdamState AdamState::init(const std::vector<Tensor*>& params) {
  AdamState s;
  s.m.reserve(params.size());
  s.v.reserve(params.size());
  for (const Tensor* p : params) {
    s.m.emplace_back(p->size(), 0.0);
    s.v.emplace_back(p->size(), 0.0);
  }
  return s;
}

void adam_step(const std::vector<Tensor*>& params, AdamState& state, const TrainConfig& cfg) {
  if (params.size() != state.m.size())
    throw ContractError("adam_step: state holds " + std::to_string(state.m.size()) +
                        " buffers for " + std::to_string(params.size()) + " parameters");
  state.step += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i];
    if (p.grad.size() != p.values.size())
      throw ContractError("adam_step: parameter " + std::to_string(i) + " has no gradient");
    std::vector<double>& m = state.m[i];
    std::vector<double>& v = state.v[i];
    for (size_t j = 0; j < p.values.size(); ++j) {
      double g = p.grad[j];
      if (cfg.weight_decay != 0.0) g += cfg.weight_decay * p.values[j];
      m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g;
      v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g * g;
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      p.values[j] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.epsilon);
    }
  }
}

namespace {

std::vector<Tensor*> member_params(Model& model, int member) {
  std::vector<Tensor*> out;
  const std::string prefix = "m" + std::to_string(member) + "/";
  for (auto& [name, t] : model.parameters())
    if (name.rfind(prefix, 0) == 0) out.push_back(t);
  return out;
}

std::vector<Tensor*> ensemble_params(Model& model) {
  std::vector<Tensor*> out;
  for (auto& [name, t] : model.parameters())
    if (name.rfind("ens/", 0) == 0) out.push_back(t);
  return out;
}

void zero_grads(const std::vector<Tensor*>& params) {
  for (Tensor* p : params) p->zero_grad();
}

Tensor gather_rows(const Tensor& X, const std::vector<int>& order, int begin, int count,
                   int repeats) {
  Tensor out = Tensor::zeros(count * repeats, X.cols());
  const int d = X.cols();
  for (int i = 0; i < count; ++i) {
    const double* src = X.values.data() + static_cast<size_t>(order[begin + i]) * d;
    for (int r = 0; r < repeats; ++r)
      std::copy_n(src, d, out.values.data() + (static_cast<size_t>(i) * repeats + r) * d);
  }
  return out;
}

struct EpochStats {
  double loss_sum = 0.0;
  double penalty_sum = 0.0;
  long batches = 0;
};

// Shared mini-batch driver: walks shuffled row blocks of a fixed multiple
// size and hands (start, count) slices to the step callback.
template <typename StepFn>
void run_epochs(int epochs, int n, int batch, int multiple, Rng& shuffle_rng, TrainResult& result,
                StepFn step) {
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  int rows_per_batch = std::max(multiple, batch / multiple * multiple);
  for (int epoch = 0; epoch < epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    EpochStats stats;
    int start = 0;
    while (start < n) {
      int count = std::min(rows_per_batch, n - start);
      count = count / multiple * multiple;
      if (count == 0) break;  // leftover rows below one member group; resampled next epoch
      step(order, start, count, epoch, stats);
      start += count;
    }
    result.epoch_loss.push_back(stats.batches > 0 ? stats.loss_sum / stats.batches : 0.0);
    result.epoch_penalty.push_back(stats.batches > 0 ? stats.penalty_sum / stats.batches : 0.0);
  }
}

// One tabular fit over either a plain member network or the whole
// weight-sharing ensemble.
struct TabularFit {
  Model& model;
  const Tensor& X;
  const std::vector<double>* y_reg = nullptr;
  const std::vector<int>* y_cls = nullptr;
  const TrainConfig& cfg;
  int member = 0;
  bool ensemble = false;

  void run(Rng shuffle_rng, Rng dropout_rng, TrainResult& result) {
    const int n = X.rows();
    const int K = model.cfg.K;
    const bool replicate = ensemble && cfg.replicate_training;
    const int multiple = (ensemble && !replicate) ? K : 1;
    const int repeats = replicate ? K : 1;
    std::vector<Tensor*> params = ensemble ? ensemble_params(model) : member_params(model, member);
    AdamState state = AdamState::init(params);

    run_epochs(cfg.epochs, n, cfg.batch_size, multiple, shuffle_rng, result,
               [&](const std::vector<int>& order, int start, int count, int epoch,
                   EpochStats& stats) {
                 // replication happens inside the forward at the first
                 // ensemble layer; targets are repeated here to match
                 Tensor xb = gather_rows(X, order, start, count, 1);
                 Pass pass;
                 Rng* drop = model.cfg.method == Method::mc_dropout ? &dropout_rng : nullptr;
                 Var h = model.hidden_forward(pass, pass.constant(std::move(xb)), member,
                                              replicate, drop);
                 Var data_loss;
                 if (y_reg) {
                   Tensor yb = Tensor::zeros(count * repeats, 1);
                   for (int i = 0; i < count; ++i)
                     for (int r = 0; r < repeats; ++r)
                       yb.values[static_cast<size_t>(i) * repeats + r] = (*y_reg)[order[start + i]];
                   auto heads = model.gaussian_head(pass, h, member);
                   data_loss = gaussian_nll(pass, heads.mu, heads.logvar,
                                            pass.constant(std::move(yb)));
                 } else {
                   std::vector<int> yb(static_cast<size_t>(count) * repeats);
                   for (int i = 0; i < count; ++i)
                     for (int r = 0; r < repeats; ++r)
                       yb[static_cast<size_t>(i) * repeats + r] = (*y_cls)[order[start + i]];
                   Var probs = model.class_probs(pass, h, member);
                   data_loss = categorical_nll(pass, probs, yb);
                 }
                 std::vector<Var> penalties =
                     ensemble ? model.regularization(pass) : std::vector<Var>{};
                 Var total;
                 try {
                   total = ensemble_loss(pass, {data_loss}, penalties);
                 } catch (const NumericError& e) {
                   throw NumericError(std::string(e.what()) + " (epoch " + std::to_string(epoch) +
                                      ", batch at row " + std::to_string(start) + ")");
                 }
                 pass.tape.backward(total);
                 adam_step(params, state, cfg);
                 zero_grads(params);
                 stats.loss_sum += pass.tape.value(data_loss).item();
                 double pen = 0.0;
                 for (const Var& p : penalties) pen += pass.tape.value(p).item();
                 stats.penalty_sum += pen;
                 stats.batches += 1;
               });
  }
};

TrainResult train_tabular(Model& model, const Tensor& X, const std::vector<double>* y_reg,
                          const std::vector<int>* y_cls, const TrainConfig& cfg, Rng& rng) {
  cfg.validate();
  if (!model.built()) throw ContractError("train: model not built");
  const size_t n_targets = y_reg ? y_reg->size() : y_cls->size();
  if (static_cast<size_t>(X.rows()) != n_targets)
    throw DataError("train: " + std::to_string(X.rows()) + " rows vs " +
                    std::to_string(n_targets) + " targets");
  const auto t0 = std::chrono::steady_clock::now();

  TrainResult result;
  if (model.cfg.method == Method::deep_ensemble) {
    std::vector<TrainResult> members;
    for (int k = 0; k < model.cfg.K; ++k) {
      TrainResult r;
      TabularFit fit{model, X, y_reg, y_cls, cfg, k, false};
      Rng stream = rng.stream("train/m" + std::to_string(k));
      fit.run(stream.stream("shuffle"), stream.stream("dropout"), r);
      members.push_back(std::move(r));
    }
    // trace = mean across members, epoch-aligned
    result.epoch_loss.assign(cfg.epochs, 0.0);
    result.epoch_penalty.assign(cfg.epochs, 0.0);
    for (const auto& r : members)
      for (int e = 0; e < cfg.epochs; ++e) result.epoch_loss[e] += r.epoch_loss[e];
    for (int e = 0; e < cfg.epochs; ++e) result.epoch_loss[e] /= model.cfg.K;
  } else {
    TabularFit fit{model, X, y_reg, y_cls, cfg, 0, model.cfg.method == Method::batch_ensemble};
    Rng stream = rng.stream("train/m0");
    fit.run(stream.stream("shuffle"), stream.stream("dropout"), result);
  }
  result.train_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

}  // namespace

TrainResult train_regression(Model& model, const Tensor& X, const std::vector<double>& y,
                             const TrainConfig& cfg, Rng& rng) {
  if (model.cfg.task != Task::regression)
    throw ConfigError("train_regression on a " + to_string(model.cfg.task) + " model");
  return train_tabular(model, X, &y, nullptr, cfg, rng);
}

TrainResult train_classification(Model& model, const Tensor& X, const std::vector<int>& y,
                                 const TrainConfig& cfg, Rng& rng) {
  if (model.cfg.task != Task::classification)
    throw ConfigError("train_classification on a " + to_string(model.cfg.task) + " model");
  return train_tabular(model, X, nullptr, &y, cfg, rng);
}

namespace {

// Unrolls the context, then rolls `horizon` steps feeding the mean back as
// the next input; returns the per-step NLL terms.
struct SeriesFit {
  Model& model;
  const SeriesWindows& windows;
  const TrainConfig& cfg;
  int member = 0;

  void run(Rng shuffle_rng, Rng dropout_rng, TrainResult& result) {
    const int n = windows.contexts.rows();
    const int L = windows.contexts.cols();
    const int H = windows.targets.cols();
    const int K = model.ens ? model.cfg.K : 1;  // recurrent ensembles always replicate
    std::vector<Tensor*> params = model.ens ? ensemble_params(model) : member_params(model, member);
    AdamState state = AdamState::init(params);

    run_epochs(cfg.epochs, n, cfg.batch_size, 1, shuffle_rng, result,
               [&](const std::vector<int>& order, int start, int count, int epoch,
                   EpochStats& stats) {
                 const int rows = count * K;
                 Pass pass;
                 Var h = pass.constant(Tensor::zeros(rows, model.rnn_state_dim()));
                 for (int t = 0; t < L; ++t) {
                   Tensor xt = Tensor::zeros(rows, 1);
                   for (int i = 0; i < count; ++i)
                     for (int r = 0; r < K; ++r)
                       xt.values[static_cast<size_t>(i) * K + r] =
                           windows.contexts.at(order[start + i], t);
                   h = model.rnn_step(pass, pass.constant(std::move(xt)), h, member);
                 }
                 Rng* drop = model.cfg.method == Method::mc_dropout ? &dropout_rng : nullptr;
                 std::vector<Var> step_losses;
                 Var next_input;
                 for (int step = 0; step < H; ++step) {
                   if (step > 0) {
                     h = model.rnn_step(pass, next_input, h, member);
                     result.predicted_feeds += 1;
                   }
                   Var top = model.hidden_forward(pass, h, member, false, drop);
                   auto heads = model.gaussian_head(pass, top, member);
                   Tensor yt = Tensor::zeros(rows, 1);
                   for (int i = 0; i < count; ++i)
                     for (int r = 0; r < K; ++r)
                       yt.values[static_cast<size_t>(i) * K + r] =
                           windows.targets.at(order[start + i], step);
                   step_losses.push_back(
                       gaussian_nll(pass, heads.mu, heads.logvar, pass.constant(std::move(yt))));
                   next_input = heads.mu;  // the model's own prediction, never the target
                 }
                 std::vector<Var> penalties = model.ens ? model.regularization(pass)
                                                        : std::vector<Var>{};
                 Var total;
                 try {
                   total = ensemble_loss(pass, step_losses, penalties);
                 } catch (const NumericError& e) {
                   throw NumericError(std::string(e.what()) + " (epoch " + std::to_string(epoch) +
                                      ", window batch at " + std::to_string(start) + ")");
                 }
                 pass.tape.backward(total);
                 adam_step(params, state, cfg);
                 zero_grads(params);
                 double mean_loss = 0.0;
                 for (const Var& l : step_losses) mean_loss += pass.tape.value(l).item();
                 stats.loss_sum += mean_loss / H;
                 double pen = 0.0;
                 for (const Var& p : penalties) pen += pass.tape.value(p).item();
                 stats.penalty_sum += pen;
                 stats.batches += 1;
               });
  }
};

}  // namespace

TrainResult train_series(Model& model, const SeriesWindows& windows, const TrainConfig& cfg,
                         Rng& rng) {
  cfg.validate();
  if (model.cfg.task != Task::timeseries)
    throw ConfigError("train_series on a " + to_string(model.cfg.task) + " model");
  if (!model.built()) throw ContractError("train: model not built");
  if (windows.contexts.rows() != windows.targets.rows())
    throw DataError("train_series: context/target window counts differ");
  if (windows.contexts.cols() != cfg.context_len || windows.targets.cols() != cfg.horizon)
    throw ConfigError("train_series: windows are " + std::to_string(windows.contexts.cols()) +
                      "/" + std::to_string(windows.targets.cols()) + ", config wants L=" +
                      std::to_string(cfg.context_len) + " H=" + std::to_string(cfg.horizon));
  const auto t0 = std::chrono::steady_clock::now();

  TrainResult result;
  if (model.cfg.method == Method::deep_ensemble) {
    result.epoch_loss.assign(cfg.epochs, 0.0);
    result.epoch_penalty.assign(cfg.epochs, 0.0);
    for (int k = 0; k < model.cfg.K; ++k) {
      TrainResult r;
      SeriesFit fit{model, windows, cfg, k};
      Rng stream = rng.stream("train/m" + std::to_string(k));
      fit.run(stream.stream("shuffle"), stream.stream("dropout"), r);
      for (int e = 0; e < cfg.epochs; ++e) result.epoch_loss[e] += r.epoch_loss[e] / model.cfg.K;
      result.predicted_feeds += r.predicted_feeds;
      result.teacher_forced_feeds += r.teacher_forced_feeds;
    }
  } else {
    SeriesFit fit{model, windows, cfg, 0};
    Rng stream = rng.stream("train/m0");
    fit.run(stream.stream("shuffle"), stream.stream("dropout"), result);
  }
  result.train_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

}  // namespace batchens
