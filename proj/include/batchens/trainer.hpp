#pragma once

#include <vector>

#include "batchens/models.hpp"

namespace batchens {

struct TrainConfig {
  int epochs = 500;
  double learning_rate = 0.005;
  int batch_size = 64;
  double weight_decay = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int context_len = 12;  // L
  int horizon = 5;       // H

  // Weight-sharing ensembles can train two ways. replicate: every sample
  // is repeated K times per step so each member sees each sample (K-fold
  // step cost). rotate: each batch row is assigned to one member
  // round-robin, keeping a step as cheap as a single model; members cover
  // the data across shuffled epochs. Inference always replicates.
  // Recurrent models always replicate so every member rolls its own state.
  bool replicate_training = false;

  void validate() const;
};

// First/second gradient moments per parameter, in parameter-list order.
struct AdamState {
  std::vector<std::vector<double>> m, v;
  long step = 0;

  static AdamState init(const std::vector<Tensor*>& params);
};

// Bias-corrected Adam update from the gradients accumulated in each
// parameter's grad buffer. Gradients are left untouched; callers zero them.
void adam_step(const std::vector<Tensor*>& params, AdamState& state, const TrainConfig& cfg);

struct TrainResult {
  std::vector<double> epoch_loss;     // mean member data loss per epoch
  std::vector<double> epoch_penalty;  // regularization per epoch
  // Rollout bookkeeping for autoregressive training: inputs taken from
  // model predictions vs. ground-truth targets (the latter must stay 0).
  long predicted_feeds = 0;
  long teacher_forced_feeds = 0;
  double train_seconds = 0.0;
};

// Context/target windows for sequence training: contexts is n-by-L,
// targets n-by-H, both in the scaled data space.
struct SeriesWindows {
  Tensor contexts;
  Tensor targets;
};

TrainResult train_regression(Model& model, const Tensor& X, const std::vector<double>& y,
                             const TrainConfig& cfg, Rng& rng);
TrainResult train_classification(Model& model, const Tensor& X, const std::vector<int>& y,
                                 const TrainConfig& cfg, Rng& rng);

// Multi-step training for sequence models: the context is consumed
// step-by-step, then the model rolls `horizon` steps feeding its own mean
// prediction back as the next input (no teacher forcing); the loss is the
// NLL averaged over all horizon steps.
TrainResult train_series(Model& model, const SeriesWindows& windows, const TrainConfig& cfg,
                         Rng& rng);

}  // namespace batchens
