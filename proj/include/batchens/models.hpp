#pragma once

#include <json.hpp>

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "batchens/recurrent.hpp"

namespace batchens {

enum class Task { regression, classification, timeseries };
enum class Method { batch_ensemble, mc_dropout, deep_ensemble, single };

std::string to_string(Task t);
std::string to_string(Method m);
Task task_from_string(const std::string& s);
Method method_from_string(const std::string& s);

struct ModelConfig {
  Task task = Task::regression;
  Method method = Method::batch_ensemble;
  int input_dim = 1;
  std::vector<int> hidden_dims{32, 32};
  int num_classes = 2;
  int K = 10;
  double dropout_rate = 0.1;
  int be_layer_count = -1;  // ensemble applied to the last N hidden layers; -1 = all
  int rnn_hidden = 32;
  GateMask gate_mask;
  AdapterMask adapter_mask;
  InitScheme init_scheme = InitScheme::random_sign;
  double ortho_lambda = 0.0;

  // Bounds applied to the log-variance head before exponentiation.
  static constexpr double kLogVarMin = -10.0;
  static constexpr double kLogVarMax = 10.0;

  void validate() const;
  int ensemble_size() const { return method == Method::single ? 1 : K; }
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

// One fully-owned network: the single model, the MC-dropout model, and
// each deep-ensemble member. Regression and time-series variants carry two
// separate output layers (mean and log-variance); classification carries
// one fused logit layer.
struct PlainNetwork {
  std::vector<DenseLinear> hidden;
  std::optional<GruCell> gru;
  DenseLinear mu_head, logvar_head, cls_head;
};

// Weight-sharing ensemble network. For the layer ablation the first
// `plain_prefix` hidden layers are ordinary shared layers; ensemble layers
// and the ensemble heads follow.
struct EnsembleNetwork {
  std::vector<DenseLinear> plain_prefix;
  std::vector<EnsembleLinear> be_hidden;
  std::optional<GrubeCell> grube;
  EnsembleLinear mu_head, logvar_head, cls_head;
};

// Per-member predictive parameters plus their aggregation. Regression
// members are Gaussians (mu_k, var_k); classification members are
// probability rows. Member k of sample i sits at index i*K + k.
struct PredictiveDistribution {
  Task task = Task::regression;
  int n = 0, K = 1, C = 0;
  std::vector<double> member_mu, member_var;  // n*K
  std::vector<double> mu_star, var_star;      // n
  std::vector<double> member_probs;           // n*K*C
  std::vector<double> avg_probs;              // n*C

  double mu_at(int i, int k) const { return member_mu[static_cast<size_t>(i) * K + k]; }
  double var_at(int i, int k) const { return member_var[static_cast<size_t>(i) * K + k]; }
  double prob_at(int i, int k, int c) const {
    return member_probs[(static_cast<size_t>(i) * K + k) * C + c];
  }
  double avg_prob_at(int i, int c) const { return avg_probs[static_cast<size_t>(i) * C + c]; }
};

class Model {
 public:
  ModelConfig cfg;
  std::vector<PlainNetwork> plain;     // one per independent member
  std::optional<EnsembleNetwork> ens;  // the weight-sharing variant

  bool built() const { return !plain.empty() || ens.has_value(); }
  int member_count() const { return cfg.ensemble_size(); }

  // Every trainable tensor with a stable, checkpoint-friendly name.
  std::vector<std::pair<std::string, Tensor*>> parameters();

  long param_count() const;

  // Hidden representation of a tabular batch. With replicate_members the
  // input rows are repeated K times at the first ensemble layer so every
  // member sees every sample; otherwise rows map to members round-robin.
  Var hidden_forward(Pass& pass, Var x, int member, bool replicate_members, Rng* dropout_rng);

  // Heads over a hidden representation; logvar is clamped.
  struct GaussianHead {
    Var mu, logvar;
  };
  GaussianHead gaussian_head(Pass& pass, Var h, int member);
  Var class_probs(Pass& pass, Var h, int member);

  // One recurrent transition (time-series models only).
  Var rnn_step(Pass& pass, Var x_t, Var h_prev, int member);
  int rnn_state_dim() const { return cfg.rnn_hidden; }

  // Adapter-orthogonality penalties for every ensemble stack, when
  // cfg.ortho_lambda > 0.
  std::vector<Var> regularization(Pass& pass);
};

Model build_model(const ModelConfig& cfg, Rng& rng);

// Per-member predictions for a tabular batch (n x input_dim), aggregated
// with the mixture rules. mc_dropout draws `K` stochastic passes from rng.
PredictiveDistribution predict(Model& model, const Tensor& X, Rng& rng);

// Bit-exact JSON checkpoint: config, seed, and every parameter tensor.
void save_model(Model& model, uint64_t seed, const std::string& path);
Model load_model(const std::string& path, uint64_t* seed_out = nullptr);

}  // namespace batchens
