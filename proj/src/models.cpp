#include "batchens/models.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>

#include "batchens/errors.hpp"
#include "batchens/losses.hpp"

namespace batchens {

using nlohmann::json;

std::string to_string(Task t) {
  switch (t) {
    case Task::regression: return "regression";
    case Task::classification: return "classification";
    case Task::timeseries: return "timeseries";
  }
  return "?";
}

std::string to_string(Method m) {
  switch (m) {
    case Method::batch_ensemble: return "batch_ensemble";
    case Method::mc_dropout: return "mc_dropout";
    case Method::deep_ensemble: return "deep_ensemble";
    case Method::single: return "single";
  }
  return "?";
}

Task task_from_string(const std::string& s) {
  if (s == "regression") return Task::regression;
  if (s == "classification") return Task::classification;
  if (s == "timeseries") return Task::timeseries;
  throw ConfigError("unknown task '" + s + "'");
}

Method method_from_string(const std::string& s) {
  if (s == "batch_ensemble") return Method::batch_ensemble;
  if (s == "mc_dropout") return Method::mc_dropout;
  if (s == "deep_ensemble") return Method::deep_ensemble;
  if (s == "single") return Method::single;
  throw ConfigError("unknown method '" + s + "'");
}

void ModelConfig::validate() const {
  if (hidden_dims.empty()) throw ConfigError("hidden_dims must be non-empty");
  if (K < 1) throw ConfigError("ensemble size K must be >= 1");
  if (input_dim < 1) throw ConfigError("input_dim must be >= 1");
  if (task == Task::classification && num_classes < 2)
    throw ConfigError("classification needs num_classes >= 2");
  if (be_layer_count != -1) {
    if (task == Task::timeseries)
      throw ConfigError("be_layer_count applies to feed-forward tasks only");
    if (be_layer_count < 0 || be_layer_count > static_cast<int>(hidden_dims.size()))
      throw ConfigError("be_layer_count " + std::to_string(be_layer_count) + " outside [0," +
                        std::to_string(hidden_dims.size()) + "]");
  }
  if (task != Task::timeseries && gate_mask.count() != 3)
    throw ConfigError("gate_mask is only meaningful for timeseries models");
  if (dropout_rate < 0.0 || dropout_rate >= 1.0)
    throw ConfigError("dropout_rate must be in [0,1)");
  if (ortho_lambda < 0.0) throw ConfigError("ortho_lambda must be >= 0");
  if (task == Task::timeseries && input_dim != 1)
    throw ConfigError("timeseries models are univariate (input_dim 1)");
}

namespace {

PlainNetwork make_plain(const ModelConfig& cfg, Rng& rng) {
  PlainNetwork net;
  int in = cfg.input_dim;
  if (cfg.task == Task::timeseries) {
    net.gru = GruCell::make(cfg.input_dim, cfg.rnn_hidden, rng);
    in = cfg.rnn_hidden;
  }
  for (int width : cfg.hidden_dims) {
    net.hidden.push_back(DenseLinear::make(in, width, rng));
    in = width;
  }
  if (cfg.task == Task::classification) {
    net.cls_head = DenseLinear::make(in, cfg.num_classes, rng);
  } else {
    net.mu_head = DenseLinear::make(in, 1, rng);
    net.logvar_head = DenseLinear::make(in, 1, rng);
  }
  return net;
}

EnsembleNetwork make_ensemble(const ModelConfig& cfg, Rng& rng) {
  EnsembleNetwork net;
  int in = cfg.input_dim;
  if (cfg.task == Task::timeseries) {
    net.grube = GrubeCell::make(cfg.input_dim, cfg.rnn_hidden, cfg.K, rng, cfg.gate_mask,
                                cfg.adapter_mask, cfg.init_scheme);
    in = cfg.rnn_hidden;
  }
  const int n_hidden = static_cast<int>(cfg.hidden_dims.size());
  const int n_be = cfg.be_layer_count == -1 ? n_hidden : cfg.be_layer_count;
  for (int i = 0; i < n_hidden; ++i) {
    const int width = cfg.hidden_dims[i];
    if (i < n_hidden - n_be)
      net.plain_prefix.push_back(DenseLinear::make(in, width, rng));
    else
      net.be_hidden.push_back(
          EnsembleLinear::make(in, width, cfg.K, rng, cfg.adapter_mask, cfg.init_scheme));
    in = width;
  }
  if (cfg.task == Task::classification) {
    net.cls_head =
        EnsembleLinear::make(in, cfg.num_classes, cfg.K, rng, cfg.adapter_mask, cfg.init_scheme);
  } else {
    net.mu_head = EnsembleLinear::make(in, 1, cfg.K, rng, cfg.adapter_mask, cfg.init_scheme);
    net.logvar_head = EnsembleLinear::make(in, 1, cfg.K, rng, cfg.adapter_mask, cfg.init_scheme);
  }
  return net;
}

}  // namespace

Model build_model(const ModelConfig& cfg, Rng& rng) {
  cfg.validate();
  Model m;
  m.cfg = cfg;
  switch (cfg.method) {
    case Method::batch_ensemble: {
      // same stream as the plain single network so a neutral ensemble
      // shares its shared-weight draws with the single-model baseline
      Rng stream = rng.stream("member0");
      m.ens = make_ensemble(cfg, stream);
      break;
    }
    case Method::single:
    case Method::mc_dropout: {
      Rng stream = rng.stream("member0");
      m.plain.push_back(make_plain(cfg, stream));
      break;
    }
    case Method::deep_ensemble:
      for (int k = 0; k < cfg.K; ++k) {
        Rng stream = rng.stream("member" + std::to_string(k));
        m.plain.push_back(make_plain(cfg, stream));
      }
      break;
  }
  return m;
}

namespace {

void collect_dense(const std::string& prefix, DenseLinear& l,
                   std::vector<std::pair<std::string, Tensor*>>& out) {
  if (l.W.size() == 0) return;
  out.emplace_back(prefix + "/W", &l.W);
  out.emplace_back(prefix + "/b", &l.b);
}

void collect_be(const std::string& prefix, EnsembleLinear& l,
                std::vector<std::pair<std::string, Tensor*>>& out) {
  if (l.W.size() == 0) return;
  out.emplace_back(prefix + "/W", &l.W);
  if (l.adapters.input_scale) out.emplace_back(prefix + "/R", &l.R);
  if (l.adapters.output_scale) out.emplace_back(prefix + "/S", &l.S);
  if (l.adapters.bias) out.emplace_back(prefix + "/B", &l.B);
}

void collect_gru(const std::string& prefix, GruCell& c,
                 std::vector<std::pair<std::string, Tensor*>>& out) {
  auto gate = [&](const std::string& name, GruCell::Gate& g) {
    out.emplace_back(prefix + "/" + name + "/W", &g.W);
    out.emplace_back(prefix + "/" + name + "/b_in", &g.b_in);
    out.emplace_back(prefix + "/" + name + "/b_hid", &g.b_hid);
  };
  gate("reset", c.reset);
  gate("update", c.update);
  gate("cand", c.candidate);
}

void collect_grube(const std::string& prefix, GrubeCell& c,
                   std::vector<std::pair<std::string, Tensor*>>& out) {
  auto gate = [&](const std::string& name, GrubeCell::BeGate& g) {
    if (g.ensemble)
      collect_be(prefix + "/" + name, g.ens, out);
    else
      collect_dense(prefix + "/" + name, g.plain, out);
  };
  gate("reset", c.reset);
  gate("update", c.update);
  gate("cand", c.candidate);
}

}  // namespace

std::vector<std::pair<std::string, Tensor*>> Model::parameters() {
  std::vector<std::pair<std::string, Tensor*>> out;
  for (size_t k = 0; k < plain.size(); ++k) {
    const std::string base = "m" + std::to_string(k);
    PlainNetwork& net = plain[k];
    if (net.gru) collect_gru(base + "/gru", *net.gru, out);
    for (size_t i = 0; i < net.hidden.size(); ++i)
      collect_dense(base + "/h" + std::to_string(i), net.hidden[i], out);
    collect_dense(base + "/mu", net.mu_head, out);
    collect_dense(base + "/logvar", net.logvar_head, out);
    collect_dense(base + "/cls", net.cls_head, out);
  }
  if (ens) {
    if (ens->grube) collect_grube("ens/grube", *ens->grube, out);
    for (size_t i = 0; i < ens->plain_prefix.size(); ++i)
      collect_dense("ens/p" + std::to_string(i), ens->plain_prefix[i], out);
    for (size_t i = 0; i < ens->be_hidden.size(); ++i)
      collect_be("ens/h" + std::to_string(i), ens->be_hidden[i], out);
    collect_be("ens/mu", ens->mu_head, out);
    collect_be("ens/logvar", ens->logvar_head, out);
    collect_be("ens/cls", ens->cls_head, out);
  }
  return out;
}

long Model::param_count() const {
  long total = 0;
  for (auto& [name, t] : const_cast<Model*>(this)->parameters()) {
    (void)name;
    total += static_cast<long>(t->size());
  }
  return total;
}

Var Model::hidden_forward(Pass& pass, Var x, int member, bool replicate_members,
                          Rng* dropout_rng) {
  if (!built()) throw ContractError("hidden_forward: model not built");
  const bool use_dropout = cfg.method == Method::mc_dropout && dropout_rng != nullptr;
  const DropoutSpec spec{cfg.dropout_rate, true};
  Var h = x;
  if (ens) {
    for (auto& layer : ens->plain_prefix) h = relu(dense_forward(pass, layer, h));
    if (replicate_members && cfg.K > 1) h = repeat_rows(h, cfg.K);
    for (auto& layer : ens->be_hidden) h = relu(be_forward(pass, layer, h));
    return h;
  }
  PlainNetwork& net = plain.at(member);
  for (auto& layer : net.hidden) {
    h = relu(dense_forward(pass, layer, h));
    if (use_dropout) h = dropout(pass, h, spec, *dropout_rng);
  }
  return h;
}

Model::GaussianHead Model::gaussian_head(Pass& pass, Var h, int member) {
  if (cfg.task == Task::classification)
    throw ContractError("gaussian_head on a classification model");
  Var mu, logvar;
  if (ens) {
    mu = be_forward(pass, ens->mu_head, h);
    logvar = be_forward(pass, ens->logvar_head, h);
  } else {
    PlainNetwork& net = plain.at(member);
    mu = dense_forward(pass, net.mu_head, h);
    logvar = dense_forward(pass, net.logvar_head, h);
  }
  logvar = clamp(logvar, ModelConfig::kLogVarMin, ModelConfig::kLogVarMax);
  return {mu, logvar};
}

Var Model::class_probs(Pass& pass, Var h, int member) {
  if (cfg.task != Task::classification)
    throw ContractError("class_probs on a non-classification model");
  Var logits = ens ? be_forward(pass, ens->cls_head, h)
                   : dense_forward(pass, plain.at(member).cls_head, h);
  return softmax_rows(logits);
}

Var Model::rnn_step(Pass& pass, Var x_t, Var h_prev, int member) {
  if (cfg.task != Task::timeseries) throw ContractError("rnn_step on a non-recurrent model");
  if (ens) return grube_step(pass, *ens->grube, x_t, h_prev);
  return gru_step(pass, *plain.at(member).gru, x_t, h_prev);
}

std::vector<Var> Model::regularization(Pass& pass) {
  std::vector<Var> penalties;
  if (!ens || cfg.ortho_lambda <= 0.0) return penalties;
  auto add_layer = [&](EnsembleLinear& l) {
    if (l.W.size() == 0) return;
    if (l.adapters.input_scale)
      penalties.push_back(orthogonality_penalty(pass, l.R, cfg.ortho_lambda));
    if (l.adapters.output_scale)
      penalties.push_back(orthogonality_penalty(pass, l.S, cfg.ortho_lambda));
    if (l.adapters.bias) penalties.push_back(orthogonality_penalty(pass, l.B, cfg.ortho_lambda));
  };
  if (ens->grube) {
    for (auto* g : {&ens->grube->reset, &ens->grube->update, &ens->grube->candidate})
      if (g->ensemble) add_layer(g->ens);
  }
  for (auto& l : ens->be_hidden) add_layer(l);
  add_layer(ens->mu_head);
  add_layer(ens->logvar_head);
  add_layer(ens->cls_head);
  return penalties;
}

PredictiveDistribution predict(Model& model, const Tensor& X, Rng& rng) {
  if (!model.built()) throw ContractError("predict: model not built");
  if (model.cfg.task == Task::timeseries)
    throw ConfigError("predict serves tabular tasks; forecasting handles time series");
  if (X.cols() != model.cfg.input_dim)
    throw ShapeError("predict: input cols " + std::to_string(X.cols()) + " vs model input " +
                     std::to_string(model.cfg.input_dim));
  const int n = X.rows();
  const int K = model.member_count();
  const bool classify = model.cfg.task == Task::classification;
  const int C = classify ? model.cfg.num_classes : 0;

  PredictiveDistribution out;
  out.task = model.cfg.task;
  out.n = n;
  out.K = K;
  out.C = C;
  if (classify) {
    out.member_probs.assign(static_cast<size_t>(n) * K * C, 0.0);
    out.avg_probs.assign(static_cast<size_t>(n) * C, 0.0);
  } else {
    out.member_mu.assign(static_cast<size_t>(n) * K, 0.0);
    out.member_var.assign(static_cast<size_t>(n) * K, 0.0);
    out.mu_star.assign(n, 0.0);
    out.var_star.assign(n, 0.0);
  }

  const int chunk = model.ens ? 512 : 2048;
  for (int start = 0; start < n; start += chunk) {
    const int rows = std::min(chunk, n - start);
    Tensor xc = Tensor::zeros(rows, X.cols());
    std::copy_n(X.values.data() + static_cast<size_t>(start) * X.cols(),
                static_cast<size_t>(rows) * X.cols(), xc.values.data());

    auto store_gaussian = [&](int i, int k, double mu, double logvar) {
      const size_t idx = static_cast<size_t>(start + i) * K + k;
      out.member_mu[idx] = mu;
      out.member_var[idx] = std::exp(logvar);
    };
    auto store_probs = [&](int i, int k, const double* row) {
      double* dst = out.member_probs.data() + (static_cast<size_t>(start + i) * K + k) * C;
      std::copy_n(row, C, dst);
    };

    if (model.ens) {
      Pass p(false);
      Var h = model.hidden_forward(p, p.constant(xc), 0, true, nullptr);
      if (classify) {
        const Tensor& probs = p.tape.value(model.class_probs(p, h, 0));
        for (int i = 0; i < rows; ++i)
          for (int k = 0; k < K; ++k)
            store_probs(i, k, probs.values.data() + (static_cast<size_t>(i) * K + k) * C);
      } else {
        auto heads = model.gaussian_head(p, h, 0);
        const Tensor& mu = p.tape.value(heads.mu);
        const Tensor& lv = p.tape.value(heads.logvar);
        for (int i = 0; i < rows; ++i)
          for (int k = 0; k < K; ++k)
            store_gaussian(i, k, mu.values[static_cast<size_t>(i) * K + k],
                           lv.values[static_cast<size_t>(i) * K + k]);
      }
    } else {
      for (int k = 0; k < K; ++k) {
        const int member = model.cfg.method == Method::deep_ensemble ? k : 0;
        Rng* drop = model.cfg.method == Method::mc_dropout ? &rng : nullptr;
        Pass p(false);
        Var h = model.hidden_forward(p, p.constant(xc), member, false, drop);
        if (classify) {
          const Tensor& probs = p.tape.value(model.class_probs(p, h, member));
          for (int i = 0; i < rows; ++i)
            store_probs(i, k, probs.values.data() + static_cast<size_t>(i) * C);
        } else {
          auto heads = model.gaussian_head(p, h, member);
          const Tensor& mu = p.tape.value(heads.mu);
          const Tensor& lv = p.tape.value(heads.logvar);
          for (int i = 0; i < rows; ++i) store_gaussian(i, k, mu.values[i], lv.values[i]);
        }
      }
    }
  }

  if (classify) {
    for (int i = 0; i < n; ++i) {
      std::vector<std::vector<double>> members;
      members.reserve(K);
      for (int k = 0; k < K; ++k) {
        const double* row = out.member_probs.data() + (static_cast<size_t>(i) * K + k) * C;
        members.emplace_back(row, row + C);
      }
      auto avg = aggregate_categorical(members);
      std::copy_n(avg.data(), C, out.avg_probs.data() + static_cast<size_t>(i) * C);
    }
  } else {
    for (int i = 0; i < n; ++i) {
      std::vector<double> mus(K), vars(K);
      for (int k = 0; k < K; ++k) {
        mus[k] = out.mu_at(i, k);
        vars[k] = out.var_at(i, k);
      }
      auto agg = aggregate_gaussian(mus, vars);
      out.mu_star[i] = agg.mean;
      out.var_star[i] = agg.variance;
    }
  }
  return out;
}

// --- config / checkpoint serialization --------------------------------------

void to_json(json& j, const ModelConfig& c) {
  j = json{{"task", to_string(c.task)},
           {"method", to_string(c.method)},
           {"input_dim", c.input_dim},
           {"hidden_dims", c.hidden_dims},
           {"num_classes", c.num_classes},
           {"K", c.K},
           {"dropout_rate", c.dropout_rate},
           {"be_layer_count", c.be_layer_count},
           {"rnn_hidden", c.rnn_hidden},
           {"gate_mask", c.gate_mask.label()},
           {"adapter_mask", c.adapter_mask.label()},
           {"init_scheme", c.init_scheme == InitScheme::orthogonal ? "orthogonal" : "random_sign"},
           {"ortho_lambda", c.ortho_lambda}};
}

void from_json(const json& j, ModelConfig& c) {
  c.task = task_from_string(j.at("task").get<std::string>());
  c.method = method_from_string(j.at("method").get<std::string>());
  c.input_dim = j.value("input_dim", 1);
  c.hidden_dims = j.value("hidden_dims", std::vector<int>{32, 32});
  c.num_classes = j.value("num_classes", 2);
  c.K = j.value("K", 10);
  c.dropout_rate = j.value("dropout_rate", 0.1);
  c.be_layer_count = j.value("be_layer_count", -1);
  c.rnn_hidden = j.value("rnn_hidden", 32);
  std::string gates = j.value("gate_mask", "CZF");
  c.gate_mask = GateMask::from_label(gates);
  std::string adapters = j.value("adapter_mask", "RSB");
  c.adapter_mask = AdapterMask{};
  c.adapter_mask.input_scale = adapters.find('R') != std::string::npos;
  c.adapter_mask.output_scale = adapters.find('S') != std::string::npos;
  c.adapter_mask.bias = adapters.find('B') != std::string::npos;
  std::string scheme = j.value("init_scheme", "random_sign");
  if (scheme != "random_sign" && scheme != "orthogonal")
    throw ConfigError("unknown init_scheme '" + scheme + "'");
  c.init_scheme = scheme == "orthogonal" ? InitScheme::orthogonal : InitScheme::random_sign;
  c.ortho_lambda = j.value("ortho_lambda", 0.0);
}

void save_model(Model& model, uint64_t seed, const std::string& path) {
  json j;
  j["config"] = model.cfg;
  j["seed"] = seed;
  json params = json::array();
  for (auto& [name, t] : model.parameters()) {
    params.push_back(json{{"name", name}, {"shape", t->shape}, {"values", t->values}});
  }
  j["params"] = std::move(params);
  std::ofstream out(path);
  if (!out) throw DataError("cannot write checkpoint " + path);
  out << j.dump();
}

Model load_model(const std::string& path, uint64_t* seed_out) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read checkpoint " + path);
  json j = json::parse(in, nullptr, true);
  ModelConfig cfg = j.at("config").get<ModelConfig>();
  if (seed_out) *seed_out = j.at("seed").get<uint64_t>();
  Rng scratch(0);
  Model m = build_model(cfg, scratch);
  auto params = m.parameters();
  const json& stored = j.at("params");
  if (stored.size() != params.size())
    throw DataError("checkpoint has " + std::to_string(stored.size()) + " tensors, model needs " +
                    std::to_string(params.size()));
  for (size_t i = 0; i < params.size(); ++i) {
    const json& p = stored[i];
    if (p.at("name").get<std::string>() != params[i].first)
      throw DataError("checkpoint tensor '" + p.at("name").get<std::string>() +
                      "' does not match model tensor '" + params[i].first + "'");
    std::vector<int> shape = p.at("shape").get<std::vector<int>>();
    if (shape != params[i].second->shape) throw DataError("checkpoint shape mismatch at " + params[i].first);
    params[i].second->values = p.at("values").get<std::vector<double>>();
  }
  return m;
}

}  // namespace batchens
