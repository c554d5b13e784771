#include "batchens/forecast.hpp"

#include <cmath>

#include "batchens/errors.hpp"

namespace batchens {

void ForecastConfig::validate(int members) const {
  if (horizon < 1) throw ConfigError("forecast horizon must be >= 1");
  if (context_len < 1) throw ConfigError("forecast context_len must be >= 1");
  if (total_paths < members || total_paths % members != 0)
    throw ConfigError("total_paths " + std::to_string(total_paths) +
                      " must be a positive multiple of the member count " +
                      std::to_string(members));
  if (noise_scale < 0.0) throw ConfigError("noise_scale must be >= 0");
}

ForecastPaths sample_paths(RolloutHooks& hooks, int members, int paths_per_member, int horizon,
                           double noise_scale, Rng& rng) {
  const int K = members, S = paths_per_member, H = horizon;
  if (H < 1) throw ConfigError("sample_paths: horizon must be >= 1");
  const int rows = K * S;
  ForecastPaths out;
  out.K = K;
  out.S = S;
  out.H = H;
  out.values.assign(static_cast<size_t>(rows) * H, 0.0);

  std::vector<double> mu(rows), sigma(rows);
  Tensor fed = Tensor::zeros(rows, 1);
  for (int h = 0; h < H; ++h) {
    if (h > 0) hooks.advance(fed);
    hooks.emit(mu, sigma);
    for (int r = 0; r < rows; ++r) {
      const double eps = rng.normal();
      const double y = mu[r] + noise_scale * sigma[r] * eps;
      out.at(r % K, r / K, h) = y;
      fed.values[r] = y;
    }
  }
  return out;
}

namespace {

// Tiled copy: row r of the result is row (r % K) of src.
Tensor tile_members(const Tensor& src, int copies) {
  const int K = src.rows(), q = src.cols();
  Tensor out = Tensor::zeros(K * copies, q);
  for (int r = 0; r < K * copies; ++r)
    std::copy_n(src.values.data() + static_cast<size_t>(r % K) * q, q,
                out.values.data() + static_cast<size_t>(r) * q);
  return out;
}

}  // namespace

ForecastPaths ancestral_paths(Model& model, const std::vector<double>& context,
                              const ForecastConfig& cfg, Rng& rng) {
  if (!model.built()) throw ContractError("ancestral_paths: model not built");
  if (model.cfg.task != Task::timeseries)
    throw ConfigError("ancestral_paths needs a timeseries model");
  const int K = model.member_count();
  cfg.validate(K);
  if (static_cast<int>(context.size()) != cfg.context_len)
    throw DataError("ancestral_paths: context has " + std::to_string(context.size()) +
                    " values, config wants L=" + std::to_string(cfg.context_len));
  const int S = cfg.paths_per_member(K);
  const int rows = K * S;
  const int q = model.rnn_state_dim();
  Rng noise = rng.stream("noise");
  Rng drop_rng = rng.stream("dropout");
  const bool mcd = model.cfg.method == Method::mc_dropout;

  // Consume the observed context with one row per member, then tile the
  // final hidden state across that member's sample paths.
  Tensor state;
  if (model.ens) {
    Tensor h = Tensor::zeros(K, q);
    for (int t = 0; t < cfg.context_len; ++t) {
      Pass p(false);
      Var hv = model.rnn_step(p, p.constant(Tensor::full(K, 1, context[t])),
                              p.constant(std::move(h)), 0);
      h = p.tape.value(hv);
    }
    state = tile_members(h, S);
  } else {
    // Independent member networks: roll each one's context separately.
    Tensor h = Tensor::zeros(K, q);
    for (int k = 0; k < K; ++k) {
      const int member = model.cfg.method == Method::deep_ensemble ? k : 0;
      Tensor hk = Tensor::zeros(1, q);
      for (int t = 0; t < cfg.context_len; ++t) {
        Pass p(false);
        Var hv = model.rnn_step(p, p.constant(Tensor::full(1, 1, context[t])),
                                p.constant(std::move(hk)), member);
        hk = p.tape.value(hv);
      }
      std::copy_n(hk.values.data(), q, h.values.data() + static_cast<size_t>(k) * q);
    }
    state = tile_members(h, S);
  }

  RolloutHooks hooks;
  if (model.ens) {
    hooks.advance = [&](const Tensor& x) {
      Pass p(false);
      Var hv = model.rnn_step(p, p.constant(x), p.constant(std::move(state)), 0);
      state = p.tape.value(hv);
    };
    hooks.emit = [&](std::vector<double>& mu, std::vector<double>& sigma) {
      Pass p(false);
      Var top = model.hidden_forward(p, p.constant(state), 0, false, nullptr);
      auto heads = model.gaussian_head(p, top, 0);
      const Tensor& m = p.tape.value(heads.mu);
      const Tensor& lv = p.tape.value(heads.logvar);
      for (int r = 0; r < rows; ++r) {
        mu[r] = m.values[r];
        sigma[r] = std::exp(0.5 * lv.values[r]);
      }
    };
  } else {
    hooks.advance = [&, K, S](const Tensor& x) {
      // Row r belongs to member r % K; advance each member's rows through
      // its own network.
      Tensor next = Tensor::zeros(rows, q);
      for (int k = 0; k < K; ++k) {
        const int member = model.cfg.method == Method::deep_ensemble ? k : 0;
        Tensor xs = Tensor::zeros(S, 1);
        Tensor hs = Tensor::zeros(S, q);
        for (int s = 0; s < S; ++s) {
          xs.values[s] = x.values[static_cast<size_t>(s) * K + k];
          std::copy_n(state.values.data() + (static_cast<size_t>(s) * K + k) * q, q,
                      hs.values.data() + static_cast<size_t>(s) * q);
        }
        Pass p(false);
        Var hv = model.rnn_step(p, p.constant(std::move(xs)), p.constant(std::move(hs)), member);
        const Tensor& hn = p.tape.value(hv);
        for (int s = 0; s < S; ++s)
          std::copy_n(hn.values.data() + static_cast<size_t>(s) * q, q,
                      next.values.data() + (static_cast<size_t>(s) * K + k) * q);
      }
      state = std::move(next);
    };
    hooks.emit = [&, K, S](std::vector<double>& mu, std::vector<double>& sigma) {
      for (int k = 0; k < K; ++k) {
        const int member = model.cfg.method == Method::deep_ensemble ? k : 0;
        Tensor hs = Tensor::zeros(S, q);
        for (int s = 0; s < S; ++s)
          std::copy_n(state.values.data() + (static_cast<size_t>(s) * K + k) * q, q,
                      hs.values.data() + static_cast<size_t>(s) * q);
        Pass p(false);
        Rng* drop = mcd ? &drop_rng : nullptr;
        Var top = model.hidden_forward(p, p.constant(std::move(hs)), member, false, drop);
        auto heads = model.gaussian_head(p, top, member);
        const Tensor& m = p.tape.value(heads.mu);
        const Tensor& lv = p.tape.value(heads.logvar);
        for (int s = 0; s < S; ++s) {
          mu[static_cast<size_t>(s) * K + k] = m.values[s];
          sigma[static_cast<size_t>(s) * K + k] = std::exp(0.5 * lv.values[s]);
        }
      }
    };
  }

  return sample_paths(hooks, K, S, cfg.horizon, cfg.noise_scale, noise);
}

ForecastResult aggregate_forecast(const ForecastPaths& paths) {
  if (paths.values.empty()) throw ContractError("aggregate_forecast: no paths");
  const int K = paths.K, S = paths.S, H = paths.H;
  const double count = static_cast<double>(K) * S;
  ForecastResult out;
  out.mean.assign(H, 0.0);
  out.variance.assign(H, 0.0);
  for (int h = 0; h < H; ++h) {
    double sum = 0.0;
    for (int k = 0; k < K; ++k)
      for (int s = 0; s < S; ++s) sum += paths.at(k, s, h);
    const double mean = sum / count;
    double ss = 0.0;
    for (int k = 0; k < K; ++k)
      for (int s = 0; s < S; ++s) {
        const double d = paths.at(k, s, h) - mean;
        ss += d * d;
      }
    out.mean[h] = mean;
    out.variance[h] = ss / count;
  }
  return out;
}

MemberForecastMoments member_moments(const ForecastPaths& paths) {
  const int K = paths.K, S = paths.S, H = paths.H;
  MemberForecastMoments out;
  out.K = K;
  out.H = H;
  out.mean.assign(static_cast<size_t>(K) * H, 0.0);
  out.variance.assign(static_cast<size_t>(K) * H, 0.0);
  for (int k = 0; k < K; ++k)
    for (int h = 0; h < H; ++h) {
      double sum = 0.0;
      for (int s = 0; s < S; ++s) sum += paths.at(k, s, h);
      const double mean = sum / S;
      double ss = 0.0;
      for (int s = 0; s < S; ++s) {
        const double d = paths.at(k, s, h) - mean;
        ss += d * d;
      }
      out.mean[static_cast<size_t>(k) * H + h] = mean;
      out.variance[static_cast<size_t>(k) * H + h] = ss / S;
    }
  return out;
}

}  // namespace batchens
