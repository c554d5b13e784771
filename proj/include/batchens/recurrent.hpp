#pragma once

#include <optional>
#include <vector>

#include "batchens/errors.hpp"
#include "batchens/layers.hpp"

namespace batchens {

// Gated recurrent cell, candidate fed with [x_t, f_t (.) h_{t-1}]:
//   f_t = sigmoid([x_t, h_{t-1}] W_f + bin_f + bhid_f)      (reset)
//   z_t = sigmoid([x_t, h_{t-1}] W_z + bin_z + bhid_z)      (update)
//   c_t = tanh  ([x_t, f_t (.) h_{t-1}] W_c + bin_c + bhid_c)
//   h_t = (1 - z_t) (.) h_{t-1} + z_t (.) c_t
// Each gate carries an input-side and a hidden-side bias vector; the two
// always add together here but are kept as distinct parameters.
struct GruCell {
  int in = 0, hidden = 0;
  struct Gate {
    Tensor W;       // (p+q) x q
    Tensor b_in;    // 1 x q
    Tensor b_hid;   // 1 x q
  };
  Gate reset, update, candidate;

  static GruCell make(int in, int hidden, Rng& rng);
  long param_count() const;
};

Var gru_step(Pass& pass, GruCell& cell, Var x_t, Var h_prev);

// Which gates of an ensemble recurrent cell use per-member adapters.
// C = candidate, Z = update, F = reset. A gate without adapters falls back
// to a plain shared transform with one shared bias.
struct GateMask {
  bool candidate = true;
  bool update = true;
  bool reset = true;

  int count() const { return (candidate ? 1 : 0) + (update ? 1 : 0) + (reset ? 1 : 0); }
  std::string label() const;
  static GateMask from_label(const std::string& s);
};

// Ensemble GRU cell: every gate transform is a weight-sharing ensemble
// layer over the concatenated [x_t, h_prev] input, so all K members advance
// in one pass over member-interleaved rows.
struct GrubeCell {
  int in = 0, hidden = 0, K = 1;
  GateMask gates;
  struct BeGate {
    EnsembleLinear ens;      // used when the gate is in the mask
    DenseLinear plain;       // single shared transform otherwise
    bool ensemble = true;
  };
  BeGate reset, update, candidate;

  static GrubeCell make(int in, int hidden, int ensemble_size, Rng& rng, GateMask gates = {},
                        AdapterMask adapters = {}, InitScheme scheme = InitScheme::random_sign);
  long param_count() const;
};

Var grube_step(Pass& pass, GrubeCell& cell, Var x_t, Var h_prev);

// Applies a step function over a whole sequence; returns the hidden state
// after every step. steps[t] is the input matrix at time t. Differentiable
// through time: gradients flow across all steps.
template <typename Cell, typename StepFn>
std::vector<Var> unroll(Pass& pass, Cell& cell, const std::vector<Var>& steps, Var h0,
                        StepFn step) {
  if (steps.empty()) throw ContractError("unroll: empty sequence");
  std::vector<Var> hs;
  hs.reserve(steps.size());
  Var h = h0;
  for (const Var& x : steps) {
    h = step(pass, cell, x, h);
    hs.push_back(h);
  }
  return hs;
}

std::vector<Var> unroll_gru(Pass& pass, GruCell& cell, const std::vector<Var>& steps, Var h0);
std::vector<Var> unroll_grube(Pass& pass, GrubeCell& cell, const std::vector<Var>& steps, Var h0);

}  // namespace batchens
