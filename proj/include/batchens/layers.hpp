#pragma once

#include "batchens/rng.hpp"
#include "batchens/tape.hpp"

namespace batchens {

// Plain affine layer: y = x W + b.
struct DenseLinear {
  Tensor W;  // p x q
  Tensor b;  // 1 x q

  static DenseLinear make(int in, int out, Rng& rng);
  int in_dim() const { return W.rows(); }
  int out_dim() const { return W.cols(); }
  long param_count() const { return static_cast<long>(W.size() + b.size()); }
};

Var dense_forward(Pass& pass, DenseLinear& layer, Var x);

// Which per-member adapters an ensemble layer carries. A disabled adapter
// behaves as its neutral element (input/output scale 1, bias 0).
struct AdapterMask {
  bool input_scale = true;   // R
  bool output_scale = true;  // S
  bool bias = true;          // B

  int count() const { return (input_scale ? 1 : 0) + (output_scale ? 1 : 0) + (bias ? 1 : 0); }
  std::string label() const;
};

enum class InitScheme { random_sign, orthogonal };

// Weight-sharing ensemble layer: one p-by-q matrix W shared by all K
// members, each member owning rank-1 adapters that scale the layer input
// (R, K x p) and output (S, K x q) plus a bias row (B, K x q).
//
// Inputs are member-interleaved: row r of the activation matrix belongs to
// member r % K. For inputs replicated with repeat_rows(x, K) every member
// sees every sample; a flat batch processed with K > 1 assigns each row to
// one member, which is the cheap training path.
struct EnsembleLinear {
  int K = 1;
  AdapterMask adapters;
  Tensor W;  // p x q (no shared bias)
  Tensor R;  // K x p, empty when adapters.input_scale is off
  Tensor S;  // K x q
  Tensor B;  // K x q

  static EnsembleLinear make(int in, int out, int ensemble_size, Rng& rng,
                             AdapterMask mask = {}, InitScheme scheme = InitScheme::random_sign);

  int in_dim() const { return W.rows(); }
  int out_dim() const { return W.cols(); }
  long param_count() const;
};

// Affine part of the vectorized ensemble pass: ((z (.) R) W) (.) S + B,
// adapter rows broadcast per member. The nonlinearity is the caller's.
Var be_forward(Pass& pass, EnsembleLinear& layer, Var z);

// (Re)draws the adapter stacks. random_sign: R, S entries +-1 each with
// probability 1/2, B = 0. orthogonal: rows of R (and S) form an orthonormal
// set (requires K <= min(p, q)), B = 0.
void init_adapters(EnsembleLinear& layer, InitScheme scheme, Rng& rng);

// lambda * ||A A^T - I||_F^2, the decorrelation penalty applied per enabled
// adapter stack when orthogonal regularization is on.
Var orthogonality_penalty(Pass& pass, Tensor& adapter_stack, double lambda);

struct DropoutSpec {
  double rate = 0.0;
  bool active = false;  // stochastic masking on (training or MC inference)
};

// Inverted dropout: kept activations are divided by (1 - rate) so the
// expected value is unchanged; the mask is resampled on every call.
Var dropout(Pass& pass, Var x, const DropoutSpec& spec, Rng& rng);

}  // namespace batchens
