#include "batchens/layers.hpp"

#include <cmath>

#include "batchens/errors.hpp"

namespace batchens {

namespace {

// Glorot-uniform draw for shared weights; fan-based limit keeps activations
// in range for the tanh/sigmoid/ReLU stacks used here.
Tensor glorot(int in, int out, Rng& rng) {
  Tensor w = Tensor::zeros(in, out);
  const double limit = std::sqrt(6.0 / (in + out));
  for (double& v : w.values) v = rng.uniform(-limit, limit);
  return w;
}

}  // namespace

DenseLinear DenseLinear::make(int in, int out, Rng& rng) {
  DenseLinear l;
  l.W = glorot(in, out, rng);
  l.W.set_requires_grad(true);
  l.b = Tensor::zeros(1, out);
  l.b.set_requires_grad(true);
  return l;
}

Var dense_forward(Pass& pass, DenseLinear& layer, Var x) {
  Var w = pass.leaf(layer.W);
  Var b = pass.leaf(layer.b);
  return add_rowvec(matmul(x, w), b);
}

std::string AdapterMask::label() const {
  std::string s;
  if (input_scale) s += 'R';
  if (output_scale) s += 'S';
  if (bias) s += 'B';
  return s.empty() ? "none" : s;
}

EnsembleLinear EnsembleLinear::make(int in, int out, int ensemble_size, Rng& rng, AdapterMask mask,
                                    InitScheme scheme) {
  if (ensemble_size < 1) throw ConfigError("EnsembleLinear: K must be >= 1");
  EnsembleLinear l;
  l.K = ensemble_size;
  l.adapters = mask;
  l.W = glorot(in, out, rng);
  l.W.set_requires_grad(true);
  if (mask.input_scale) l.R = Tensor::zeros(ensemble_size, in);
  if (mask.output_scale) l.S = Tensor::zeros(ensemble_size, out);
  if (mask.bias) l.B = Tensor::zeros(ensemble_size, out);
  init_adapters(l, scheme, rng);
  return l;
}

long EnsembleLinear::param_count() const {
  return static_cast<long>(W.size() + R.size() + S.size() + B.size());
}

Var be_forward(Pass& pass, EnsembleLinear& layer, Var z) {
  const Tensor& zv = pass.tape.value(z);
  if (zv.cols() != layer.in_dim())
    throw ShapeError("be_forward: input cols " + std::to_string(zv.cols()) + " vs layer in " +
                     std::to_string(layer.in_dim()));
  if (zv.rows() % layer.K != 0)
    throw ContractError("be_forward: " + std::to_string(zv.rows()) +
                        " rows not grouped by K=" + std::to_string(layer.K));
  Var h = z;
  if (layer.adapters.input_scale) h = member_scale(h, pass.leaf(layer.R), layer.K);
  h = matmul(h, pass.leaf(layer.W));
  if (layer.adapters.output_scale) h = member_scale(h, pass.leaf(layer.S), layer.K);
  if (layer.adapters.bias) h = member_bias(h, pass.leaf(layer.B), layer.K);
  return h;
}

namespace {

void fill_random_sign(Tensor& t, Rng& rng) {
  for (double& v : t.values) v = rng.uniform() < 0.5 ? -1.0 : 1.0;
}

// Orthonormal rows via Gram-Schmidt on a Gaussian draw. K <= dim is
// checked by the caller; a degenerate draw is retried.
void fill_orthonormal_rows(Tensor& t, Rng& rng) {
  const int k = t.rows(), d = t.cols();
  for (int attempt = 0; attempt < 16; ++attempt) {
    for (double& v : t.values) v = rng.normal();
    bool ok = true;
    for (int i = 0; i < k && ok; ++i) {
      double* ri = t.values.data() + static_cast<size_t>(i) * d;
      for (int j = 0; j < i; ++j) {
        const double* rj = t.values.data() + static_cast<size_t>(j) * d;
        double dot = 0.0;
        for (int c = 0; c < d; ++c) dot += ri[c] * rj[c];
        for (int c = 0; c < d; ++c) ri[c] -= dot * rj[c];
      }
      double norm = 0.0;
      for (int c = 0; c < d; ++c) norm += ri[c] * ri[c];
      norm = std::sqrt(norm);
      if (norm < 1e-8) {
        ok = false;
        break;
      }
      for (int c = 0; c < d; ++c) ri[c] /= norm;
    }
    if (ok) return;
  }
  throw NumericError("orthonormal init failed to converge");
}

}  // namespace

void init_adapters(EnsembleLinear& layer, InitScheme scheme, Rng& rng) {
  const bool had_grad = layer.W.requires_grad;
  if (scheme == InitScheme::orthogonal) {
    if (layer.adapters.input_scale && layer.K > layer.in_dim())
      throw ConfigError("orthogonal init infeasible: K=" + std::to_string(layer.K) + " > p=" +
                        std::to_string(layer.in_dim()));
    if (layer.adapters.output_scale && layer.K > layer.out_dim())
      throw ConfigError("orthogonal init infeasible: K=" + std::to_string(layer.K) + " > q=" +
                        std::to_string(layer.out_dim()));
    if (layer.adapters.input_scale) fill_orthonormal_rows(layer.R, rng);
    if (layer.adapters.output_scale) fill_orthonormal_rows(layer.S, rng);
  } else {
    if (layer.adapters.input_scale) fill_random_sign(layer.R, rng);
    if (layer.adapters.output_scale) fill_random_sign(layer.S, rng);
  }
  if (layer.adapters.bias) layer.B.values.assign(layer.B.values.size(), 0.0);
  if (had_grad) {
    if (layer.adapters.input_scale) layer.R.set_requires_grad(true);
    if (layer.adapters.output_scale) layer.S.set_requires_grad(true);
    if (layer.adapters.bias) layer.B.set_requires_grad(true);
  }
}

Var orthogonality_penalty(Pass& pass, Tensor& adapter_stack, double lambda) {
  if (lambda < 0.0) throw ConfigError("orthogonality_penalty: lambda < 0");
  Var a = pass.leaf(adapter_stack);
  Var gram = matmul(a, transpose(a));
  Var diff = sub(gram, pass.constant(Tensor::identity(adapter_stack.rows())));
  return scale(sum(mul(diff, diff)), lambda);
}

Var dropout(Pass& pass, Var x, const DropoutSpec& spec, Rng& rng) {
  if (spec.rate >= 1.0 || spec.rate < 0.0)
    throw ConfigError("dropout: rate must be in [0,1), got " + std::to_string(spec.rate));
  if (!spec.active || spec.rate == 0.0) return x;
  const Tensor& xv = pass.tape.value(x);
  Tensor mask = Tensor::zeros(xv.rows(), xv.cols());
  const double keep = 1.0 - spec.rate;
  for (double& v : mask.values) v = rng.uniform() < keep ? 1.0 / keep : 0.0;
  return mul(x, pass.constant(std::move(mask)));
}

}  // namespace batchens
