#include "batchens/recurrent.hpp"

#include "batchens/errors.hpp"

namespace batchens {

GruCell GruCell::make(int in, int hidden, Rng& rng) {
  GruCell c;
  c.in = in;
  c.hidden = hidden;
  auto make_gate = [&](Gate& g) {
    DenseLinear base = DenseLinear::make(in + hidden, hidden, rng);
    g.W = std::move(base.W);
    g.b_in = Tensor::zeros(1, hidden);
    g.b_in.set_requires_grad(true);
    g.b_hid = Tensor::zeros(1, hidden);
    g.b_hid.set_requires_grad(true);
  };
  make_gate(c.reset);
  make_gate(c.update);
  make_gate(c.candidate);
  return c;
}

long GruCell::param_count() const {
  auto g = [](const Gate& gt) {
    return static_cast<long>(gt.W.size() + gt.b_in.size() + gt.b_hid.size());
  };
  return g(reset) + g(update) + g(candidate);
}

namespace {

Var gru_gate(Pass& pass, GruCell::Gate& gate, Var input) {
  Var pre = matmul(input, pass.leaf(gate.W));
  pre = add_rowvec(pre, pass.leaf(gate.b_in));
  pre = add_rowvec(pre, pass.leaf(gate.b_hid));
  return pre;
}

}  // namespace

Var gru_step(Pass& pass, GruCell& cell, Var x_t, Var h_prev) {
  const Tensor& xv = pass.tape.value(x_t);
  const Tensor& hv = pass.tape.value(h_prev);
  if (xv.cols() != cell.in || hv.cols() != cell.hidden || xv.rows() != hv.rows())
    throw ShapeError("gru_step: input " + std::to_string(xv.rows()) + "x" +
                     std::to_string(xv.cols()) + ", hidden " + std::to_string(hv.rows()) + "x" +
                     std::to_string(hv.cols()) + " vs cell " + std::to_string(cell.in) + "/" +
                     std::to_string(cell.hidden));
  Var xh = concat_cols(x_t, h_prev);
  Var f = sigmoid(gru_gate(pass, cell.reset, xh));
  Var z = sigmoid(gru_gate(pass, cell.update, xh));
  Var xfh = concat_cols(x_t, mul(f, h_prev));
  Var c = tanh_(gru_gate(pass, cell.candidate, xfh));
  return add(mul(rsub_const(1.0, z), h_prev), mul(z, c));
}

std::string GateMask::label() const {
  std::string s;
  if (candidate) s += 'C';
  if (update) s += 'Z';
  if (reset) s += 'F';
  return s.empty() ? "none" : s;
}

GateMask GateMask::from_label(const std::string& s) {
  GateMask m{false, false, false};
  for (char c : s) {
    switch (c) {
      case 'C': m.candidate = true; break;
      case 'Z': m.update = true; break;
      case 'F': m.reset = true; break;
      default: throw ConfigError("gate mask: unknown gate '" + std::string(1, c) + "'");
    }
  }
  return m;
}

GrubeCell GrubeCell::make(int in, int hidden, int ensemble_size, Rng& rng, GateMask gates,
                          AdapterMask adapters, InitScheme scheme) {
  GrubeCell c;
  c.in = in;
  c.hidden = hidden;
  c.K = ensemble_size;
  c.gates = gates;
  auto make_gate = [&](BeGate& g, bool ensemble) {
    g.ensemble = ensemble;
    if (ensemble)
      g.ens = EnsembleLinear::make(in + hidden, hidden, ensemble_size, rng, adapters, scheme);
    else
      g.plain = DenseLinear::make(in + hidden, hidden, rng);
  };
  make_gate(c.reset, gates.reset);
  make_gate(c.update, gates.update);
  make_gate(c.candidate, gates.candidate);
  return c;
}

long GrubeCell::param_count() const {
  auto g = [](const BeGate& gt) {
    return gt.ensemble ? gt.ens.param_count() : gt.plain.param_count();
  };
  return g(reset) + g(update) + g(candidate);
}

namespace {

Var grube_gate(Pass& pass, GrubeCell::BeGate& gate, Var input) {
  if (gate.ensemble) return be_forward(pass, gate.ens, input);
  return dense_forward(pass, gate.plain, input);
}

}  // namespace

Var grube_step(Pass& pass, GrubeCell& cell, Var x_t, Var h_prev) {
  const Tensor& xv = pass.tape.value(x_t);
  const Tensor& hv = pass.tape.value(h_prev);
  if (xv.cols() != cell.in || hv.cols() != cell.hidden || xv.rows() != hv.rows())
    throw ShapeError("grube_step: input " + std::to_string(xv.rows()) + "x" +
                     std::to_string(xv.cols()) + ", hidden " + std::to_string(hv.rows()) + "x" +
                     std::to_string(hv.cols()));
  if (xv.rows() % cell.K != 0)
    throw ContractError("grube_step: rows " + std::to_string(xv.rows()) +
                        " not grouped by K=" + std::to_string(cell.K));
  Var xh = concat_cols(x_t, h_prev);
  Var f = sigmoid(grube_gate(pass, cell.reset, xh));
  Var z = sigmoid(grube_gate(pass, cell.update, xh));
  Var xfh = concat_cols(x_t, mul(f, h_prev));
  Var c = tanh_(grube_gate(pass, cell.candidate, xfh));
  return add(mul(rsub_const(1.0, z), h_prev), mul(z, c));
}

std::vector<Var> unroll_gru(Pass& pass, GruCell& cell, const std::vector<Var>& steps, Var h0) {
  return unroll(pass, cell, steps, h0,
                [](Pass& p, GruCell& c, Var x, Var h) { return gru_step(p, c, x, h); });
}

std::vector<Var> unroll_grube(Pass& pass, GrubeCell& cell, const std::vector<Var>& steps, Var h0) {
  return unroll(pass, cell, steps, h0,
                [](Pass& p, GrubeCell& c, Var x, Var h) { return grube_step(p, c, x, h); });
}

}  // namespace batchens
