#include "batchens/tape.hpp"

#include <algorithm>
#include <cmath>

#include "batchens/errors.hpp"

namespace batchens {

namespace {

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b))
    throw ShapeError(std::string(op) + ": shapes " + std::to_string(a.rows()) + "x" +
                     std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                     std::to_string(b.cols()));
}

void check_same_tape(Var a, Var b) {
  if (a.tape != b.tape) throw ContractError("operands live on different tapes");
}

}  // namespace

Var Tape::add_node(Tensor val, bool requires_grad, std::vector<int> parents, BackFn back) {
  Node n;
  n.val = std::move(val);
  n.val.requires_grad = false;  // node-local grads live in Node::grad
  n.val.grad.clear();
  n.requires_grad = requires_grad;
  if (requires_grad) {
    n.grad.assign(n.val.size(), 0.0);
    n.parents = std::move(parents);
    n.back = std::move(back);
  }
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::leaf(Tensor& param) {
  Var v = add_node(param, param.requires_grad, {}, nullptr);
  nodes_[v.id].bound = param.requires_grad ? &param : nullptr;
  return v;
}

Var Tape::constant(Tensor value) {
  return add_node(std::move(value), false, {}, nullptr);
}

void Tape::accumulate(int id, const double* g, size_t n) {
  Node& nd = nodes_[id];
  if (!nd.requires_grad) return;
  double* dst = nd.grad.data();
  for (size_t i = 0; i < n; ++i) dst[i] += g[i];
}

void Tape::backward(Var loss) {
  if (loss.tape != this) throw ContractError("backward: loss from another tape");
  Node& top = nodes_[loss.id];
  if (top.val.size() != 1) throw ContractError("backward: loss is not scalar");
  if (!top.requires_grad) return;  // constant loss: nothing depends on parameters

  // Mark the ancestry of the loss so unrelated graph regions are skipped.
  std::vector<char> live(static_cast<size_t>(loss.id) + 1, 0);
  live[loss.id] = 1;
  for (int id = loss.id; id >= 0; --id) {
    if (!live[id]) continue;
    for (int p : nodes_[id].parents)
      if (nodes_[p].requires_grad) live[p] = 1;
  }

  // Node grads are scratch per call; only bound parameters accumulate
  // across calls, so a second backward adds the same gradient again.
  for (int id = loss.id; id >= 0; --id)
    if (live[id]) nodes_[id].grad.assign(nodes_[id].grad.size(), 0.0);

  top.grad[0] = 1.0;
  for (int id = loss.id; id >= 0; --id) {
    if (!live[id]) continue;
    Node& nd = nodes_[id];
    if (nd.back) nd.back(*this, id);
    if (nd.bound) {
      double* dst = nd.bound->grad.data();
      for (size_t i = 0; i < nd.grad.size(); ++i) dst[i] += nd.grad[i];
    }
  }
}

Var Pass::leaf(Tensor& param) {
  auto it = cache_.find(&param);
  if (it != cache_.end()) return it->second;
  Var v;
  if (grad_) {
    v = tape.leaf(param);
  } else {
    v = tape.constant(param);
  }
  cache_.emplace(&param, v);
  return v;
}

// ---------------------------------------------------------------------------
// Ops

Var matmul(Var a, Var b) {
  check_same_tape(a, b);
  Tape& t = *a.tape;
  const Tensor& av = t.value(a);
  const Tensor& bv = t.value(b);
  if (av.cols() != bv.rows())
    throw ShapeError("matmul: " + std::to_string(av.rows()) + "x" + std::to_string(av.cols()) +
                     " * " + std::to_string(bv.rows()) + "x" + std::to_string(bv.cols()));
  const int m = av.rows(), k = av.cols(), n = bv.cols();
  Tensor out = Tensor::zeros(m, n);
  gemm_nn(av.values.data(), bv.values.data(), out.values.data(), m, k, n);
  bool rg = t.needs_grad(a) || t.needs_grad(b);
  return t.add_node(std::move(out), rg, {a.id, b.id}, [a, b, m, k, n](Tape& tp, int self) {
    const std::vector<double>& g = tp.out_grad(self);
    if (tp.needs_grad(a)) {
      std::vector<double> da(static_cast<size_t>(m) * k, 0.0);
      gemm_nt(g.data(), tp.val_of(b.id).values.data(), da.data(), m, n, k);
      tp.accumulate(a.id, da.data(), da.size());
    }
    if (tp.needs_grad(b)) {
      std::vector<double> db(static_cast<size_t>(k) * n, 0.0);
      gemm_tn(tp.val_of(a.id).values.data(), g.data(), db.data(), k, m, n);
      tp.accumulate(b.id, db.data(), db.size());
    }
  });
}

Var transpose(Var a) {
  Tape& t = *a.tape;
  const Tensor& av = t.value(a);
  const int m = av.rows(), n = av.cols();
  Tensor out = Tensor::zeros(n, m);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out.at(j, i) = av.at(i, j);
  return t.add_node(std::move(out), t.needs_grad(a), {a.id}, [a, m, n](Tape& tp, int self) {
    const std::vector<double>& g = tp.out_grad(self);
    std::vector<double> da(static_cast<size_t>(m) * n);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) da[static_cast<size_t>(i) * n + j] = g[static_cast<size_t>(j) * m + i];
    tp.accumulate(a.id, da.data(), da.size());
  });
}

namespace {

// Elementwise binary op helper: out = f(a, b), with per-element partials.
template <typename F, typename DA, typename DB>
Var ewise_binary(Var a, Var b, const char* name, F f, DA da_of, DB db_of) {
  check_same_tape(a, b);
  Tape& t = *a.tape;
  const Tensor& av = t.value(a);
  const Tensor& bv = t.value(b);
  check_same_shape(av, bv, name);
  Tensor out = av;
  for (size_t i = 0; i < out.values.size(); ++i) out.values[i] = f(av.values[i], bv.values[i]);
  bool rg = t.needs_grad(a) || t.needs_grad(b);
  return t.add_node(std::move(out), rg, {a.id, b.id}, [a, b, da_of, db_of](Tape& tp, int self) {
    const std::vector<double>& g = tp.out_grad(self);
    const Tensor& x = tp.val_of(a.id);
    const Tensor& y = tp.val_of(b.id);
    if (tp.needs_grad(a)) {
      std::vector<double> da(g.size());
      for (size_t i = 0; i < g.size(); ++i) da[i] = g[i] * da_of(x.values[i], y.values[i]);
      tp.accumulate(a.id, da.data(), da.size());
    }
    if (tp.needs_grad(b)) {
      std::vector<double> db(g.size());
      for (size_t i = 0; i < g.size(); ++i) db[i] = g[i] * db_of(x.values[i], y.values[i]);
      tp.accumulate(b.id, db.data(), db.size());
    }
  });
}

// Elementwise unary op: out = f(a); derivative computed from (x, y) pairs.
template <typename F, typename D>
Var ewise_unary(Var a, F f, D d_of) {
  Tape& t = *a.tape;
  const Tensor& av = t.value(a);
  Tensor out = av;
  for (size_t i = 0; i < out.values.size(); ++i) out.values[i] = f(av.values[i]);
  return t.add_node(std::move(out), t.needs_grad(a), {a.id}, [a, d_of](Tape& tp, int self) {
    const std::vector<double>& g = tp.out_grad(self);
    const Tensor& x = tp.val_of(a.id);
    const Tensor& y = tp.val_of(self);
    std::vector<double> da(g.size());
    for (size_t i = 0; i < g.size(); ++i) da[i] = g[i] * d_of(x.values[i], y.values[i]);
    tp.accumulate(a.id, da.data(), da.size());
  });
}

}  // namespace

Var add(Var a, Var b) {
  return ewise_binary(
      a, b, "add", [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; });
}

Var sub(Var a, Var b) {
  return ewise_binary(
      a, b, "sub", [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
      [](double, double) { return -1.0; });
}

Var mul(Var a, Var b) {
  return ewise_binary(
      a, b, "mul", [](double x, double y) { return x * y; }, [](double, double y) { return y; },
      [](double x, double) { return x; });
}

Var add_rowvec(Var a, Var v) {
  check_same_tape(a, v);
  Tape& t = *a.tape;
  const Tensor& av = t.value(a);
  const Tensor& vv = t.value(v);
  if (vv.rows() != 1 || vv.cols() != av.cols())
    throw ShapeError("add_rowvec: vector 1x" + std::to_string(vv.cols()) + " vs matrix cols " +
                     std::to_string(av.cols()));
  const int m = av.rows(), n = av.cols();
  Tensor out = av;
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out.at(i, j) += vv.values[j];
  bool rg = t.needs_grad(a) || t.needs_grad(v);
  return t.add_node(std::move(out), rg, {a.id, v.id}, [a, v, m, n](Tape& tp, int self) {
    const std::vector<double>& g = tp.out_grad(self);
    if (tp.needs_grad(a)) tp.accumulate(a.id, g.data(), g.size());
    if (tp.needs_grad(v)) {
      std::vector<double> dv(n, 0.0);
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) dv[j] += g[static_cast<size_t>(i) * n + j];
      tp.accumulate(v.id, dv.data(), dv.size());
    }
  });
}

Var member_scale(Var z, Var adapters, int ensemble_size) {
  check_same_tape(z, adapters);
  Tape& t = *z.tape;
  const Tensor& zv = t.value(z);
  const Tensor& av = t.value(adapters);
  const int K = ensemble_size;
  if (av.rows() != K || av.cols() != zv.cols())
    throw ShapeError("member_scale: adapter stack " + std::to_string(av.rows()) + "x" +
                     std::to_string(av.cols()) + " for K=" + std::to_string(K) + ", cols " +
                     std::to_string(zv.cols()));
  if (zv.rows() % K != 0)
    throw ContractError("member_scale: rows " + std::to_string(zv.rows()) +
                        " not grouped by K=" + std::to_string(K));
  const int m = zv.rows(), n = zv.cols();
  Tensor out = zv;
  for (int i = 0; i < m; ++i) {
    const double* arow = av.values.data() + static_cast<size_t>(i % K) * n;
    double* orow = out.values.data() + static_cast<size_t>(i) * n;
    for (int j = 0; j < n; ++j) orow[j] *= arow[j];
  }
  bool rg = t.needs_grad(z) || t.needs_grad(adapters);
  return t.add_node(std::move(out), rg, {z.id, adapters.id},
                    [z, adapters, K, m, n](Tape& tp, int self) {
                      const std::vector<double>& g = tp.out_grad(self);
                      const Tensor& zx = tp.val_of(z.id);
                      const Tensor& ax = tp.val_of(adapters.id);
                      if (tp.needs_grad(z)) {
                        std::vector<double> dz(g.size());
                        for (int i = 0; i < m; ++i) {
                          const double* arow = ax.values.data() + static_cast<size_t>(i % K) * n;
                          const double* grow = g.data() + static_cast<size_t>(i) * n;
                          double* drow = dz.data() + static_cast<size_t>(i) * n;
                          for (int j = 0; j < n; ++j) drow[j] = grow[j] * arow[j];
                        }
                        tp.accumulate(z.id, dz.data(), dz.size());
                      }
                      if (tp.needs_grad(adapters)) {
                        std::vector<double> da(static_cast<size_t>(K) * n, 0.0);
                        for (int i = 0; i < m; ++i) {
                          const double* zrow = zx.values.data() + static_cast<size_t>(i) * n;
                          const double* grow = g.data() + static_cast<size_t>(i) * n;
                          double* drow = da.data() + static_cast<size_t>(i % K) * n;
                          for (int j = 0; j < n; ++j) drow[j] += grow[j] * zrow[j];
                        }
                        tp.accumulate(adapters.id, da.data(), da.size());
                      }
                    });
}

Var member_bias(Var z, Var biases, int ensemble_size) {
  check_same_tape(z, biases);
  Tape& t = *z.tape;
  const Tensor& zv = t.value(z);
  const Tensor& bv = t.value(biases);
  const int K = ensemble_size;
  if (bv.rows() != K || bv.cols() != zv.cols())
    throw ShapeError("member_bias: bias stack " + std::to_string(bv.rows()) + "x" +
                     std::to_string(bv.cols()) + " for K=" + std::to_string(K) + ", cols " +
                     std::to_string(zv.cols()));
  if (zv.rows() % K != 0)
    throw ContractError("member_bias: rows " + std::to_string(zv.rows()) +
                        " not grouped by K=" + std::to_string(K));
  const int m = zv.rows(), n = zv.cols();
  Tensor out = zv;
  for (int i = 0; i < m; ++i) {
    const double* brow = bv.values.data() + static_cast<size_t>(i % K) * n;
    double* orow = out.values.data() + static_cast<size_t>(i) * n;
    for (int j = 0; j < n; ++j) orow[j] += brow[j];
  }
  bool rg = t.needs_grad(z) || t.needs_grad(biases);
  return t.add_node(std::move(out), rg, {z.id, biases.id}, [z, biases, K, m, n](Tape& tp, int self) {
    const std::vector<double>& g = tp.out_grad(self);
    if (tp.needs_grad(z)) tp.accumulate(z.id, g.data(), g.size());
    if (tp.needs_grad(biases)) {
      std::vector<double> db(static_cast<size_t>(K) * n, 0.0);
      for (int i = 0; i < m; ++i) {
        const double* grow = g.data() + static_cast<size_t>(i) * n;
        double* drow = db.data() + static_cast<size_t>(i % K) * n;
        for (int j = 0; j < n; ++j) drow[j] += grow[j];
      }
      tp.accumulate(biases.id, db.data(), db.size());
    }
  });
}

Var repeat_rows(Var a, int times) {
  Tape& t = *a.tape;
  const Tensor& av = t.value(a);
  if (times < 1) throw ContractError("repeat_rows: times < 1");
  const int m = av.rows(), n = av.cols();
  Tensor out = Tensor::zeros(m * times, n);
  for (int i = 0; i < m; ++i)
    for (int r = 0; r < times; ++r)
      std::copy_n(av.values.data() + static_cast<size_t>(i) * n, n,
                  out.values.data() + (static_cast<size_t>(i) * times + r) * n);
  return t.add_node(std::move(out), t.needs_grad(a), {a.id}, [a, times, m, n](Tape& tp, int self) {
    const std::vector<double>& g = tp.out_grad(self);
    std::vector<double> da(static_cast<size_t>(m) * n, 0.0);
    for (int i = 0; i < m; ++i)
      for (int r = 0; r < times; ++r) {
        const double* grow = g.data() + (static_cast<size_t>(i) * times + r) * n;
        double* drow = da.data() + static_cast<size_t>(i) * n;
        for (int j = 0; j < n; ++j) drow[j] += grow[j];
      }
    tp.accumulate(a.id, da.data(), da.size());
  });
}

Var concat_cols(Var a, Var b) {
  check_same_tape(a, b);
  Tape& t = *a.tape;
  const Tensor& av = t.value(a);
  const Tensor& bv = t.value(b);
  if (av.rows() != bv.rows())
    throw ShapeError("concat_cols: rows " + std::to_string(av.rows()) + " vs " +
                     std::to_string(bv.rows()));
  const int m = av.rows(), na = av.cols(), nb = bv.cols();
  Tensor out = Tensor::zeros(m, na + nb);
  for (int i = 0; i < m; ++i) {
    std::copy_n(av.values.data() + static_cast<size_t>(i) * na, na,
                out.values.data() + static_cast<size_t>(i) * (na + nb));
    std::copy_n(bv.values.data() + static_cast<size_t>(i) * nb, nb,
                out.values.data() + static_cast<size_t>(i) * (na + nb) + na);
  }
  bool rg = t.needs_grad(a) || t.needs_grad(b);
  return t.add_node(std::move(out), rg, {a.id, b.id}, [a, b, m, na, nb](Tape& tp, int self) {
    const std::vector<double>& g = tp.out_grad(self);
    if (tp.needs_grad(a)) {
      std::vector<double> da(static_cast<size_t>(m) * na);
      for (int i = 0; i < m; ++i)
        std::copy_n(g.data() + static_cast<size_t>(i) * (na + nb), na,
                    da.data() + static_cast<size_t>(i) * na);
      tp.accumulate(a.id, da.data(), da.size());
    }
    if (tp.needs_grad(b)) {
      std::vector<double> db(static_cast<size_t>(m) * nb);
      for (int i = 0; i < m; ++i)
        std::copy_n(g.data() + static_cast<size_t>(i) * (na + nb) + na, nb,
                    db.data() + static_cast<size_t>(i) * nb);
      tp.accumulate(b.id, db.data(), db.size());
    }
  });
}

Var scale(Var a, double c) {
  return ewise_unary(a, [c](double x) { return c * x; }, [c](double, double) { return c; });
}

Var add_const(Var a, double c) {
  return ewise_unary(a, [c](double x) { return x + c; }, [](double, double) { return 1.0; });
}

Var rsub_const(double c, Var a) {
  return ewise_unary(a, [c](double x) { return c - x; }, [](double, double) { return -1.0; });
}

Var tanh_(Var a) {
  return ewise_unary(a, [](double x) { return std::tanh(x); },
                     [](double, double y) { return 1.0 - y * y; });
}

Var sigmoid(Var a) {
  return ewise_unary(a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
                     [](double, double y) { return y * (1.0 - y); });
}

Var relu(Var a) {
  return ewise_unary(a, [](double x) { return x > 0.0 ? x : 0.0; },
                     [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var exp_(Var a) {
  return ewise_unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log_(Var a) {
  return ewise_unary(a, [](double x) { return std::log(x); },
                     [](double x, double) { return 1.0 / x; });
}

Var clamp(Var a, double lo, double hi) {
  return ewise_unary(a, [lo, hi](double x) { return std::min(std::max(x, lo), hi); },
                     [lo, hi](double x, double) { return (x > lo && x < hi) ? 1.0 : 0.0; });
}

Var clamp_min(Var a, double lo) {
  return ewise_unary(a, [lo](double x) { return std::max(x, lo); },
                     [lo](double x, double) { return x > lo ? 1.0 : 0.0; });
}

Var softmax_rows(Var a) {
  Tape& t = *a.tape;
  const Tensor& av = t.value(a);
  const int m = av.rows(), n = av.cols();
  Tensor out = Tensor::zeros(m, n);
  for (int i = 0; i < m; ++i) {
    const double* row = av.values.data() + static_cast<size_t>(i) * n;
    double* orow = out.values.data() + static_cast<size_t>(i) * n;
    double mx = row[0];
    for (int j = 1; j < n; ++j) mx = std::max(mx, row[j]);
    double z = 0.0;
    for (int j = 0; j < n; ++j) {
      orow[j] = std::exp(row[j] - mx);
      z += orow[j];
    }
    for (int j = 0; j < n; ++j) orow[j] /= z;
  }
  return t.add_node(std::move(out), t.needs_grad(a), {a.id}, [a, m, n](Tape& tp, int self) {
    const std::vector<double>& g = tp.out_grad(self);
    const Tensor& p = tp.val_of(self);
    std::vector<double> da(g.size());
    for (int i = 0; i < m; ++i) {
      const double* pr = p.values.data() + static_cast<size_t>(i) * n;
      const double* gr = g.data() + static_cast<size_t>(i) * n;
      double dot = 0.0;
      for (int j = 0; j < n; ++j) dot += gr[j] * pr[j];
      double* dr = da.data() + static_cast<size_t>(i) * n;
      for (int j = 0; j < n; ++j) dr[j] = pr[j] * (gr[j] - dot);
    }
    tp.accumulate(a.id, da.data(), da.size());
  });
}

Var pick_cols(Var a, const std::vector<int>& cols) {
  Tape& t = *a.tape;
  const Tensor& av = t.value(a);
  const int m = av.rows(), n = av.cols();
  if (static_cast<int>(cols.size()) != m)
    throw ShapeError("pick_cols: " + std::to_string(cols.size()) + " indices for " +
                     std::to_string(m) + " rows");
  for (int i = 0; i < m; ++i)
    if (cols[i] < 0 || cols[i] >= n)
      throw DataError("pick_cols: index " + std::to_string(cols[i]) + " out of range at row " +
                      std::to_string(i));
  Tensor out = Tensor::zeros(m, 1);
  for (int i = 0; i < m; ++i) out.values[i] = av.at(i, cols[i]);
  std::vector<int> idx = cols;
  return t.add_node(std::move(out), t.needs_grad(a), {a.id},
                    [a, idx = std::move(idx), m, n](Tape& tp, int self) {
                      const std::vector<double>& g = tp.out_grad(self);
                      std::vector<double> da(static_cast<size_t>(m) * n, 0.0);
                      for (int i = 0; i < m; ++i) da[static_cast<size_t>(i) * n + idx[i]] = g[i];
                      tp.accumulate(a.id, da.data(), da.size());
                    });
}

Var sum(Var a) {
  Tape& t = *a.tape;
  const Tensor& av = t.value(a);
  double s = 0.0;
  for (double v : av.values) s += v;
  return t.add_node(Tensor::scalar(s), t.needs_grad(a), {a.id}, [a](Tape& tp, int self) {
    const double g = tp.out_grad(self)[0];
    std::vector<double> da(tp.val_of(a.id).size(), g);
    tp.accumulate(a.id, da.data(), da.size());
  });
}

Var mean(Var a) {
  Tape& t = *a.tape;
  const Tensor& av = t.value(a);
  const size_t n = av.size();
  if (n == 0) throw ContractError("mean of empty tensor");
  double s = 0.0;
  for (double v : av.values) s += v;
  return t.add_node(Tensor::scalar(s / static_cast<double>(n)), t.needs_grad(a), {a.id},
                    [a, n](Tape& tp, int self) {
                      const double g = tp.out_grad(self)[0] / static_cast<double>(n);
                      std::vector<double> da(n, g);
                      tp.accumulate(a.id, da.data(), da.size());
                    });
}

Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& x, double h) {
  if (h <= 0.0) throw ContractError("finite_diff_grad: h must be positive");
  Tensor g = x;
  g.requires_grad = false;
  g.grad.clear();
  Tensor probe = x;
  for (size_t i = 0; i < x.values.size(); ++i) {
    const double orig = probe.values[i];
    probe.values[i] = orig + h;
    const double fp = f(probe);
    probe.values[i] = orig - h;
    const double fm = f(probe);
    probe.values[i] = orig;
    g.values[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

}  // namespace batchens
