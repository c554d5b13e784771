#pragma once

#include <functional>
#include <unordered_map>
#include <vector>

#include "batchens/tensor.hpp"

namespace batchens {

class Tape;

// Handle to a node on a tape. Cheap to copy; valid for the tape's lifetime.
struct Var {
  Tape* tape = nullptr;
  int id = -1;
  bool valid() const { return tape != nullptr; }
};

// Reverse-mode gradient tape. Nodes are appended in evaluation order, so
// index order is already topological; backward() walks them in reverse.
// Gradients accumulate: calling backward twice doubles every leaf gradient.
// A tape and the Vars on it are confined to a single thread.
class Tape {
 public:
  // Leaf bound to an external parameter: its gradient is added into
  // param.grad during backward. The value is snapshotted at creation.
  Var leaf(Tensor& param);

  // Constant input; no gradient flows into it.
  Var constant(Tensor value);

  const Tensor& value(Var v) const { return nodes_[v.id].val; }
  const std::vector<double>& grad(Var v) const { return nodes_[v.id].grad; }

  // Backpropagate from a scalar node into every reachable leaf.
  void backward(Var loss);

  size_t node_count() const { return nodes_.size(); }

  // Low-level node interface used by the op functions below.
  using BackFn = std::function<void(Tape&, int self)>;
  Var add_node(Tensor val, bool requires_grad, std::vector<int> parents, BackFn back);
  bool needs_grad(Var v) const { return nodes_[v.id].requires_grad; }
  const std::vector<double>& out_grad(int id) const { return nodes_[id].grad; }
  const Tensor& val_of(int id) const { return nodes_[id].val; }
  void accumulate(int id, const double* g, size_t n);

 private:
  struct Node {
    Tensor val;
    std::vector<double> grad;  // allocated iff requires_grad
    bool requires_grad = false;
    Tensor* bound = nullptr;  // leaf parameter, if any
    std::vector<int> parents;
    BackFn back;
  };

  std::vector<Node> nodes_;
};

Var matmul(Var a, Var b);
Var transpose(Var a);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);

// Broadcast a 1-by-q row vector over every row of a.
Var add_rowvec(Var a, Var v);

// Member-interleaved adapter ops: row r of z belongs to ensemble member
// r % K and is scaled by (or offset with) row r % K of the K-row stack.
Var member_scale(Var z, Var adapters, int ensemble_size);
Var member_bias(Var z, Var biases, int ensemble_size);

// Each row repeated `times` consecutive times: produces the
// member-interleaved layout that evaluates all members on equal inputs.
Var repeat_rows(Var a, int times);

Var concat_cols(Var a, Var b);
Var scale(Var a, double c);
Var add_const(Var a, double c);
Var rsub_const(double c, Var a);
Var tanh_(Var a);
Var sigmoid(Var a);
Var relu(Var a);
Var exp_(Var a);
Var log_(Var a);
Var clamp(Var a, double lo, double hi);
Var clamp_min(Var a, double lo);
Var softmax_rows(Var a);

// out[i,0] = a[i, cols[i]]; gradient scatters back to the picked entries.
Var pick_cols(Var a, const std::vector<int>& cols);

Var sum(Var a);
Var mean(Var a);

// One forward/backward episode: a tape plus a per-parameter leaf cache so
// a parameter used at several points (e.g. every step of an unrolled
// recurrence) maps to a single leaf whose gradient sums all contributions.
// Constructed with grad=false it builds a forward-only graph.
class Pass {
 public:
  explicit Pass(bool grad = true) : grad_(grad) {}

  Var leaf(Tensor& param);
  Var constant(Tensor value) { return tape.constant(std::move(value)); }

  bool grad_enabled() const { return grad_; }

  Tape tape;

 private:
  bool grad_;
  std::unordered_map<const Tensor*, Var> cache_;
};

// Central-difference gradient oracle: (f(x+h e_i) - f(x-h e_i)) / 2h per
// coordinate. Used by tests to validate every differentiable op.
Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& x,
                        double h = 1e-5);

}  // namespace batchens
