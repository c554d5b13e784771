#include "batchens/tensor.hpp"

#include <cmath>

#include "batchens/errors.hpp"

namespace batchens {

Tensor Tensor::zeros(int r, int c) {
  Tensor t;
  t.shape = {r, c};
  t.values.assign(static_cast<size_t>(r) * c, 0.0);
  return t;
}

Tensor Tensor::full(int r, int c, double v) {
  Tensor t = zeros(r, c);
  t.values.assign(t.values.size(), v);
  return t;
}

Tensor Tensor::scalar(double v) {
  Tensor t;
  t.shape = {1, 1};
  t.values = {v};
  return t;
}

Tensor Tensor::matrix(int r, int c, std::vector<double> vals) {
  if (vals.size() != static_cast<size_t>(r) * c)
    throw ShapeError("matrix: " + std::to_string(vals.size()) + " values for " +
                     std::to_string(r) + "x" + std::to_string(c));
  Tensor t;
  t.shape = {r, c};
  t.values = std::move(vals);
  return t;
}

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  Tensor t;
  int r = static_cast<int>(rows.size());
  int c = r > 0 ? static_cast<int>(rows.begin()->size()) : 0;
  t.shape = {r, c};
  t.values.reserve(static_cast<size_t>(r) * c);
  for (const auto& row : rows) {
    if (static_cast<int>(row.size()) != c) throw ShapeError("from_rows: ragged rows");
    for (double v : row) t.values.push_back(v);
  }
  return t;
}

Tensor Tensor::identity(int n) {
  Tensor t = zeros(n, n);
  for (int i = 0; i < n; ++i) t.at(i, i) = 1.0;
  return t;
}

int Tensor::rows() const {
  if (shape.empty()) return 1;
  return shape[0];
}

int Tensor::cols() const {
  if (shape.size() < 2) return 1;  // rank-0/1 tensors are column vectors
  return shape[1];
}

double Tensor::item() const {
  if (values.size() != 1) throw ContractError("item: tensor has " + std::to_string(values.size()) + " elements");
  return values[0];
}

void Tensor::set_requires_grad(bool on) {
  requires_grad = on;
  if (on)
    grad.assign(values.size(), 0.0);
  else
    grad.clear();
}

void Tensor::zero_grad() {
  grad.assign(values.size(), 0.0);
}

bool Tensor::all_finite() const {
  for (double v : values)
    if (!std::isfinite(v)) return false;
  return true;
}

void gemm_nn(const double* a, const double* b, double* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const double* ai = a + static_cast<size_t>(i) * k;
    double* ci = c + static_cast<size_t>(i) * n;
    for (int p = 0; p < k; ++p) {
      const double av = ai[p];
      if (av == 0.0) continue;
      const double* bp = b + static_cast<size_t>(p) * n;
      for (int j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

void gemm_nt(const double* a, const double* b, double* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const double* ai = a + static_cast<size_t>(i) * k;
    double* ci = c + static_cast<size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      const double* bj = b + static_cast<size_t>(j) * k;
      double acc = 0.0;
      for (int p = 0; p < k; ++p) acc += ai[p] * bj[p];
      ci[j] += acc;
    }
  }
}

void gemm_tn(const double* a, const double* b, double* c, int m, int k, int n) {
  for (int p = 0; p < k; ++p) {
    const double* ap = a + static_cast<size_t>(p) * m;
    const double* bp = b + static_cast<size_t>(p) * n;
    for (int i = 0; i < m; ++i) {
      const double av = ap[i];
      if (av == 0.0) continue;
      double* ci = c + static_cast<size_t>(i) * n;
      for (int j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

}  // namespace batchens
