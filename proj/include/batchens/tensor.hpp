#pragma once

#include <cstddef>
#include <initializer_list>
#include <vector>

namespace batchens {

// Dense row-major array of 64-bit reals. Rank 0 (scalar), 1 (vector) and
// 2 (matrix) are used throughout; product(shape) == values.size() always.
// When requires_grad is set, grad holds a same-sized buffer that gradient
// passes accumulate into (+=); callers reset it with zero_grad().
struct Tensor {
  std::vector<int> shape;
  std::vector<double> values;
  bool requires_grad = false;
  std::vector<double> grad;

  Tensor() = default;

  static Tensor zeros(int r, int c);
  static Tensor full(int r, int c, double v);
  static Tensor scalar(double v);
  static Tensor matrix(int r, int c, std::vector<double> vals);
  static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor identity(int n);

  int rows() const;
  int cols() const;
  size_t size() const { return values.size(); }

  double& at(int i, int j) { return values[static_cast<size_t>(i) * cols() + j]; }
  double at(int i, int j) const { return values[static_cast<size_t>(i) * cols() + j]; }

  double item() const;  // value of a one-element tensor

  void set_requires_grad(bool on);
  void zero_grad();

  bool same_shape(const Tensor& o) const { return shape == o.shape; }
  bool all_finite() const;
};

// Accumulating matrix kernels over raw buffers, C is m-by-n in all three.
// gemm_nn: C += A(m,k) * B(k,n)
// gemm_nt: C += A(m,k) * B(n,k)^T
// gemm_tn: C += A(k,m)^T * B(k,n)
void gemm_nn(const double* a, const double* b, double* c, int m, int k, int n);
void gemm_nt(const double* a, const double* b, double* c, int m, int k, int n);
void gemm_tn(const double* a, const double* b, double* c, int m, int k, int n);

}  // namespace batchens
