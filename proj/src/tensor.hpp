#ifndef KGCDR_TENSOR_HPP
#define KGCDR_TENSOR_HPP

#include <cstddef>
#include <span>
#include <vector>

#include "common.hpp"
#include "rng.hpp"

namespace kgcdr {

/// Dense row-major matrix of doubles. All training-time quantities
/// (weights, gradients, moments, embeddings) live in these.
struct Tensor2 {
  size_t rows = 0;
  size_t cols = 0;
  std::vector<double> data;

  Tensor2() = default;
  Tensor2(size_t r, size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  size_t size() const { return rows * cols; }

  double& at(size_t r, size_t c) { return data[r * cols + c]; }
  double at(size_t r, size_t c) const { return data[r * cols + c]; }

  std::span<double> row(size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const double> row(size_t r) const { return {data.data() + r * cols, cols}; }

  bool same_shape(const Tensor2& other) const {
    return rows == other.rows && cols == other.cols;
  }

  bool all_finite() const;
  void fill(double v) { std::fill(data.begin(), data.end(), v); }
  void set_zero() { fill(0.0); }
};

Tensor2 matmul(const Tensor2& a, const Tensor2& b);

/// aᵀ·b without materializing the transpose.
Tensor2 matmul_trans_a(const Tensor2& a, const Tensor2& b);

/// a·bᵀ without materializing the transpose.
Tensor2 matmul_trans_b(const Tensor2& a, const Tensor2& b);

void accumulate_matmul_trans_a(Tensor2& dst, const Tensor2& a, const Tensor2& b);

/// dst += scale * src (shapes must match).
void add_scaled(Tensor2& dst, const Tensor2& src, double scale);

double dot(std::span<const double> a, std::span<const double> b);

double sigmoid(double x);

void init_glorot_uniform(Tensor2& t, Rng& rng);
void init_uniform(Tensor2& t, Rng& rng, double lo, double hi);

}  // namespace kgcdr

#endif
