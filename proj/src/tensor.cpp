#include "tensor.hpp"

#include <cmath>

namespace kgcdr {

bool Tensor2::all_finite() const {
  for (double v : data) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

namespace {

void require_shape(bool ok, const char* what) {
  if (!ok) fail(ErrorCategory::shape, what);
}

}  // namespace

Tensor2 matmul(const Tensor2& a, const Tensor2& b) {
  require_shape(a.cols == b.rows, "matmul: inner dimensions differ");
  Tensor2 out(a.rows, b.cols);
  for (size_t i = 0; i < a.rows; ++i) {
    const double* arow = a.data.data() + i * a.cols;
    double* orow = out.data.data() + i * out.cols;
    for (size_t k = 0; k < a.cols; ++k) {
      const double aik = arow[k];
      if (aik == 0.0) continue;
      const double* brow = b.data.data() + k * b.cols;
      for (size_t j = 0; j < b.cols; ++j) orow[j] += aik * brow[j];
    }
  }
  return out;
}

Tensor2 matmul_trans_a(const Tensor2& a, const Tensor2& b) {
  require_shape(a.rows == b.rows, "matmul_trans_a: row counts differ");
  Tensor2 out(a.cols, b.cols);
  accumulate_matmul_trans_a(out, a, b);
  return out;
}

void accumulate_matmul_trans_a(Tensor2& dst, const Tensor2& a, const Tensor2& b) {
  require_shape(a.rows == b.rows && dst.rows == a.cols && dst.cols == b.cols,
                "accumulate_matmul_trans_a: shape mismatch");
  for (size_t k = 0; k < a.rows; ++k) {
    const double* arow = a.data.data() + k * a.cols;
    const double* brow = b.data.data() + k * b.cols;
    for (size_t i = 0; i < a.cols; ++i) {
      const double aki = arow[i];
      if (aki == 0.0) continue;
      double* drow = dst.data.data() + i * dst.cols;
      for (size_t j = 0; j < b.cols; ++j) drow[j] += aki * brow[j];
    }
  }
}

Tensor2 matmul_trans_b(const Tensor2& a, const Tensor2& b) {
  require_shape(a.cols == b.cols, "matmul_trans_b: column counts differ");
  Tensor2 out(a.rows, b.rows);
  for (size_t i = 0; i < a.rows; ++i) {
    const double* arow = a.data.data() + i * a.cols;
    double* orow = out.data.data() + i * out.cols;
    for (size_t j = 0; j < b.rows; ++j) {
      const double* brow = b.data.data() + j * b.cols;
      double acc = 0.0;
      for (size_t k = 0; k < a.cols; ++k) acc += arow[k] * brow[k];
      orow[j] = acc;
    }
  }
  return out;
}

void add_scaled(Tensor2& dst, const Tensor2& src, double scale) {
  require_shape(dst.same_shape(src), "add_scaled: shape mismatch");
  for (size_t i = 0; i < dst.data.size(); ++i) dst.data[i] += scale * src.data[i];
}

double dot(std::span<const double> a, std::span<const double> b) {
  require_shape(a.size() == b.size(), "dot: length mismatch");
  double acc = 0.0;
  for (size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

double sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  double e = std::exp(x);
  return e / (1.0 + e);
}

void init_glorot_uniform(Tensor2& t, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(t.rows + t.cols));
  for (double& v : t.data) v = rng.uniform(-bound, bound);
}

void init_uniform(Tensor2& t, Rng& rng, double lo, double hi) {
  for (double& v : t.data) v = rng.uniform(lo, hi);
}

}  // namespace kgcdr
