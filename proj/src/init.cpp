// SPDX-License-Identifier: Apache-2.0
#include "init.hpp"

#include <cmath>
#include <vector>

namespace ald {

namespace {

// Gram-Schmidt on gaussian rows: n x m with orthonormal rows (needs n <= m).
std::vector<double> orthonormal_rows(int64_t n, int64_t m, std::mt19937_64& rng) {
  std::normal_distribution<double> nd(0.0, 1.0);
  std::vector<double> a(static_cast<size_t>(n * m));
  for (auto& x : a) x = nd(rng);
  for (int64_t i = 0; i < n; ++i) {
    double* ri = a.data() + i * m;
    for (int64_t j = 0; j < i; ++j) {
      const double* rj = a.data() + j * m;
      double dot = 0;
      for (int64_t k = 0; k < m; ++k) dot += ri[k] * rj[k];
      for (int64_t k = 0; k < m; ++k) ri[k] -= dot * rj[k];
    }
    double norm = 0;
    for (int64_t k = 0; k < m; ++k) norm += ri[k] * ri[k];
    norm = std::sqrt(norm);
    if (norm < 1e-10) {
      // Degenerate draw; resample this row and redo it.
      for (int64_t k = 0; k < m; ++k) ri[k] = nd(rng);
      --i;
      continue;
    }
    for (int64_t k = 0; k < m; ++k) ri[k] /= norm;
  }
  return a;
}

}  // namespace

Tensor orthogonal_init(int64_t rows, int64_t cols, std::mt19937_64& rng, float gain) {
  bool flip = rows < cols;
  int64_t n = flip ? rows : cols;  // the orthonormal dimension
  int64_t m = flip ? cols : rows;
  std::vector<double> q = orthonormal_rows(n, m, rng);  // n x m, orthonormal rows
  Tensor out{Shape{rows, cols}};
  float* od = out.mutable_data();
  for (int64_t r = 0; r < rows; ++r)
    for (int64_t c = 0; c < cols; ++c) {
      double v = flip ? q[static_cast<size_t>(r * m + c)] : q[static_cast<size_t>(c * m + r)];
      od[r * cols + c] = gain * static_cast<float>(v);
    }
  return out;
}

Tensor fan_in_uniform(int64_t fan_in, const Shape& shape, std::mt19937_64& rng) {
  float bound = 1.0f / std::sqrt(static_cast<float>(fan_in));
  std::uniform_real_distribution<float> ud(-bound, bound);
  Tensor out(shape);
  float* od = out.mutable_data();
  for (int64_t i = 0; i < out.numel(); ++i) od[i] = ud(rng);
  return out;
}

Tensor normal_init(const Shape& shape, std::mt19937_64& rng, float stddev) {
  std::normal_distribution<float> nd(0.0f, stddev);
  Tensor out(shape);
  float* od = out.mutable_data();
  for (int64_t i = 0; i < out.numel(); ++i) od[i] = nd(rng);
  return out;
}

}  // namespace ald
