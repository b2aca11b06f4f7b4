#include "cdnet/spectral_norm.hpp"

#include <cmath>
#include <random>

#include <fmt/format.h>

namespace cdnet {

namespace {

double normalize(std::vector<double>& x) {
  double norm = 0.0;
  for (double v : x) norm += v * v;
  norm = std::sqrt(norm);
  if (norm > 0.0) {
    for (double& v : x) v /= norm;
  }
  return norm;
}

struct MatrixView {
  const float* data;
  std::size_t rows;
  std::size_t cols;
};

MatrixView as_matrix(const Tensor& w) {
  const Shape& s = w.shape();
  return {w.data(), s.n, s.c * s.h * s.w};
}

void check_vectors(const MatrixView& m, PowerVectors& vectors) {
  if (vectors.u.empty() && vectors.v.empty()) {
    vectors = PowerVectors::random(m.rows, m.cols, 0x5eed);
  }
  if (vectors.u.size() != m.rows || vectors.v.size() != m.cols) {
    throw ShapeError(fmt::format("spectral norm: vectors ({}, {}) do not fit a {}x{} matrix",
                                 vectors.u.size(), vectors.v.size(), m.rows, m.cols));
  }
}

// One (v, u) update; returns sigma = u^T W v, or 0 for a null matrix.
double power_iteration(const MatrixView& m, PowerVectors& vectors, int iterations) {
  std::vector<double> u(vectors.u.begin(), vectors.u.end());
  std::vector<double> v(m.cols);
  std::vector<double> wv(m.rows);
  double sigma = 0.0;
  for (int it = 0; it < iterations; ++it) {
    std::fill(v.begin(), v.end(), 0.0);
    for (std::size_t r = 0; r < m.rows; ++r) {
      const float* row = m.data + r * m.cols;
      for (std::size_t c = 0; c < m.cols; ++c) v[c] += row[c] * u[r];
    }
    if (normalize(v) == 0.0) return 0.0;
    for (std::size_t r = 0; r < m.rows; ++r) {
      const float* row = m.data + r * m.cols;
      double s = 0.0;
      for (std::size_t c = 0; c < m.cols; ++c) s += row[c] * v[c];
      wv[r] = s;
    }
    u = wv;
    if (normalize(u) == 0.0) return 0.0;
    sigma = 0.0;
    for (std::size_t r = 0; r < m.rows; ++r) sigma += u[r] * wv[r];
  }
  for (std::size_t r = 0; r < m.rows; ++r) vectors.u[r] = static_cast<float>(u[r]);
  for (std::size_t c = 0; c < m.cols; ++c) vectors.v[c] = static_cast<float>(v[c]);
  return sigma;
}

}  // namespace

PowerVectors PowerVectors::random(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, 1.0);
  std::vector<double> u(rows);
  std::vector<double> v(cols);
  for (double& x : u) x = dist(rng);
  for (double& x : v) x = dist(rng);
  normalize(u);
  normalize(v);
  return {std::vector<float>(u.begin(), u.end()), std::vector<float>(v.begin(), v.end())};
}

SpectralNormResult spectral_normalize(const Tensor& weight, PowerVectors& vectors,
                                      int iterations) {
  const MatrixView m = as_matrix(weight);
  check_vectors(m, vectors);
  const double sigma = power_iteration(m, vectors, std::max(iterations, 1));
  if (sigma <= 0.0) return {weight, 0.0};
  Tensor out(weight.shape());
  for (std::size_t i = 0; i < weight.numel(); ++i) {
    out[i] = static_cast<float>(weight[i] / sigma);
  }
  return {std::move(out), sigma};
}

Tensor spectral_norm_backward(const Tensor& grad_normalized, const Tensor& normalized,
                              const PowerVectors& vectors, double sigma) {
  require_same_shape(grad_normalized, normalized, "spectral_norm_backward");
  if (sigma <= 0.0) return grad_normalized;
  const MatrixView m = as_matrix(normalized);
  double inner = 0.0;
  for (std::size_t i = 0; i < normalized.numel(); ++i) {
    inner += static_cast<double>(grad_normalized[i]) * normalized[i];
  }
  Tensor out(normalized.shape());
  for (std::size_t r = 0; r < m.rows; ++r) {
    for (std::size_t c = 0; c < m.cols; ++c) {
      const std::size_t i = r * m.cols + c;
      out[i] = static_cast<float>(
          (grad_normalized[i] - inner * vectors.u[r] * vectors.v[c]) / sigma);
    }
  }
  return out;
}

double estimate_top_singular_value(const Tensor& weight, PowerVectors vectors, int iterations) {
  const MatrixView m = as_matrix(weight);
  check_vectors(m, vectors);
  return power_iteration(m, vectors, iterations);
}

}  // namespace cdnet
