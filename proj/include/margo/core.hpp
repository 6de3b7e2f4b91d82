#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace margo {

using Vec = std::vector<double>;

// Thrown for malformed or inconsistent input files (CLI exit code 2).
struct DataError : std::runtime_error {
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

// Thrown for bad arguments / configs (CLI exit code 1).
struct UsageError : std::runtime_error {
  explicit UsageError(const std::string& what) : std::runtime_error(what) {}
};

// Thrown when training or checking produces non-finite values (CLI exit code 3).
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

// Centralized numeric constants.
namespace tol {
// Floor applied to probabilities inside logarithms; keeps the calibration
// loss finite when a softmax output underflows to zero.
inline constexpr double kLogClamp = 1e-300;
// Probability vectors must sum to one within this.
inline constexpr double kSimplexSum = 1e-9;
// Denominator floor for relative errors in gradient checks.
inline constexpr double kRelErrFloor = 1e-8;
}  // namespace tol

// Logit assigned to a negative rating difference: large enough (in magnitude)
// that its softmax mass underflows to ~1e-176 against any non-negative logit.
inline double g_negative_logit() { return -std::exp(6.0); }

// Dense row-major matrix of doubles. Deliberately minimal: the model is small
// and fixed, and hand-written loops keep the gradient code auditable.
struct Mat {
  int rows = 0;
  int cols = 0;
  std::vector<double> a;

  Mat() = default;
  Mat(int r, int c) : rows(r), cols(c), a(static_cast<size_t>(r) * c, 0.0) {}

  double& operator()(int r, int c) { return a[static_cast<size_t>(r) * cols + c]; }
  double operator()(int r, int c) const { return a[static_cast<size_t>(r) * cols + c]; }

  double* row(int r) { return a.data() + static_cast<size_t>(r) * cols; }
  const double* row(int r) const { return a.data() + static_cast<size_t>(r) * cols; }

  bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }
};

inline double dot(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw UsageError("dot: length mismatch");
  double s = 0.0;
  for (size_t j = 0; j < x.size(); ++j) s += x[j] * y[j];
  return s;
}

// softmax with max subtraction; writes a probability vector into out.
inline void stable_softmax(std::span<const double> logits, std::span<double> out) {
  double mx = logits[0];
  for (double v : logits) mx = std::max(mx, v);
  double sum = 0.0;
  for (size_t m = 0; m < logits.size(); ++m) {
    out[m] = std::exp(logits[m] - mx);
    sum += out[m];
  }
  for (size_t m = 0; m < logits.size(); ++m) out[m] /= sum;
}

// log(1 + exp(t)) without overflow for large |t|.
inline double softplus(double t) {
  return std::max(t, 0.0) + std::log1p(std::exp(-std::abs(t)));
}

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

inline bool all_finite(std::span<const double> x) {
  for (double v : x)
    if (!std::isfinite(v)) return false;
  return true;
}

// FNV-1a over raw bytes; used to fingerprint parameter blocks bit-exactly.
inline uint64_t fnv1a64(const void* data, size_t n, uint64_t h = 1469598103934665603ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

inline uint64_t fnv1a64(std::span<const double> x, uint64_t h = 1469598103934665603ull) {
  return fnv1a64(x.data(), x.size() * sizeof(double), h);
}

static_assert(std::endian::native == std::endian::little,
              "binary file formats are little-endian; big-endian hosts unsupported");

}  // namespace margo
