#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "sefa/errors.hpp"

namespace sefa {

inline std::string shape_str(const std::vector<int>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

inline std::int64_t checked_numel(const std::vector<int>& shape) {
  if (shape.empty()) {
    throw InvalidArgumentError("tensor shape must be nonempty");
  }
  std::int64_t n = 1;
  for (int d : shape) {
    if (d < 1) {
      throw InvalidArgumentError("tensor dimension must be >= 1, got shape " +
                                 shape_str(shape));
    }
    n *= d;
  }
  return n;
}

// Dense row-major tensor of 64-bit floats. All shapes in this project are
// small (MLP weight matrices and batches of action/observation vectors), so
// storage is a single flat std::vector<double>.
struct TensorBuffer {
  std::vector<int> shape;
  std::vector<double> data;

  TensorBuffer() = default;

  explicit TensorBuffer(std::vector<int> s)
      : shape(std::move(s)),
        data(static_cast<std::size_t>(checked_numel(shape)), 0.0) {}

  TensorBuffer(std::vector<int> s, std::vector<double> d)
      : shape(std::move(s)), data(std::move(d)) {
    if (checked_numel(shape) != static_cast<std::int64_t>(data.size())) {
      throw InvalidArgumentError("tensor shape " + shape_str(shape) +
                                 " does not match data length " +
                                 std::to_string(data.size()));
    }
  }

  std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }

  bool is_scalar() const { return data.size() == 1; }

  // 2-d accessors; shape checks are the caller's job in hot loops.
  int rows() const { return shape[0]; }
  int cols() const { return shape.size() > 1 ? shape[1] : 1; }

  double& at(int i, int j) { return data[static_cast<std::size_t>(i) * cols() + j]; }
  double at(int i, int j) const { return data[static_cast<std::size_t>(i) * cols() + j]; }

  bool all_finite() const {
    for (double v : data) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }
};

inline bool same_shape(const TensorBuffer& a, const TensorBuffer& b) {
  return a.shape == b.shape;
}

// C[n,m] = A[n,k] * B[k,m], overwriting C. ikj order keeps both inner
// streams contiguous so the compiler can vectorize.
inline void mm(double* c, const double* a, const double* b, int n, int k, int m) {
  std::fill(c, c + static_cast<std::size_t>(n) * m, 0.0);
  for (int i = 0; i < n; ++i) {
    const double* arow = a + static_cast<std::size_t>(i) * k;
    double* crow = c + static_cast<std::size_t>(i) * m;
    for (int kk = 0; kk < k; ++kk) {
      const double av = arow[kk];
      const double* brow = b + static_cast<std::size_t>(kk) * m;
      for (int j = 0; j < m; ++j) {
        crow[j] += av * brow[j];
      }
    }
  }
}

// C[n,k] += A[n,m] * B^T where B is [k,m].
inline void mm_acc_abt(double* c, const double* a, const double* b, int n, int m, int k) {
  for (int i = 0; i < n; ++i) {
    const double* arow = a + static_cast<std::size_t>(i) * m;
    double* crow = c + static_cast<std::size_t>(i) * k;
    for (int kk = 0; kk < k; ++kk) {
      const double* brow = b + static_cast<std::size_t>(kk) * m;
      double acc = 0.0;
      for (int j = 0; j < m; ++j) {
        acc += arow[j] * brow[j];
      }
      crow[kk] += acc;
    }
  }
}

// C[k,m] += A^T * B where A is [n,k] and B is [n,m].
inline void mm_acc_atb(double* c, const double* a, const double* b, int n, int k, int m) {
  for (int i = 0; i < n; ++i) {
    const double* arow = a + static_cast<std::size_t>(i) * k;
    const double* brow = b + static_cast<std::size_t>(i) * m;
    for (int kk = 0; kk < k; ++kk) {
      const double av = arow[kk];
      double* crow = c + static_cast<std::size_t>(kk) * m;
      for (int j = 0; j < m; ++j) {
        crow[j] += av * brow[j];
      }
    }
  }
}

inline double squared_l2(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

inline double l2_distance(const std::vector<double>& a, const std::vector<double>& b) {
  return std::sqrt(squared_l2(a, b));
}

}  // namespace sefa
