#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace macflow::linalg {

// In-place lower Cholesky of a row-major symmetric matrix (upper triangle
// ignored). Returns false on a non-positive pivot.
inline bool cholesky_factor(std::span<double> a, std::size_t n) {
  for (std::size_t j = 0; j < n; ++j) {
    double d = a[j * n + j];
    for (std::size_t k = 0; k < j; ++k) d -= a[j * n + k] * a[j * n + k];
    if (!(d > 0.0) || !std::isfinite(d)) return false;
    const double L = std::sqrt(d);
    a[j * n + j] = L;
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a[i * n + j];
      for (std::size_t k = 0; k < j; ++k) s -= a[i * n + k] * a[j * n + k];
      a[i * n + j] = s / L;
    }
  }
  return true;
}

inline void cholesky_solve(std::span<const double> L, std::size_t n, std::span<double> rhs) {
  for (std::size_t i = 0; i < n; ++i) {
    double s = rhs[i];
    for (std::size_t k = 0; k < i; ++k) s -= L[i * n + k] * rhs[k];
    rhs[i] = s / L[i * n + i];
  }
  for (std::size_t i = n; i-- > 0;) {
    double s = rhs[i];
    for (std::size_t k = i + 1; k < n; ++k) s -= L[k * n + i] * rhs[k];
    rhs[i] = s / L[i * n + i];
  }
}

// Symmetric positive definite band matrix, lower band storage by column.
class BandMatrix {
 public:
  BandMatrix() = default;
  BandMatrix(std::size_t n, std::size_t bandwidth)
      : n_(n), bw_(bandwidth), data_(n * (bandwidth + 1), 0.0) {}

  std::size_t size() const { return n_; }
  std::size_t bandwidth() const { return bw_; }

  // i >= j and i - j <= bandwidth
  double& at(std::size_t i, std::size_t j) { return data_[j * (bw_ + 1) + (i - j)]; }
  double at(std::size_t i, std::size_t j) const { return data_[j * (bw_ + 1) + (i - j)]; }

  void add(std::size_t i, std::size_t j, double v) {
    if (i < j) std::swap(i, j);
    at(i, j) += v;
  }

  void zero() { std::fill(data_.begin(), data_.end(), 0.0); }

  bool cholesky() {
    for (std::size_t j = 0; j < n_; ++j) {
      const std::size_t k0 = bw_ >= j ? 0 : j - bw_;
      double d = at(j, j);
      for (std::size_t k = k0; k < j; ++k) d -= at(j, k) * at(j, k);
      if (!(d > 0.0) || !std::isfinite(d)) return false;
      const double L = std::sqrt(d);
      at(j, j) = L;
      const std::size_t imax = std::min(n_ - 1, j + bw_);
      for (std::size_t i = j + 1; i <= imax; ++i) {
        const std::size_t ki = bw_ >= i ? 0 : i - bw_;
        const std::size_t klo = ki > k0 ? ki : k0;
        double s = at(i, j);
        for (std::size_t k = klo; k < j; ++k) s -= at(i, k) * at(j, k);
        at(i, j) = s / L;
      }
    }
    return true;
  }

  // Solves L L^T x = rhs in place, after cholesky().
  void solve(std::span<double> rhs) const {
    for (std::size_t i = 0; i < n_; ++i) {
      const std::size_t k0 = bw_ >= i ? 0 : i - bw_;
      double s = rhs[i];
      for (std::size_t k = k0; k < i; ++k) s -= at(i, k) * rhs[k];
      rhs[i] = s / at(i, i);
    }
    for (std::size_t i = n_; i-- > 0;) {
      const std::size_t kmax = std::min(n_ - 1, i + bw_);
      double s = rhs[i];
      for (std::size_t k = i + 1; k <= kmax; ++k) s -= at(k, i) * rhs[k];
      rhs[i] = s / at(i, i);
    }
  }

 private:
  std::size_t n_ = 0;
  std::size_t bw_ = 0;
  std::vector<double> data_;
};

// Symmetric indefinite band matrix factored as L D L^T without pivoting.
// Intended for quasi-definite systems (positive definite leading block,
// negative definite trailing regularization), where the unpivoted
// factorization is well defined for any symmetric ordering.
class BandLdlt {
 public:
  BandLdlt() = default;
  BandLdlt(std::size_t n, std::size_t bandwidth)
      : n_(n), bw_(bandwidth), data_(n * (bandwidth + 1), 0.0) {}

  std::size_t size() const { return n_; }
  std::size_t bandwidth() const { return bw_; }

  double& at(std::size_t i, std::size_t j) { return data_[j * (bw_ + 1) + (i - j)]; }
  double at(std::size_t i, std::size_t j) const { return data_[j * (bw_ + 1) + (i - j)]; }

  void add(std::size_t i, std::size_t j, double v) {
    if (i < j) std::swap(i, j);
    at(i, j) += v;
  }

  void zero() { std::fill(data_.begin(), data_.end(), 0.0); }

  // y = M x for the symmetric matrix in its unfactored state.
  void multiply(std::span<const double> x, std::span<double> y) const {
    std::fill(y.begin(), y.end(), 0.0);
    for (std::size_t j = 0; j < n_; ++j) {
      const std::size_t imax = std::min(n_ - 1, j + bw_);
      y[j] += at(j, j) * x[j];
      for (std::size_t i = j + 1; i <= imax; ++i) {
        const double v = at(i, j);
        y[i] += v * x[j];
        y[j] += v * x[i];
      }
    }
  }

  // In-place LDL^T; expected_sign holds +1/-1 per index (mixed orderings
  // interleave primal and dual pivots). Returns the number of pivots whose
  // sign disagrees, or -1 on a vanishing pivot.
  long factor(std::span<const int> expected_sign) {
    long mismatches = 0;
    for (std::size_t j = 0; j < n_; ++j) {
      const std::size_t k0 = bw_ >= j ? 0 : j - bw_;
      double d = at(j, j);
      for (std::size_t k = k0; k < j; ++k) {
        const double l = at(j, k);
        d -= l * l * at(k, k);
      }
      if (d == 0.0 || !std::isfinite(d)) return -1;
      if ((expected_sign[j] > 0 && d <= 0.0) || (expected_sign[j] < 0 && d >= 0.0)) {
        ++mismatches;
      }
      at(j, j) = d;
      const std::size_t imax = std::min(n_ - 1, j + bw_);
      for (std::size_t i = j + 1; i <= imax; ++i) {
        const std::size_t ki = bw_ >= i ? 0 : i - bw_;
        const std::size_t klo = ki > k0 ? ki : k0;
        double s = at(i, j);
        for (std::size_t k = klo; k < j; ++k) s -= at(i, k) * at(k, k) * at(j, k);
        at(i, j) = s / d;
      }
    }
    return mismatches;
  }

  void solve(std::span<double> rhs) const {
    for (std::size_t i = 0; i < n_; ++i) {
      const std::size_t k0 = bw_ >= i ? 0 : i - bw_;
      double s = rhs[i];
      for (std::size_t k = k0; k < i; ++k) s -= at(i, k) * rhs[k];
      rhs[i] = s;
    }
    for (std::size_t i = 0; i < n_; ++i) rhs[i] /= at(i, i);
    for (std::size_t i = n_; i-- > 0;) {
      const std::size_t kmax = std::min(n_ - 1, i + bw_);
      double s = rhs[i];
      for (std::size_t k = i + 1; k <= kmax; ++k) s -= at(k, i) * rhs[k];
      rhs[i] = s;
    }
  }

 private:
  std::size_t n_ = 0;
  std::size_t bw_ = 0;
  std::vector<double> data_;
};

}  // namespace macflow::linalg
