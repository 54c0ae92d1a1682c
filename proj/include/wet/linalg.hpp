#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "wet/error.hpp"

namespace wet {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

namespace tolerance {
// Singular values below this fraction of the largest are treated as zero.
inline constexpr double kSingularCutoff = 1e-10;
// condition_number reports infinity below this ratio.
inline constexpr double kConditionCutoff = 1e-12;
inline constexpr double kIdentityResidual = 1e-8;
}  // namespace tolerance

inline bool all_finite(const Vector& v) { return v.allFinite(); }
inline bool all_finite(const Matrix& m) { return m.allFinite(); }

inline Vector to_vector(const std::vector<double>& values) {
  return Eigen::Map<const Vector>(values.data(), static_cast<Eigen::Index>(values.size()));
}

inline std::vector<double> to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

namespace detail {

inline bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

// In-place iterative radix-2 transform, forward sign convention.
inline void fft_radix2(std::vector<std::complex<double>>& a) {
  const std::size_t n = a.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const std::size_t half = len / 2;
    std::vector<std::complex<double>> twiddle(half);
    for (std::size_t m = 0; m < half; ++m) {
      const double angle = -2.0 * std::numbers::pi * static_cast<double>(m) / static_cast<double>(len);
      twiddle[m] = {std::cos(angle), std::sin(angle)};
    }
    for (std::size_t start = 0; start < n; start += len) {
      for (std::size_t m = 0; m < half; ++m) {
        const auto u = a[start + m];
        const auto v = a[start + m + half] * twiddle[m];
        a[start + m] = u + v;
        a[start + m + half] = u - v;
      }
    }
  }
}

// Direct transform with a shared twiddle table indexed by (j * m) mod n.
inline std::vector<std::complex<double>> dft_direct(const Vector& row) {
  const std::size_t n = static_cast<std::size_t>(row.size());
  std::vector<std::complex<double>> twiddle(n);
  for (std::size_t m = 0; m < n; ++m) {
    const double angle = -2.0 * std::numbers::pi * static_cast<double>(m) / static_cast<double>(n);
    twiddle[m] = {std::cos(angle), std::sin(angle)};
  }
  std::vector<std::complex<double>> out(n);
  for (std::size_t j = 0; j < n; ++j) {
    std::complex<double> acc{0.0, 0.0};
    std::size_t idx = 0;
    for (std::size_t m = 0; m < n; ++m) {
      acc += row[static_cast<Eigen::Index>(m)] * twiddle[idx];
      idx += j;
      if (idx >= n) idx -= n;
    }
    out[j] = acc;
  }
  return out;
}

}  // namespace detail

/// Magnitudes |F_j| of the discrete Fourier coefficients of `row`.
/// Power-of-two lengths use a radix-2 FFT; other lengths a direct O(n^2) sum.
inline Vector dft_magnitudes(const Vector& row) {
  if (row.size() == 0) throw InvalidInput("dft_magnitudes: empty vector");
  if (!all_finite(row)) throw InvalidInput("dft_magnitudes: non-finite input");
  const auto n = static_cast<std::size_t>(row.size());
  std::vector<std::complex<double>> coeffs;
  if (detail::is_power_of_two(n)) {
    coeffs.assign(row.data(), row.data() + n);
    detail::fft_radix2(coeffs);
  } else {
    coeffs = detail::dft_direct(row);
  }
  Vector out(static_cast<Eigen::Index>(n));
  for (std::size_t j = 0; j < n; ++j) out[static_cast<Eigen::Index>(j)] = std::abs(coeffs[j]);
  return out;
}

/// Thin SVD of a finite matrix. Singular values are sorted descending.
struct Svd {
  Matrix u;
  Vector singular_values;
  Matrix v;
};

inline Svd svd(const Matrix& m) {
  if (m.size() == 0) throw InvalidInput("svd: empty matrix");
  if (!all_finite(m)) throw InvalidInput("svd: non-finite matrix");
  Eigen::BDCSVD<Matrix> dec(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  return {dec.matrixU(), dec.singularValues(), dec.matrixV()};
}

inline Vector singular_values(const Matrix& m) {
  if (m.size() == 0) throw InvalidInput("singular_values: empty matrix");
  if (!all_finite(m)) throw InvalidInput("singular_values: non-finite matrix");
  Eigen::BDCSVD<Matrix> dec(m);
  return dec.singularValues();
}

inline Matrix pseudoinverse_from(const Svd& s) {
  const double largest = s.singular_values.size() > 0 ? s.singular_values[0] : 0.0;
  const double cutoff = tolerance::kSingularCutoff * largest;
  Vector inv = Vector::Zero(s.singular_values.size());
  for (Eigen::Index i = 0; i < s.singular_values.size(); ++i) {
    if (s.singular_values[i] > cutoff && s.singular_values[i] > 0.0) inv[i] = 1.0 / s.singular_values[i];
  }
  return s.v * inv.asDiagonal() * s.u.transpose();
}

inline double condition_from(const Vector& sv) {
  if (sv.size() == 0) return std::numeric_limits<double>::infinity();
  const double largest = sv.maxCoeff();
  const double smallest = sv.minCoeff();
  if (!(largest > 0.0) || smallest < tolerance::kConditionCutoff * largest) {
    return std::numeric_limits<double>::infinity();
  }
  return largest / smallest;
}

/// Moore-Penrose pseudoinverse (cols x rows) via SVD; singular values below
/// 1e-10 times the largest are dropped, so rank-deficient input is fine.
inline Matrix pseudoinverse(const Matrix& m) { return pseudoinverse_from(svd(m)); }

/// sigma_max / sigma_min, or +infinity when sigma_min < 1e-12 * sigma_max.
inline double condition_number(const Matrix& m) { return condition_from(singular_values(m)); }

inline double cosine(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) {
    throw DimensionMismatch("cosine: dimensions " + std::to_string(a.size()) + " and " +
                            std::to_string(b.size()) + " differ");
  }
  const double na = a.norm();
  const double nb = b.norm();
  if (!(na > 0.0) || !(nb > 0.0)) throw InvalidInput("cosine: zero-norm input");
  if (!std::isfinite(na) || !std::isfinite(nb)) throw InvalidInput("cosine: non-finite input");
  const double c = a.dot(b) / (na * nb);
  return std::clamp(c, -1.0, 1.0);
}

inline Vector normalize(const Vector& a) {
  const double na = a.norm();
  if (!std::isfinite(na)) throw InvalidInput("normalize: non-finite input");
  if (!(na > 0.0)) throw InvalidInput("normalize: zero vector");
  return a / na;
}

// Row i of the result is `row` cyclically shifted right by `shift`:
// the entry at index j lands on (j + shift) mod n.
inline Vector roll_right(const Vector& row, Eigen::Index shift = 1) {
  const Eigen::Index n = row.size();
  Vector out(n);
  if (n == 0) return out;
  shift %= n;
  if (shift < 0) shift += n;
  for (Eigen::Index j = 0; j < n; ++j) out[(j + shift) % n] = row[j];
  return out;
}

// Pairwise (cascade) summation; fixed order makes means reproducible.
inline double pairwise_sum(const double* data, std::size_t count) {
  if (count <= 8) {
    double s = 0.0;
    for (std::size_t i = 0; i < count; ++i) s += data[i];
    return s;
  }
  const std::size_t half = count / 2;
  return pairwise_sum(data, half) + pairwise_sum(data + half, count - half);
}

inline double mean(const std::vector<double>& xs) {
  if (xs.empty()) throw InvalidInput("mean: empty input");
  return pairwise_sum(xs.data(), xs.size()) / static_cast<double>(xs.size());
}

}  // namespace wet
