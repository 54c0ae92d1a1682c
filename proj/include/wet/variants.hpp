#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "wet/error.hpp"
#include "wet/keygen.hpp"
#include "wet/linalg.hpp"
#include "wet/rng.hpp"

namespace wet {

// Alternative transformation-matrix constructions.
enum class VariantKind {
  kCirculantDefault,
  kNewWeightsCirculant,
  kRandom,
  kEqualWeightsCirculant,
  kSequentialPositionsCirculant,
  kSequentialEqualCirculant,
};

inline constexpr std::array<VariantKind, 6> kAllVariants = {
    VariantKind::kCirculantDefault,      VariantKind::kNewWeightsCirculant,
    VariantKind::kRandom,                VariantKind::kEqualWeightsCirculant,
    VariantKind::kSequentialPositionsCirculant, VariantKind::kSequentialEqualCirculant,
};

inline std::string_view to_string(VariantKind kind) {
  switch (kind) {
    case VariantKind::kCirculantDefault: return "circulant-default";
    case VariantKind::kNewWeightsCirculant: return "new-weights-circulant";
    case VariantKind::kRandom: return "random";
    case VariantKind::kEqualWeightsCirculant: return "equal-weights-circulant";
    case VariantKind::kSequentialPositionsCirculant: return "sequential-positions-circulant";
    case VariantKind::kSequentialEqualCirculant: return "sequential-equal-circulant";
  }
  throw InvalidInput("unknown variant kind");
}

inline VariantKind parse_variant(std::string_view name) {
  for (auto kind : kAllVariants) {
    if (to_string(kind) == name) return kind;
  }
  throw InvalidInput("unknown variant kind '" + std::string(name) + "'");
}

namespace detail {

template <UniformSource R>
std::vector<int> sample_positions(int n, int k, R& rng) {
  std::vector<int> pool(static_cast<std::size_t>(n));
  std::iota(pool.begin(), pool.end(), 0);
  for (int i = 0; i < k; ++i) {
    const auto j = i + static_cast<int>(rng.below(static_cast<std::uint64_t>(n - i)));
    std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(j)]);
  }
  pool.resize(static_cast<std::size_t>(k));
  return pool;
}

inline Vector constant_row(int n, const std::vector<int>& positions, double value) {
  Vector row = Vector::Zero(n);
  for (int p : positions) row[p] = value;
  return row;
}

template <UniformSource R>
Vector uniform_row(int n, const std::vector<int>& positions, R& rng) {
  Vector row = Vector::Zero(n);
  for (int p : positions) row[p] = static_cast<double>(rng.uniform01());
  return normalize(row);
}

inline std::vector<int> first_k(int k) {
  std::vector<int> v(static_cast<std::size_t>(k));
  std::iota(v.begin(), v.end(), 0);
  return v;
}

inline std::vector<int> support(const Vector& row) {
  std::vector<int> out;
  for (Eigen::Index j = 0; j < row.size(); ++j) {
    if (row[j] != 0.0) out.push_back(static_cast<int>(j));
  }
  return out;
}

inline bool is_roll_of(const Vector& row, const Vector& base, int shift) { return row == roll_right(base, shift); }

}  // namespace detail

/// Builds a w x n matrix of the requested kind.
///  - circulant-default: Matrix_Gen.
///  - new-weights: circulant support pattern, fresh U(0,1) weights on every row.
///  - random: every row a fresh Row_Gen draw (positions and values).
///  - equal-weights: circulant, nonzeros all 1/k (not renormalized).
///  - sequential-positions: circulant, nonzeros at 0..k-1 with U(0,1) values.
///  - sequential-equal: circulant, nonzeros at 0..k-1, all 1/k.
template <UniformSource R>
Matrix variant_matrix_gen(VariantKind kind, int n, int k, int w, R& rng) {
  if (n < 1 || w < 1) throw ParameterError("variant_matrix_gen: n and w must be >= 1");
  if (k < 1 || k > n) throw ParameterError("variant_matrix_gen: k must lie in [1, n]");
  const double equal = 1.0 / static_cast<double>(k);
  switch (kind) {
    case VariantKind::kCirculantDefault:
      return matrix_gen(n, k, w, rng);
    case VariantKind::kNewWeightsCirculant: {
      Matrix out(w, n);
      std::vector<int> positions;
      for (int i = 0; i < w; ++i) {
        const int shift = i % n;
        if (shift == 0) positions = detail::sample_positions(n, k, rng);
        std::vector<int> rolled;
        rolled.reserve(positions.size());
        for (int p : positions) rolled.push_back((p + shift) % n);
        out.row(i) = detail::uniform_row(n, rolled, rng).transpose();
      }
      return out;
    }
    case VariantKind::kRandom: {
      Matrix out(w, n);
      for (int i = 0; i < w; ++i) out.row(i) = row_gen(n, k, rng).transpose();
      return out;
    }
    case VariantKind::kEqualWeightsCirculant:
      return circulant_fill(n, w, [&] { return detail::constant_row(n, detail::sample_positions(n, k, rng), equal); });
    case VariantKind::kSequentialPositionsCirculant:
      return circulant_fill(n, w, [&] { return detail::uniform_row(n, detail::first_k(k), rng); });
    case VariantKind::kSequentialEqualCirculant:
      return circulant_fill(n, w, [&] { return detail::constant_row(n, detail::first_k(k), equal); });
  }
  throw InvalidInput("variant_matrix_gen: unknown variant kind");
}

// Gaussian noise level standing in for a surrogate's imitation error when
// comparing variants. At n = 1536 it puts the default construction's
// delta_cos near 91.5.
inline constexpr double kImitationNoise = 0.0046;

/// Variant keys skip keygen's screening; the pseudoinverse handles whatever
/// rank the construction produces.
inline WatermarkKey make_variant_key(VariantKind kind, int n, int k, int w, std::uint64_t seed) {
  Rng rng(seed);
  KeyParams params;
  params.n = n;
  params.k = k;
  params.w = w;
  params.seed = seed;
  params.max_condition = std::numeric_limits<double>::max();
  return WatermarkKey::from_matrix(params, variant_matrix_gen(kind, n, k, w, rng));
}

/// Structural predicate for each construction, checked block by block
/// (a block is the run of n rows sharing one generator).
inline bool check_variant_structure(VariantKind kind, const Matrix& m, int k) {
  const int w = static_cast<int>(m.rows());
  const int n = static_cast<int>(m.cols());
  const double equal = 1.0 / static_cast<double>(k);
  for (int i = 0; i < w; ++i) {
    const Vector row = m.row(i).transpose();
    const auto sup = detail::support(row);
    if (static_cast<int>(sup.size()) != k) return false;
    for (int p : sup) {
      if (!(row[p] > 0.0)) return false;
    }
    const int block_start = i - i % n;
    const int shift = i - block_start;
    const Vector base = m.row(block_start).transpose();
    const auto base_sup = detail::support(base);
    switch (kind) {
      case VariantKind::kCirculantDefault:
      case VariantKind::kSequentialPositionsCirculant:
        if (!detail::is_roll_of(row, base, shift)) return false;
        if (std::abs(row.norm() - 1.0) > 1e-12) return false;
        if (kind == VariantKind::kSequentialPositionsCirculant && shift == 0 && base_sup != detail::first_k(k)) {
          return false;
        }
        break;
      case VariantKind::kEqualWeightsCirculant:
      case VariantKind::kSequentialEqualCirculant:
        if (!detail::is_roll_of(row, base, shift)) return false;
        for (int p : sup) {
          if (row[p] != equal) return false;
        }
        if (kind == VariantKind::kSequentialEqualCirculant && shift == 0 && base_sup != detail::first_k(k)) {
          return false;
        }
        break;
      case VariantKind::kNewWeightsCirculant: {
        if (std::abs(row.norm() - 1.0) > 1e-12) return false;
        std::vector<int> rolled;
        for (int p : base_sup) rolled.push_back((p + shift) % n);
        std::sort(rolled.begin(), rolled.end());
        if (rolled != sup) return false;
        if (shift > 0 && detail::is_roll_of(row, base, shift)) return false;
        break;
      }
      case VariantKind::kRandom:
        if (std::abs(row.norm() - 1.0) > 1e-12) return false;
        break;
    }
  }
  return true;
}

// Hyperdimension obfuscation: w_extra synthetic coordinates, each a Row_Gen
// mixture of the originals, inserted at random positions of the combined
// (n + w_extra)-dim embedding.
struct ObfuscationLayout {
  int n = 0;
  int w_extra = 0;
  std::vector<int> positions;  // sorted, distinct, in [0, n + w_extra)
  int k = 1;

  int combined_dim() const noexcept { return n + w_extra; }

  void validate() const {
    if (n < 1) throw ParameterError("obfuscation layout: n must be >= 1");
    if (w_extra < 0) throw ParameterError("obfuscation layout: w_extra must be >= 0");
    if (static_cast<int>(positions.size()) != w_extra) {
      throw ParameterError("obfuscation layout: need exactly w_extra positions");
    }
    for (std::size_t i = 0; i < positions.size(); ++i) {
      if (positions[i] < 0 || positions[i] >= combined_dim()) {
        throw ParameterError("obfuscation layout: position out of range");
      }
      if (i > 0 && positions[i] <= positions[i - 1]) {
        throw ParameterError("obfuscation layout: positions must be sorted and distinct");
      }
    }
  }

  // Combined-space indices of the untouched original coordinates, in order.
  std::vector<int> original_positions() const {
    std::vector<int> out;
    out.reserve(static_cast<std::size_t>(n));
    std::size_t next = 0;
    for (int i = 0; i < combined_dim(); ++i) {
      if (next < positions.size() && positions[next] == i) {
        ++next;
      } else {
        out.push_back(i);
      }
    }
    return out;
  }
};

template <UniformSource R>
ObfuscationLayout make_layout(int n, int w_extra, int k, R& rng) {
  if (n < 1 || w_extra < 0) throw ParameterError("make_layout: n >= 1 and w_extra >= 0 required");
  if (k < 1 || k > n) throw ParameterError("make_layout: k must lie in [1, n]");
  ObfuscationLayout layout;
  layout.n = n;
  layout.w_extra = w_extra;
  layout.k = k;
  layout.positions = detail::sample_positions(n + w_extra, w_extra, rng);
  std::sort(layout.positions.begin(), layout.positions.end());
  return layout;
}

template <UniformSource R>
Matrix make_mixing(const ObfuscationLayout& layout, R& rng) {
  Matrix mixing(layout.w_extra, layout.n);
  for (int i = 0; i < layout.w_extra; ++i) mixing.row(i) = row_gen(layout.n, layout.k, rng).transpose();
  return mixing;
}

inline Vector obfuscate_hyperdims(const ObfuscationLayout& layout, const Matrix& mixing, const Vector& original) {
  layout.validate();
  if (original.size() != layout.n) {
    throw DimensionMismatch("obfuscate_hyperdims: embedding has dimension " + std::to_string(original.size()) +
                            ", layout expects " + std::to_string(layout.n));
  }
  if (mixing.rows() != layout.w_extra || mixing.cols() != layout.n) {
    throw DimensionMismatch("obfuscate_hyperdims: mixing matrix must be w_extra x n");
  }
  const Vector extra = mixing * original;
  Vector out(layout.combined_dim());
  std::size_t next_extra = 0;
  Eigen::Index next_orig = 0;
  for (int i = 0; i < layout.combined_dim(); ++i) {
    if (next_extra < layout.positions.size() && layout.positions[next_extra] == i) {
      out[i] = extra[static_cast<Eigen::Index>(next_extra++)];
    } else {
      out[i] = original[next_orig++];
    }
  }
  return out;
}

inline Vector remove_hyperdims(const ObfuscationLayout& layout, const Vector& combined) {
  layout.validate();
  if (combined.size() != layout.combined_dim()) {
    throw DimensionMismatch("remove_hyperdims: embedding has dimension " + std::to_string(combined.size()) +
                            ", layout expects " + std::to_string(layout.combined_dim()));
  }
  const auto keep = layout.original_positions();
  Vector out(layout.n);
  for (int i = 0; i < layout.n; ++i) out[i] = combined[keep[static_cast<std::size_t>(i)]];
  return out;
}

struct CorrelationFlag {
  int hyper_column = 0;     // combined-space index of the hyperdimension
  int original_column = 0;  // combined-space index of the original coordinate
  double r = 0.0;
};

struct PearsonResult {
  std::vector<CorrelationFlag> flags;
  // w_extra x n sample correlations; NaN where a column had zero variance.
  Matrix coefficients;
  std::vector<std::string> warnings;
};

inline constexpr double kPearsonThreshold = 0.4;

/// Sample Pearson correlation between every (hyperdimension, original
/// coordinate) column pair; pairs with |r| > threshold are flagged.
inline PearsonResult pearson_flags(const std::vector<Vector>& corpus, const ObfuscationLayout& layout,
                                   double threshold = kPearsonThreshold) {
  layout.validate();
  if (corpus.size() < 3) throw InvalidInput("pearson_flags: need at least 3 samples");
  const Eigen::Index dim = layout.combined_dim();
  Matrix data(static_cast<Eigen::Index>(corpus.size()), dim);
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    if (corpus[i].size() != dim) {
      throw DimensionMismatch("pearson_flags: sample " + std::to_string(i) + " has dimension " +
                              std::to_string(corpus[i].size()) + ", expected " + std::to_string(dim));
    }
    data.row(static_cast<Eigen::Index>(i)) = corpus[i].transpose();
  }
  const Eigen::RowVectorXd means = data.colwise().mean();
  const Matrix centered = data.rowwise() - means;
  const Vector norms = centered.colwise().norm().transpose();

  const auto originals = layout.original_positions();
  PearsonResult result;
  result.coefficients = Matrix::Constant(layout.w_extra, layout.n, std::numeric_limits<double>::quiet_NaN());
  auto zero_var = [&](int col) { return !(norms[col] > 1e-12 * std::sqrt(static_cast<double>(corpus.size()))); };
  for (int c = 0; c < dim; ++c) {
    if (zero_var(c)) result.warnings.push_back("column " + std::to_string(c) + " has zero variance; skipped");
  }
  for (int h = 0; h < layout.w_extra; ++h) {
    const int hc = layout.positions[static_cast<std::size_t>(h)];
    if (zero_var(hc)) continue;
    for (int o = 0; o < layout.n; ++o) {
      const int oc = originals[static_cast<std::size_t>(o)];
      if (zero_var(oc)) continue;
      const double r = std::clamp(centered.col(hc).dot(centered.col(oc)) / (norms[hc] * norms[oc]), -1.0, 1.0);
      result.coefficients(h, o) = r;
      if (std::abs(r) > threshold) result.flags.push_back({hc, oc, r});
    }
  }
  return result;
}

inline constexpr double kDefaultRidge = 1e-8;

/// Linear-regression weights used as feature importances: minimizes
/// sum (label - w . x)^2 + ridge * |w|^2 through the normal equations.
inline Vector least_squares_importance(const std::vector<Vector>& features, const std::vector<double>& labels,
                                       double ridge = kDefaultRidge) {
  if (features.empty()) throw InvalidInput("least_squares_importance: no samples");
  if (features.size() != labels.size()) throw DimensionMismatch("least_squares_importance: label count differs");
  if (!(ridge >= 0.0) || !std::isfinite(ridge)) throw ParameterError("least_squares_importance: ridge must be >= 0");
  const Eigen::Index d = features.front().size();
  if (d == 0) throw InvalidInput("least_squares_importance: empty feature vectors");
  Matrix x(static_cast<Eigen::Index>(features.size()), d);
  Vector y(static_cast<Eigen::Index>(labels.size()));
  for (std::size_t i = 0; i < features.size(); ++i) {
    if (features[i].size() != d) throw DimensionMismatch("least_squares_importance: ragged features");
    x.row(static_cast<Eigen::Index>(i)) = features[i].transpose();
    y[static_cast<Eigen::Index>(i)] = labels[i];
  }
  if (!all_finite(x) || !all_finite(y)) throw InvalidInput("least_squares_importance: non-finite input");
  Matrix gram = x.transpose() * x;
  if (ridge == 0.0) {
    if (x.rows() <= d || !std::isfinite(condition_number(gram))) {
      throw DegenerateInput("least_squares_importance: singular normal equations; enable ridge");
    }
  } else {
    gram.diagonal().array() += ridge;
  }
  return pseudoinverse(gram) * (x.transpose() * y);
}

}  // namespace wet
