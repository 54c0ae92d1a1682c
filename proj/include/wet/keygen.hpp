#pragma once

#include <nlohmann/json.hpp>

#include <chrono>
#include <cstdint>
#include <ctime>
#include <fstream>
#include <limits>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "wet/error.hpp"
#include "wet/linalg.hpp"
#include "wet/rng.hpp"

namespace wet {

inline constexpr int kKeyFileVersion = 1;
inline constexpr double kDefaultMaxCondition = 1e6;
inline constexpr int kDefaultMaxAttempts = 16;
inline constexpr double kFullRankEpsilon = 1e-9;

struct KeyParams {
  int n = 0;  // original embedding dimension
  int k = 0;  // nonzero correlations per generating row
  int w = 0;  // watermarked dimension
  std::uint64_t seed = 0;
  double max_condition = kDefaultMaxCondition;
  int max_attempts = kDefaultMaxAttempts;

  void validate() const {
    if (n < 1) throw ParameterError("key params: n must be >= 1");
    if (k < 1 || k > n) throw ParameterError("key params: k must lie in [1, n]");
    if (w < 1) throw ParameterError("key params: w must be >= 1");
    if (!(max_condition > 1.0)) throw ParameterError("key params: max_condition must exceed 1");
    if (max_attempts < 1) throw ParameterError("key params: max_attempts must be >= 1");
  }
};

inline std::string now_rfc3339() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// The secret transformation T (w x n) and its cached pseudoinverse.
/// Immutable once built; share it read-only between threads.
class WatermarkKey {
 public:
  static WatermarkKey from_matrix(KeyParams params, Matrix matrix, std::string rng_id = std::string(Rng::kId),
                                  std::string created_at = now_rfc3339()) {
    if (matrix.rows() != params.w || matrix.cols() != params.n) {
      throw ParameterError("key matrix is " + std::to_string(matrix.rows()) + "x" +
                           std::to_string(matrix.cols()) + ", expected " + std::to_string(params.w) + "x" +
                           std::to_string(params.n));
    }
    if (!all_finite(matrix)) throw InvalidInput("key matrix has non-finite entries");
    const Svd s = svd(matrix);
    WatermarkKey key;
    key.params_ = params;
    key.pinv_ = pseudoinverse_from(s);
    key.condition_ = condition_from(s.singular_values);
    key.matrix_ = std::move(matrix);
    key.rng_id_ = std::move(rng_id);
    key.created_at_ = std::move(created_at);
    return key;
  }

  const KeyParams& params() const noexcept { return params_; }
  int n() const noexcept { return params_.n; }
  int k() const noexcept { return params_.k; }
  int w() const noexcept { return params_.w; }
  const Matrix& matrix() const noexcept { return matrix_; }
  const Matrix& pinv() const noexcept { return pinv_; }
  double condition() const noexcept { return condition_; }
  const std::string& rng_id() const noexcept { return rng_id_; }
  const std::string& created_at() const noexcept { return created_at_; }

 private:
  WatermarkKey() = default;

  KeyParams params_;
  Matrix matrix_;
  Matrix pinv_;
  double condition_ = std::numeric_limits<double>::infinity();
  std::string rng_id_;
  std::string created_at_;
};

/// Row_Gen: k distinct positions sampled uniformly without replacement,
/// each set to a U(0,1) draw, then the row is scaled to unit norm.
template <UniformSource R>
Vector row_gen(int n, int k, R& rng) {
  if (n < 1) throw ParameterError("row_gen: n must be >= 1");
  if (k < 1 || k > n) throw ParameterError("row_gen: k must lie in [1, n]");
  std::vector<int> pool(static_cast<std::size_t>(n));
  std::iota(pool.begin(), pool.end(), 0);
  // Partial Fisher-Yates: the first k slots end up a uniform k-subset.
  for (int i = 0; i < k; ++i) {
    const auto j = i + static_cast<int>(rng.below(static_cast<std::uint64_t>(n - i)));
    std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(j)]);
  }
  Vector row = Vector::Zero(n);
  for (int i = 0; i < k; ++i) row[pool[static_cast<std::size_t>(i)]] = static_cast<double>(rng.uniform01());
  return normalize(row);
}

/// Circular fill shared by Matrix_Gen and its variants: each row is the
/// previous one rolled right by one; after n rolls `next_row()` supplies a
/// fresh generator and the counter resets.
template <class RowFactory>
Matrix circulant_fill(int n, int w, RowFactory&& next_row) {
  Matrix out(w, n);
  Vector row = next_row();
  int count = 0;
  for (int i = 0; i < w; ++i) {
    out.row(i) = row.transpose();
    row = roll_right(row);
    if (++count == n) {
      row = next_row();
      count = 0;
    }
  }
  return out;
}

template <UniformSource R>
Matrix matrix_gen(int n, int k, int w, R& rng) {
  if (w < 1) throw ParameterError("matrix_gen: w must be >= 1");
  if (k < 1 || k > n) throw ParameterError("matrix_gen: k must lie in [1, n]");
  return circulant_fill(n, w, [&] { return row_gen(n, k, rng); });
}

/// True iff every DFT magnitude of the generating row exceeds epsilon, i.e.
/// the n x n circulant built from it is nonsingular.
inline bool full_rank_check(const Vector& generating_row, double epsilon = kFullRankEpsilon) {
  if (generating_row.size() == 0) throw InvalidInput("full_rank_check: empty row");
  return (dft_magnitudes(generating_row).array() > epsilon).all();
}

/// Draws candidates from `rng` until one passes screening. For square keys
/// the generating row must pass full_rank_check; every candidate must have
/// condition number <= max_condition.
template <UniformSource R>
WatermarkKey generate_key(const KeyParams& params, R& rng) {
  params.validate();
  double best = std::numeric_limits<double>::infinity();
  for (int attempt = 0; attempt < params.max_attempts; ++attempt) {
    Matrix candidate = matrix_gen(params.n, params.k, params.w, rng);
    if (params.w == params.n && !full_rank_check(candidate.row(0).transpose())) continue;
    auto key = WatermarkKey::from_matrix(params, std::move(candidate));
    best = std::min(best, key.condition());
    if (key.condition() <= params.max_condition) return key;
  }
  throw GenerationFailure("key generation failed after " + std::to_string(params.max_attempts) +
                              " attempts; best condition number " + std::to_string(best),
                          best);
}

inline WatermarkKey generate_key(const KeyParams& params) {
  Rng rng(params.seed);
  return generate_key(params, rng);
}

// Key file: the serialized matrix is authoritative; seed and rng_id are provenance.
inline nlohmann::json key_to_json(const WatermarkKey& key) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < key.matrix().rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < key.matrix().cols(); ++j) row.push_back(key.matrix()(i, j));
    rows.push_back(std::move(row));
  }
  return {{"version", kKeyFileVersion},
          {"n", key.n()},
          {"k", key.k()},
          {"w", key.w()},
          {"seed", key.params().seed},
          {"rng_id", key.rng_id()},
          {"roll", "right"},
          {"matrix", std::move(rows)},
          {"condition", std::isfinite(key.condition()) ? nlohmann::json(key.condition()) : nlohmann::json(nullptr)},
          {"created_at", key.created_at()}};
}

inline WatermarkKey key_from_json(const nlohmann::json& j) {
  try {
    if (j.at("version").get<int>() != kKeyFileVersion) throw FormatError("unsupported key file version");
    if (j.at("roll").get<std::string>() != "right") throw FormatError("unsupported roll direction");
    KeyParams params;
    params.n = j.at("n").get<int>();
    params.k = j.at("k").get<int>();
    params.w = j.at("w").get<int>();
    params.seed = j.at("seed").get<std::uint64_t>();
    params.validate();
    const auto& rows = j.at("matrix");
    if (!rows.is_array() || rows.size() != static_cast<std::size_t>(params.w)) {
      throw FormatError("key matrix row count does not match w");
    }
    Matrix m(params.w, params.n);
    for (int i = 0; i < params.w; ++i) {
      const auto& row = rows[static_cast<std::size_t>(i)];
      if (!row.is_array() || row.size() != static_cast<std::size_t>(params.n)) {
        throw FormatError("key matrix row " + std::to_string(i) + " does not have n entries");
      }
      for (int c = 0; c < params.n; ++c) m(i, c) = row[static_cast<std::size_t>(c)].get<double>();
    }
    return WatermarkKey::from_matrix(params, std::move(m), j.at("rng_id").get<std::string>(),
                                     j.at("created_at").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed key file: ") + e.what());
  }
}

inline void save_key(const WatermarkKey& key, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open " + path + " for writing");
  out << key_to_json(key).dump() << '\n';
  if (!out) throw Error("failed writing " + path);
}

inline WatermarkKey load_key(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open key file " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("key file " + path + " is not valid JSON");
  }
  return key_from_json(j);
}

}  // namespace wet
