#pragma once

#include <string>
#include <vector>

#include "wet/error.hpp"
#include "wet/keygen.hpp"
#include "wet/linalg.hpp"

namespace wet {

struct EmbeddingRecord {
  std::string id;
  Vector vector;
};

/// e_p = Norm(T * e_o). The original coordinates are not carried over.
inline Vector inject(const WatermarkKey& key, const Vector& original) {
  if (original.size() != key.n()) {
    throw DimensionMismatch("inject: embedding has dimension " + std::to_string(original.size()) +
                            ", key expects " + std::to_string(key.n()));
  }
  if (!all_finite(original)) throw InvalidInput("inject: non-finite embedding");
  const double norm = original.norm();
  if (!(norm > 0.0)) throw InvalidInput("inject: zero-norm embedding");
  Vector transformed = key.matrix() * original;
  if (!(transformed.norm() > 1e-12 * norm)) throw DegenerateInput("inject: T * e vanishes for this embedding");
  return normalize(transformed);
}

/// e'_o = T+ * e'_p.
inline Vector recover(const WatermarkKey& key, const Vector& suspect) {
  if (suspect.size() != key.w()) {
    throw DimensionMismatch("recover: embedding has dimension " + std::to_string(suspect.size()) +
                            ", key expects " + std::to_string(key.w()));
  }
  if (!all_finite(suspect)) throw InvalidInput("recover: non-finite embedding");
  return key.pinv() * suspect;
}

// Fail-fast: a single bad record aborts the whole batch, so callers never see
// a mix of watermarked and raw embeddings.
inline std::vector<EmbeddingRecord> inject_batch(const WatermarkKey& key, const std::vector<EmbeddingRecord>& records) {
  std::vector<EmbeddingRecord> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    try {
      out.push_back({r.id, inject(key, r.vector)});
    } catch (const DimensionMismatch& e) {
      throw DimensionMismatch("record '" + r.id + "': " + e.what());
    } catch (const DegenerateInput& e) {
      throw DegenerateInput("record '" + r.id + "': " + e.what());
    } catch (const Error& e) {
      throw InvalidInput("record '" + r.id + "': " + e.what());
    }
  }
  return out;
}

inline std::vector<EmbeddingRecord> recover_batch(const WatermarkKey& key,
                                                  const std::vector<EmbeddingRecord>& records) {
  std::vector<EmbeddingRecord> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    try {
      out.push_back({r.id, recover(key, r.vector)});
    } catch (const DimensionMismatch& e) {
      throw DimensionMismatch("record '" + r.id + "': " + e.what());
    } catch (const Error& e) {
      throw InvalidInput("record '" + r.id + "': " + e.what());
    }
  }
  return out;
}

}  // namespace wet
