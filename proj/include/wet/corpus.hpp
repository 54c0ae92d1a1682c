#pragma once

#include <nlohmann/json.hpp>

#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "wet/codec.hpp"
#include "wet/error.hpp"
#include "wet/rng.hpp"

namespace wet {

// JSON Lines corpus: one {"id": "...", "embedding": [...]} object per line.
// Every record must share the first record's dimension.

inline EmbeddingRecord record_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw FormatError("embedding record must be a JSON object");
  const auto id = j.find("id");
  const auto emb = j.find("embedding");
  if (id == j.end() || !id->is_string()) throw FormatError("embedding record needs a string \"id\"");
  if (emb == j.end() || !emb->is_array()) {
    throw FormatError("record '" + id->get<std::string>() + "' needs an \"embedding\" array");
  }
  EmbeddingRecord r;
  r.id = id->get<std::string>();
  r.vector.resize(static_cast<Eigen::Index>(emb->size()));
  for (std::size_t i = 0; i < emb->size(); ++i) {
    const auto& v = (*emb)[i];
    if (!v.is_number()) throw FormatError("record '" + r.id + "' has a non-numeric embedding entry");
    r.vector[static_cast<Eigen::Index>(i)] = v.get<double>();
  }
  if (r.vector.size() == 0) throw FormatError("record '" + r.id + "' has an empty embedding");
  if (!all_finite(r.vector)) throw FormatError("record '" + r.id + "' has non-finite values");
  return r;
}

inline nlohmann::json record_to_json(const EmbeddingRecord& r) {
  return {{"id", r.id}, {"embedding", to_std(r.vector)}};
}

inline std::vector<EmbeddingRecord> records_from_json(const nlohmann::json& array) {
  if (!array.is_array()) throw FormatError("expected an array of embedding records");
  std::vector<EmbeddingRecord> out;
  out.reserve(array.size());
  for (const auto& item : array) {
    out.push_back(record_from_json(item));
    if (out.back().vector.size() != out.front().vector.size()) {
      throw DimensionMismatch("record '" + out.back().id + "' has dimension " +
                              std::to_string(out.back().vector.size()) + ", expected " +
                              std::to_string(out.front().vector.size()));
    }
  }
  return out;
}

inline std::vector<EmbeddingRecord> read_corpus(std::istream& in) {
  std::vector<EmbeddingRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error&) {
      throw FormatError("line " + std::to_string(line_no) + ": invalid JSON");
    }
    EmbeddingRecord r;
    try {
      r = record_from_json(j);
    } catch (const FormatError& e) {
      throw FormatError("line " + std::to_string(line_no) + ": " + e.what());
    }
    if (!out.empty() && r.vector.size() != out.front().vector.size()) {
      throw DimensionMismatch("line " + std::to_string(line_no) + ": record '" + r.id + "' has dimension " +
                              std::to_string(r.vector.size()) + ", expected " +
                              std::to_string(out.front().vector.size()));
    }
    out.push_back(std::move(r));
  }
  return out;
}

inline std::vector<EmbeddingRecord> read_corpus(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open corpus " + path);
  return read_corpus(in);
}

inline void write_corpus(std::ostream& out, const std::vector<EmbeddingRecord>& records) {
  for (const auto& r : records) out << record_to_json(r).dump() << '\n';
}

inline void write_corpus(const std::string& path, const std::vector<EmbeddingRecord>& records) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open " + path + " for writing");
  write_corpus(out, records);
  if (!out) throw Error("failed writing " + path);
}

/// Isotropic unit vectors: standard normal draws, normalized.
template <GaussianSource R>
Vector random_unit(int dim, R& rng) {
  Vector v(dim);
  for (int i = 0; i < dim; ++i) v[i] = rng.normal();
  return normalize(v);
}

inline std::vector<EmbeddingRecord> synthetic_corpus(int count, int dim, std::uint64_t seed,
                                                     const std::string& prefix = "s") {
  if (count < 0) throw ParameterError("synthetic_corpus: count must be >= 0");
  if (dim < 1) throw ParameterError("synthetic_corpus: dim must be >= 1");
  Rng rng(seed);
  std::vector<EmbeddingRecord> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) out.push_back({prefix + std::to_string(i), random_unit(dim, rng)});
  return out;
}

}  // namespace wet
