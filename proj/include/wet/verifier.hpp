#pragma once

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "wet/codec.hpp"
#include "wet/error.hpp"
#include "wet/linalg.hpp"

namespace wet {

inline constexpr double kDefaultThreshold = 10.0;  // percentage points of delta_cos

struct Pair {
  Vector recovered;
  Vector original;
};

struct PairSet {
  std::vector<Pair> pairs;
  std::vector<std::string> ids;  // optional, parallel to pairs

  bool empty() const noexcept { return pairs.empty(); }
  std::size_t size() const noexcept { return pairs.size(); }
};

enum class Decision { kWatermarked, kNotWatermarked };

inline std::string to_string(Decision d) {
  return d == Decision::kWatermarked ? "watermarked" : "not-watermarked";
}

struct VerificationReport {
  double delta_cos = 0.0;  // percent
  double auc = 0.0;
  std::vector<double> cos_w;
  std::vector<double> cos_c;
  std::vector<std::string> ids_w;
  std::vector<std::string> ids_c;
  double threshold = kDefaultThreshold;
  Decision decision = Decision::kNotWatermarked;

  std::size_t n_w() const noexcept { return cos_w.size(); }
  std::size_t n_c() const noexcept { return cos_c.size(); }
};

inline std::vector<double> pair_cosines(const PairSet& set) {
  std::vector<double> out;
  out.reserve(set.size());
  for (const auto& p : set.pairs) out.push_back(cosine(p.recovered, p.original));
  return out;
}

/// Mean per-pair cosine; pairwise summation keeps the result order-stable.
inline double avg_cos(const PairSet& set) {
  if (set.empty()) throw InvalidInput("avg_cos: empty pair set");
  return mean(pair_cosines(set));
}

/// cos_avg(S_w) - cos_avg(S_c), in percent.
inline double delta_cos(const PairSet& s_w, const PairSet& s_c) {
  if (s_w.empty() || s_c.empty()) throw InvalidInput("delta_cos: empty pair set");
  return 100.0 * (avg_cos(s_w) - avg_cos(s_c));
}

inline double delta_cos_from_scores(const std::vector<double>& cos_w, const std::vector<double>& cos_c) {
  if (cos_w.empty() || cos_c.empty()) throw InvalidInput("delta_cos: empty score list");
  return 100.0 * (mean(cos_w) - mean(cos_c));
}

/// Mann-Whitney AUC: P(w > c) + 0.5 P(w == c) over all |W| x |C| pairs,
/// computed in O((|W| + |C|) log) by sorting.
inline double auc(std::vector<double> scores_w, std::vector<double> scores_c) {
  if (scores_w.empty() || scores_c.empty()) throw InvalidInput("auc: empty score list");
  auto finite = [](double x) { return std::isfinite(x); };
  if (!std::all_of(scores_w.begin(), scores_w.end(), finite) ||
      !std::all_of(scores_c.begin(), scores_c.end(), finite)) {
    throw InvalidInput("auc: non-finite score");
  }
  std::sort(scores_w.begin(), scores_w.end());
  std::sort(scores_c.begin(), scores_c.end());
  // Twice the U statistic, kept integral so the final division is exact.
  std::uint64_t twice_u = 0;
  std::size_t below = 0;
  std::size_t upto = 0;
  for (double s : scores_w) {
    while (below < scores_c.size() && scores_c[below] < s) ++below;
    if (upto < below) upto = below;
    while (upto < scores_c.size() && scores_c[upto] <= s) ++upto;
    twice_u += 2 * below + (upto - below);
  }
  return static_cast<double>(twice_u) /
         (2.0 * static_cast<double>(scores_w.size()) * static_cast<double>(scores_c.size()));
}

namespace detail {

inline PairSet align_and_recover(const WatermarkKey& key, const std::vector<EmbeddingRecord>& suspects,
                                 const std::vector<EmbeddingRecord>& originals, const std::string& label) {
  std::unordered_map<std::string, const EmbeddingRecord*> by_id;
  std::vector<std::string> bad;
  for (const auto& o : originals) {
    if (!by_id.emplace(o.id, &o).second) bad.push_back(o.id);
  }
  std::unordered_set<std::string> seen;
  for (const auto& s : suspects) {
    if (!by_id.count(s.id) || !seen.insert(s.id).second) bad.push_back(s.id);
  }
  for (const auto& o : originals) {
    if (!seen.count(o.id)) bad.push_back(o.id);
  }
  if (!bad.empty()) {
    std::sort(bad.begin(), bad.end());
    bad.erase(std::unique(bad.begin(), bad.end()), bad.end());
    std::string list;
    for (const auto& id : bad) list += (list.empty() ? "" : ", ") + id;
    throw IdMismatch(label + ": suspect and original ids are not aligned: " + list, bad);
  }
  PairSet set;
  set.pairs.reserve(suspects.size());
  for (const auto& s : suspects) {
    const auto& o = *by_id.at(s.id);
    if (o.vector.size() != key.n()) {
      throw DimensionMismatch(label + ": original '" + o.id + "' has dimension " + std::to_string(o.vector.size()) +
                              ", key expects " + std::to_string(key.n()));
    }
    Vector rec;
    try {
      rec = recover(key, s.vector);
    } catch (const DimensionMismatch& e) {
      throw DimensionMismatch(label + ": suspect '" + s.id + "': " + e.what());
    }
    set.pairs.push_back({std::move(rec), o.vector});
    set.ids.push_back(s.id);
  }
  return set;
}

}  // namespace detail

inline VerificationReport make_report(std::vector<double> cos_w, std::vector<double> cos_c, double threshold) {
  VerificationReport r;
  r.delta_cos = delta_cos_from_scores(cos_w, cos_c);
  r.auc = auc(cos_w, cos_c);
  r.cos_w = std::move(cos_w);
  r.cos_c = std::move(cos_c);
  r.threshold = threshold;
  r.decision = r.delta_cos > threshold ? Decision::kWatermarked : Decision::kNotWatermarked;
  return r;
}

/// Recovers every suspect with the key's pseudoinverse, pairs it with the
/// original of the same id, and scores watermark vs contrast sets.
inline VerificationReport verify(const WatermarkKey& key, const std::vector<EmbeddingRecord>& suspect_w,
                                 const std::vector<EmbeddingRecord>& originals_w,
                                 const std::vector<EmbeddingRecord>& suspect_c,
                                 const std::vector<EmbeddingRecord>& originals_c,
                                 double threshold = kDefaultThreshold) {
  if (!std::isfinite(threshold)) throw InvalidInput("verify: threshold must be finite");
  if (suspect_w.empty()) throw InvalidInput("verify: watermark set is empty");
  if (suspect_c.empty()) throw InvalidInput("verify: contrast set is empty");
  const PairSet s_w = detail::align_and_recover(key, suspect_w, originals_w, "watermark set");
  const PairSet s_c = detail::align_and_recover(key, suspect_c, originals_c, "contrast set");
  VerificationReport r = make_report(pair_cosines(s_w), pair_cosines(s_c), threshold);
  r.ids_w = s_w.ids;
  r.ids_c = s_c.ids;
  return r;
}

inline nlohmann::json report_to_json(const VerificationReport& r) {
  return {{"delta_cos", r.delta_cos},
          {"auc", r.auc},
          {"n_w", r.n_w()},
          {"n_c", r.n_c()},
          {"threshold", r.threshold},
          {"decision", to_string(r.decision)},
          {"cos_w", r.cos_w},
          {"cos_c", r.cos_c}};
}

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

// One row per pair: set,id,cosine.
inline void write_report_csv(std::ostream& out, const VerificationReport& r) {
  out << "set,id,cosine\n";
  auto emit = [&](const char* set, const std::vector<double>& scores, const std::vector<std::string>& ids) {
    for (std::size_t i = 0; i < scores.size(); ++i) {
      out << set << ',' << csv_field(i < ids.size() ? ids[i] : std::to_string(i)) << ',' << nlohmann::json(scores[i]).dump()
          << '\n';
    }
  };
  emit("watermark", r.cos_w, r.ids_w);
  emit("contrast", r.cos_c, r.ids_c);
}

}  // namespace wet
