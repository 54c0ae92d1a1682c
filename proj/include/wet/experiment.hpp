#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "wet/attack.hpp"
#include "wet/codec.hpp"
#include "wet/corpus.hpp"
#include "wet/rng.hpp"
#include "wet/verifier.hpp"

namespace wet {

// What the suspect embeddings went through before reaching the auditor.
struct AttackSpec {
  enum class Kind { kNone, kParaphrase, kNoise };
  Kind kind = Kind::kNone;
  int p = 1;            // paraphrase count
  double spread = 0.0;  // paraphrase spread
  double lambda = 0.0;  // gaussian noise level

  static AttackSpec none() { return {}; }
  static AttackSpec paraphrase(int p, double spread) { return {Kind::kParaphrase, p, spread, 0.0}; }
  static AttackSpec noise(double lambda) { return {Kind::kNoise, 1, 0.0, lambda}; }

  std::string label() const {
    switch (kind) {
      case Kind::kNone: return "none";
      case Kind::kParaphrase: return "paraphrase";
      case Kind::kNoise: return "noise";
    }
    return "none";
  }
};

struct AttackedSet {
  std::vector<EmbeddingRecord> suspects;
  // Paraphrase: mean cosine of paraphrases to their source.
  // Noise: mean cosine of noisy output to the clean watermarked output.
  // None: 1.
  double mean_cos = 1.0;
};

/// Watermarks `originals` with `key` and applies the attack; the per-record
/// randomness is derived from (seed, record index).
inline AttackedSet watermark_and_attack(const WatermarkKey& key, const std::vector<EmbeddingRecord>& originals,
                                        const AttackSpec& attack, std::uint64_t seed) {
  AttackedSet out;
  out.suspects.reserve(originals.size());
  std::vector<double> sims;
  for (std::size_t i = 0; i < originals.size(); ++i) {
    const auto& rec = originals[i];
    Rng rng(derive_seed(seed, i));
    switch (attack.kind) {
      case AttackSpec::Kind::kNone:
        out.suspects.push_back({rec.id, inject(key, rec.vector)});
        sims.push_back(1.0);
        break;
      case AttackSpec::Kind::kParaphrase: {
        const auto bundle = simulate_paraphrases(rec.vector, attack.p, attack.spread, rng);
        for (const auto& para : bundle.paraphrases) sims.push_back(cosine(para, rec.vector));
        out.suspects.push_back({rec.id, attack_average_watermarked(key, bundle)});
        break;
      }
      case AttackSpec::Kind::kNoise: {
        const Vector clean = inject(key, rec.vector);
        const Vector noisy = gaussian_perturb(clean, NoiseConfig{attack.lambda, 1, seed}, rng);
        sims.push_back(cosine(noisy, clean));
        out.suspects.push_back({rec.id, noisy});
        break;
      }
    }
  }
  out.mean_cos = sims.empty() ? 1.0 : mean(sims);
  return out;
}

struct ExperimentResult {
  VerificationReport report;
  double mean_cos = 1.0;
};

/// Audit loop on given corpora: the watermark set is served with `key`, the
/// contrast set with `contrast_key`; both go through the same attack and are
/// verified with `key`'s pseudoinverse.
inline ExperimentResult run_experiment(const WatermarkKey& key, const WatermarkKey& contrast_key,
                                       const std::vector<EmbeddingRecord>& originals_w,
                                       const std::vector<EmbeddingRecord>& originals_c, const AttackSpec& attack,
                                       std::uint64_t seed, double threshold = kDefaultThreshold) {
  const auto attacked_w = watermark_and_attack(key, originals_w, attack, derive_seed(seed, 1));
  const auto attacked_c = watermark_and_attack(contrast_key, originals_c, attack, derive_seed(seed, 2));
  ExperimentResult out;
  out.report = verify(key, attacked_w.suspects, originals_w, attacked_c.suspects, originals_c, threshold);
  out.mean_cos = attacked_w.mean_cos;
  return out;
}

/// Same loop on fresh synthetic unit-sphere corpora of `samples` records each.
inline ExperimentResult run_synthetic_experiment(const WatermarkKey& key, const WatermarkKey& contrast_key,
                                                 int samples, const AttackSpec& attack, std::uint64_t seed,
                                                 double threshold = kDefaultThreshold) {
  const auto originals_w = synthetic_corpus(samples, key.n(), derive_seed(seed, 10), "w");
  const auto originals_c = synthetic_corpus(samples, key.n(), derive_seed(seed, 11), "c");
  return run_experiment(key, contrast_key, originals_w, originals_c, attack, seed, threshold);
}

}  // namespace wet
