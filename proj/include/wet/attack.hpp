#pragma once

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "wet/codec.hpp"
#include "wet/error.hpp"
#include "wet/linalg.hpp"
#include "wet/rng.hpp"

namespace wet {

struct ParaphraseBundle {
  Vector original;
  std::vector<Vector> paraphrases;  // E_a
  std::vector<double> alphas;       // 1 / ||T e_i||, filled by with_alphas

  void validate() const {
    if (paraphrases.empty()) throw InvalidInput("paraphrase bundle is empty");
    for (const auto& p : paraphrases) {
      if (p.size() != original.size()) {
        throw DimensionMismatch("paraphrase dimension " + std::to_string(p.size()) + " differs from original " +
                                std::to_string(original.size()));
      }
    }
  }
};

struct NoiseConfig {
  double lambda = 0.0;
  int trials = 1;
  std::uint64_t seed = 0;

  void validate() const {
    if (!std::isfinite(lambda) || lambda < 0.0) throw ParameterError("noise lambda must be finite and >= 0");
    if (trials < 1) throw ParameterError("noise trials must be >= 1");
  }
};

/// Trigger-word watermark weight model: per-token trigger probability p_t,
/// sentence length s_len, paraphrase count p, watermark weight lambda_w.
struct WeightModel {
  double p_t = 0.0;
  int s_len = 1;
  int p = 1;
  double lambda_w = 1.0;

  void validate() const {
    if (!(p_t >= 0.0 && p_t <= 1.0)) throw ParameterError("p_t must lie in [0, 1]");
    if (s_len < 1) throw ParameterError("sentence length must be >= 1");
    if (p < 1) throw ParameterError("paraphrase count must be >= 1");
    if (!(lambda_w > 0.0)) throw ParameterError("watermark weight must be > 0");
  }
};

/// avg(E_a): elementwise mean of the paraphrase embeddings.
inline Vector average_embeddings(const ParaphraseBundle& bundle) {
  bundle.validate();
  Vector sum = Vector::Zero(bundle.original.size());
  for (const auto& p : bundle.paraphrases) sum += p;
  return sum / static_cast<double>(bundle.paraphrases.size());
}

/// Stand-in paraphraser: each paraphrase is normalize(u + spread * g / sqrt(n))
/// with u = normalize(e_o) and g standard normal, so the perturbation norm is
/// about `spread` regardless of dimension.
template <GaussianSource R>
ParaphraseBundle simulate_paraphrases(const Vector& original, int p, double spread, R& rng) {
  if (p < 1) throw ParameterError("simulate_paraphrases: p must be >= 1");
  if (!std::isfinite(spread) || spread < 0.0) throw ParameterError("simulate_paraphrases: spread must be >= 0");
  const Vector unit = normalize(original);
  const double scale = spread / std::sqrt(static_cast<double>(unit.size()));
  ParaphraseBundle bundle;
  bundle.original = original;
  bundle.paraphrases.reserve(static_cast<std::size_t>(p));
  for (int i = 0; i < p; ++i) {
    Vector v = unit;
    for (Eigen::Index j = 0; j < v.size(); ++j) v[j] += scale * rng.normal();
    bundle.paraphrases.push_back(normalize(v));
  }
  return bundle;
}

inline ParaphraseBundle simulate_paraphrases(const Vector& original, int p, double spread, std::uint64_t seed) {
  Rng rng(seed);
  return simulate_paraphrases(original, p, spread, rng);
}

/// Monte-Carlo mean cosine between simulated paraphrases and their source.
inline double paraphrase_mean_cosine(int dim, double spread, int samples, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> cosines;
  cosines.reserve(static_cast<std::size_t>(samples));
  for (int i = 0; i < samples; ++i) {
    Vector e(dim);
    for (int j = 0; j < dim; ++j) e[j] = rng.normal();
    const auto bundle = simulate_paraphrases(e, 1, spread, rng);
    cosines.push_back(cosine(bundle.paraphrases.front(), e));
  }
  return mean(cosines);
}

/// Bisection on spread so that the simulated mean cosine hits `target`.
inline double calibrate_spread(double target_mean_cos, int dim, int samples = 2000, std::uint64_t seed = 0) {
  if (!(target_mean_cos > 0.0 && target_mean_cos < 1.0)) {
    throw ParameterError("calibrate_spread: target must lie in (0, 1)");
  }
  double lo = 0.0;
  double hi = 1.0;
  while (paraphrase_mean_cosine(dim, hi, samples, seed) > target_mean_cos) {
    hi *= 2.0;
    if (hi > 1e6) throw ParameterError("calibrate_spread: target unreachable");
  }
  for (int it = 0; it < 50; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (paraphrase_mean_cosine(dim, mid, samples, seed) > target_mean_cos) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

inline ParaphraseBundle with_alphas(const WatermarkKey& key, ParaphraseBundle bundle) {
  bundle.validate();
  bundle.alphas.clear();
  for (const auto& e : bundle.paraphrases) {
    if (e.size() != key.n()) throw DimensionMismatch("with_alphas: paraphrase dimension does not match key");
    bundle.alphas.push_back(1.0 / (key.matrix() * e).norm());
  }
  return bundle;
}

/// The diluted embedding an attacker trains on: avg_i inject(key, e_i).
inline Vector attack_average_watermarked(const WatermarkKey& key, const ParaphraseBundle& bundle) {
  bundle.validate();
  Vector sum = Vector::Zero(key.w());
  for (const auto& e : bundle.paraphrases) sum += inject(key, e);
  return sum / static_cast<double>(bundle.paraphrases.size());
}

/// max |avg_i Norm(T e_i) - T avg_i(alpha_i e_i)|, alpha_i = 1/||T e_i||.
/// Averaging watermarked outputs equals watermarking the alpha-weighted
/// average of the inputs, so this is zero up to rounding.
inline double theorem1_residual(const WatermarkKey& key, const ParaphraseBundle& bundle) {
  if (key.w() != key.n() || !std::isfinite(key.condition())) {
    throw UnsupportedConfiguration("theorem1_residual requires a square full-rank key");
  }
  const ParaphraseBundle weighted = with_alphas(key, bundle);
  const Vector lhs = attack_average_watermarked(key, weighted);
  Vector pseudo = Vector::Zero(key.n());
  for (std::size_t i = 0; i < weighted.paraphrases.size(); ++i) {
    pseudo += weighted.alphas[i] * weighted.paraphrases[i];
  }
  pseudo /= static_cast<double>(weighted.paraphrases.size());
  const Vector rhs = key.matrix() * pseudo;
  return (lhs - rhs).cwiseAbs().maxCoeff();
}

/// Norm(e + lambda * g), g ~ N(0, I).
template <GaussianSource R>
Vector gaussian_perturb(const Vector& e, const NoiseConfig& cfg, R& rng) {
  cfg.validate();
  Vector out = e;
  for (Eigen::Index j = 0; j < out.size(); ++j) out[j] += cfg.lambda * rng.normal();
  return normalize(out);
}

/// P_S = 1 - (1 - p_t)^|S|.
inline double trigger_prob(const WeightModel& model) {
  model.validate();
  if (model.p_t == 0.0) return 0.0;
  if (model.p_t == 1.0) return 1.0;
  return -std::expm1(static_cast<double>(model.s_len) * std::log1p(-model.p_t));
}

namespace detail {

inline double binomial_pmf(int trials, int successes, double p) {
  if (p == 0.0) return successes == 0 ? 1.0 : 0.0;
  if (p == 1.0) return successes == trials ? 1.0 : 0.0;
  if (trials <= 1000) {
    double coeff = 1.0;
    for (int i = 1; i <= successes; ++i) {
      coeff *= static_cast<double>(trials - successes + i) / static_cast<double>(i);
    }
    return coeff * std::pow(p, successes) * std::pow(1.0 - p, trials - successes);
  }
  const double log_coeff = std::lgamma(trials + 1.0) - std::lgamma(successes + 1.0) -
                           std::lgamma(static_cast<double>(trials - successes) + 1.0);
  return std::exp(log_coeff + successes * std::log(p) + (trials - successes) * std::log1p(-p));
}

// Smallest integer j with j > x; values within 1e-9 of an integer are
// snapped first so that e.g. 0.29 * 100 is treated as the lattice point 29.
inline int first_integer_above(double x) {
  const double r = std::round(x);
  if (std::abs(x - r) <= 1e-9 * std::max(1.0, std::abs(x))) return static_cast<int>(r) + 1;
  return static_cast<int>(std::floor(x)) + 1;
}

}  // namespace detail

struct TailComparison {
  double p_single = 0.0;  // P(Q_S > a)
  double p_avg = 0.0;     // P(Q_P > a)
};

/// Exact tails of the normalized watermark weight for a single sentence
/// (Bernoulli(P_S)) and for the mean over P paraphrases (Binomial(P, P_S) / P).
/// Both use the strict inequality Q > a. lambda_w scales both weights alike
/// and cancels from the comparison.
inline TailComparison weight_tail_compare(double p_s, int p, double a) {
  if (!(p_s >= 0.0 && p_s <= 1.0)) throw ParameterError("weight_tail_compare: P_S must lie in [0, 1]");
  if (p < 1) throw ParameterError("weight_tail_compare: paraphrase count must be >= 1");
  if (!(a >= 0.0 && a < 1.0)) throw ParameterError("weight_tail_compare: a must lie in [0, 1)");
  TailComparison out;
  out.p_single = p_s;
  const int j_min = detail::first_integer_above(a * p);
  for (int j = std::max(j_min, 0); j <= p; ++j) out.p_avg += detail::binomial_pmf(p, j, p_s);
  return out;
}

inline TailComparison weight_tail_compare(const WeightModel& model, double a) {
  return weight_tail_compare(trigger_prob(model), model.p, a);
}

// Attack experiment file: {p, spread, lambda_grid, trials, seed}.
struct AttackConfig {
  int p = 5;
  double spread = 0.0;
  std::vector<double> lambda_grid;
  int trials = 1;
  std::uint64_t seed = 0;

  void validate() const {
    if (p < 1) throw ParameterError("attack config: p must be >= 1");
    if (!std::isfinite(spread) || spread < 0.0) throw ParameterError("attack config: spread must be >= 0");
    if (trials < 1) throw ParameterError("attack config: trials must be >= 1");
    for (double l : lambda_grid) {
      if (!std::isfinite(l) || l < 0.0) throw ParameterError("attack config: lambda values must be >= 0");
    }
  }
};

inline AttackConfig attack_config_from_json(const nlohmann::json& j) {
  try {
    AttackConfig c;
    c.p = j.value("p", c.p);
    c.spread = j.value("spread", c.spread);
    c.lambda_grid = j.value("lambda_grid", c.lambda_grid);
    c.trials = j.value("trials", c.trials);
    c.seed = j.value("seed", c.seed);
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed attack config: ") + e.what());
  }
}

inline nlohmann::json attack_config_to_json(const AttackConfig& c) {
  return {{"p", c.p}, {"spread", c.spread}, {"lambda_grid", c.lambda_grid}, {"trials", c.trials}, {"seed", c.seed}};
}

}  // namespace wet
