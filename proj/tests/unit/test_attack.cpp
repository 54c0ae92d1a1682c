#include <gtest/gtest.h>

#include "support/oracles.hpp"
#include "wet/attack.hpp"
#include "wet/keygen.hpp"

namespace wet {
namespace {

Vector random_vector(int dim, Rng& rng) {
  Vector v(dim);
  for (int i = 0; i < dim; ++i) v[i] = rng.normal();
  return v;
}

ParaphraseBundle random_bundle(int dim, int p, Rng& rng) {
  ParaphraseBundle b;
  b.original = random_vector(dim, rng);
  for (int i = 0; i < p; ++i) b.paraphrases.push_back(random_vector(dim, rng));
  return b;
}

TEST(AverageEmbeddings, Examples) {
  Rng rng(1);
  auto single = random_bundle(6, 1, rng);
  EXPECT_EQ(average_embeddings(single), single.paraphrases[0]);
  ParaphraseBundle two{to_vector({1, 1}), {to_vector({1, 3}), to_vector({3, 5})}, {}};
  EXPECT_EQ(average_embeddings(two), to_vector({2, 4}));
  EXPECT_THROW(average_embeddings(ParaphraseBundle{to_vector({1}), {}, {}}), InvalidInput);
  ParaphraseBundle ragged{to_vector({1, 1}), {to_vector({1, 3}), to_vector({3})}, {}};
  EXPECT_THROW(average_embeddings(ragged), DimensionMismatch);
}

TEST(AverageEmbeddings, MatchesCoordinateLoop) {
  Rng rng(2);
  const auto b = random_bundle(9, 5, rng);
  const Vector got = average_embeddings(b);
  for (int j = 0; j < 9; ++j) {
    double s = 0.0;
    for (const auto& p : b.paraphrases) s += p[j];
    EXPECT_NEAR(got[j], s / 5.0, 1e-12);
  }
}

TEST(SimulateParaphrases, ZeroSpreadCopiesAndSeedDeterminism) {
  const Vector e = to_vector({3, 0, 4});
  const auto b = simulate_paraphrases(e, 4, 0.0, 1);
  ASSERT_EQ(b.paraphrases.size(), 4u);
  for (const auto& p : b.paraphrases) EXPECT_LT((p - normalize(e)).cwiseAbs().maxCoeff(), 1e-15);
  const auto x = simulate_paraphrases(e, 5, 0.1, 77);
  const auto y = simulate_paraphrases(e, 5, 0.1, 77);
  for (int i = 0; i < 5; ++i) EXPECT_EQ(x.paraphrases[i], y.paraphrases[i]);
  for (const auto& p : x.paraphrases) EXPECT_NEAR(p.norm(), 1.0, 1e-12);
  EXPECT_THROW(simulate_paraphrases(e, 0, 0.1, 1), ParameterError);
  EXPECT_THROW(simulate_paraphrases(e, 1, -0.1, 1), ParameterError);
}

TEST(SimulateParaphrases, SimilarityFallsWithSpread) {
  double prev = 1.0;
  for (double spread : {0.1, 0.3, 0.6, 1.0, 2.0}) {
    const double c = paraphrase_mean_cosine(64, spread, 500, 3);
    EXPECT_LT(c, prev);
    prev = c;
  }
}

TEST(SimulateParaphrases, CalibratedSpreadHitsTarget) {
  const double spread = calibrate_spread(0.85, 64, 2000, 0);
  const double c = paraphrase_mean_cosine(64, spread, 2000, 99);
  EXPECT_GE(c, 0.80);
  EXPECT_LE(c, 0.95);
  EXPECT_NEAR(c, 0.85, 0.01);
}

TEST(AttackAverage, Examples) {
  const auto key = generate_key(KeyParams{16, 5, 16, 1});
  Rng rng(3);
  auto one = random_bundle(16, 1, rng);
  EXPECT_EQ(attack_average_watermarked(key, one), inject(key, one.paraphrases[0]));
  ParaphraseBundle same{one.original, {one.paraphrases[0], one.paraphrases[0]}, {}};
  EXPECT_LT((attack_average_watermarked(key, same) - inject(key, one.paraphrases[0])).cwiseAbs().maxCoeff(), 1e-15);
  const auto three = random_bundle(16, 3, rng);
  Vector expected = Vector::Zero(16);
  for (const auto& e : three.paraphrases) {
    const Vector t = key.matrix() * e;
    expected += t / t.norm();
  }
  expected /= 3.0;
  EXPECT_LT((attack_average_watermarked(key, three) - expected).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(AveragingIdentity, ResidualVanishesOnGrid) {
  for (int n : {8, 32, 128}) {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      const auto key = generate_key(KeyParams{n, std::min(n, 25), n, seed});
      Rng rng(derive_seed(seed, static_cast<std::uint64_t>(n)));
      for (int p : {1, 2, 3, 5, 10, 50}) {
        const auto bundle = simulate_paraphrases(random_vector(n, rng), p, 0.3, rng);
        ASSERT_LE(theorem1_residual(key, bundle), 1e-10) << "n " << n << " p " << p;
      }
    }
  }
}

TEST(AveragingIdentity, SingleParaphraseIsExact) {
  const auto key = generate_key(KeyParams{32, 10, 32, 1});
  Rng rng(4);
  EXPECT_LE(theorem1_residual(key, random_bundle(32, 1, rng)), 1e-12);
}

TEST(AveragingIdentity, RequiresSquareKey) {
  const auto key = generate_key(KeyParams{16, 5, 8, 1});
  Rng rng(5);
  EXPECT_THROW(theorem1_residual(key, random_bundle(16, 2, rng)), UnsupportedConfiguration);
}

// Recovering the averaged output gives the alpha-weighted input average.
TEST(AveragingIdentity, RecoveredAverageMatchesWeightedOriginals) {
  const auto key = generate_key(KeyParams{64, 25, 64, 6});
  Rng rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    const auto bundle = with_alphas(key, simulate_paraphrases(random_vector(64, rng), 10, 0.6, rng));
    Vector weighted = Vector::Zero(64);
    for (std::size_t i = 0; i < bundle.paraphrases.size(); ++i) weighted += bundle.alphas[i] * bundle.paraphrases[i];
    weighted /= 10.0;
    ASSERT_NEAR(cosine(recover(key, attack_average_watermarked(key, bundle)), weighted), 1.0, 1e-8);
  }
}

TEST(GaussianPerturb, ZeroLambdaIsExactNormalize) {
  Rng data(7);
  Rng rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    const Vector e = random_vector(10, data);
    EXPECT_EQ(gaussian_perturb(e, NoiseConfig{0.0, 1, 0}, rng), normalize(e));
  }
  EXPECT_THROW(gaussian_perturb(Vector::Ones(3), NoiseConfig{-1.0, 1, 0}, rng), ParameterError);
  EXPECT_THROW(gaussian_perturb(Vector::Ones(3), NoiseConfig{std::nan(""), 1, 0}, rng), ParameterError);
}

TEST(GaussianPerturb, HugeNoiseDecorrelates) {
  Rng rng(9);
  const Vector e = normalize(random_vector(64, rng));
  double total = 0.0;
  for (int i = 0; i < 1000; ++i) total += std::abs(cosine(gaussian_perturb(e, NoiseConfig{1e6, 1, 0}, rng), e));
  EXPECT_LT(total / 1000.0, 0.1);
}

TEST(GaussianPerturb, SimilarityNonincreasingOverGrid) {
  Rng data(10);
  const Vector e = normalize(random_vector(64, data));
  double prev = 1.0;
  for (double lambda : {0.01, 0.05, 0.1, 0.5, 1.0}) {
    Rng rng(11);
    double total = 0.0;
    for (int i = 0; i < 1000; ++i) total += cosine(gaussian_perturb(e, NoiseConfig{lambda, 1, 0}, rng), e);
    EXPECT_LE(total / 1000.0, prev) << lambda;
    prev = total / 1000.0;
  }
}

TEST(TriggerProb, Examples) {
  EXPECT_NEAR(trigger_prob(WeightModel{0.005, 50, 1, 1.0}), 0.222, 5e-4);
  EXPECT_EQ(trigger_prob(WeightModel{0.0, 50, 1, 1.0}), 0.0);
  EXPECT_NEAR(trigger_prob(WeightModel{0.37, 1, 1, 1.0}), 0.37, 1e-15);
  EXPECT_EQ(trigger_prob(WeightModel{1.0, 3, 1, 1.0}), 1.0);
  EXPECT_NEAR(trigger_prob(WeightModel{0.005, 50, 1, 1.0}), 1.0 - std::pow(0.995, 50), 1e-15);
  EXPECT_THROW(trigger_prob(WeightModel{1.5, 1, 1, 1.0}), ParameterError);
  EXPECT_THROW(trigger_prob(WeightModel{0.1, 0, 1, 1.0}), ParameterError);
}

// Strictly increasing until the result rounds to 1.0 in double precision.
TEST(TriggerProb, MonotoneInBothArguments) {
  double prev = -1.0;
  for (double pt = 0.0; pt <= 1.0; pt += 0.01) {
    const double v = trigger_prob(WeightModel{pt, 20, 1, 1.0});
    if (prev < 1.0) {
      EXPECT_GT(v, prev) << pt;
    } else {
      EXPECT_EQ(v, 1.0) << pt;
    }
    prev = v;
  }
  prev = -1.0;
  for (int s = 1; s <= 200; ++s) {
    const double v = trigger_prob(WeightModel{0.005, s, 1, 1.0});
    EXPECT_GT(v, prev);
    prev = v;
  }
}

TEST(WeightTail, SingleSentenceTailDominates) {
  const WeightModel base{0.005, 50, 10, 1.0};
  for (double a : {0.31, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9}) {
    const auto t = weight_tail_compare(base, a);
    EXPECT_GT(t.p_single, t.p_avg) << "P=10 a=" << a;
  }
  WeightModel five = base;
  five.p = 5;
  for (double a : {0.41, 0.5, 0.6, 0.7, 0.8, 0.9}) {
    const auto t = weight_tail_compare(five, a);
    EXPECT_GT(t.p_single, t.p_avg) << "P=5 a=" << a;
  }
}

TEST(WeightTail, SingleParaphraseEqualsSingleSentence) {
  for (double a : {0.0, 0.1, 0.5, 0.99}) {
    const auto t = weight_tail_compare(0.222, 1, a);
    EXPECT_NEAR(t.p_single, t.p_avg, 1e-15);
  }
}

TEST(WeightTail, StrictInequalityAtLatticePoints) {
  // a * P = 2 exactly: j = 2 must be excluded.
  const auto t = weight_tail_compare(0.5, 5, 0.4);
  EXPECT_NEAR(t.p_avg, oracle::binomial_upper_tail_exact(5, 0.5, 3), 1e-15);
  // 0.29 * 100 is not exactly 29 in binary.
  const auto u = weight_tail_compare(0.3, 100, 0.29);
  EXPECT_NEAR(u.p_avg, oracle::binomial_upper_tail_exact(100, 0.3, 30), 1e-12);
  EXPECT_THROW(weight_tail_compare(0.3, 5, 1.0), ParameterError);
  EXPECT_THROW(weight_tail_compare(0.3, 0, 0.5), ParameterError);
}

TEST(WeightTail, MatchesLgammaOracle) {
  for (int p = 1; p <= 60; ++p) {
    for (double ps : {0.01, 0.222, 0.5, 0.9}) {
      for (double a : {0.0, 0.15, 0.31, 0.5, 0.77}) {
        int j_min = static_cast<int>(std::floor(a * p)) + 1;
        if (std::abs(a * p - std::round(a * p)) < 1e-9) j_min = static_cast<int>(std::round(a * p)) + 1;
        ASSERT_NEAR(weight_tail_compare(ps, p, a).p_avg, oracle::binomial_upper_tail_exact(p, ps, j_min), 1e-12)
            << p << " " << ps << " " << a;
      }
    }
  }
}

TEST(WeightTail, MatchesMonteCarlo) {
  const double ps = trigger_prob(WeightModel{0.005, 50, 1, 1.0});
  const int draws = 1000000;
  for (int p : {2, 5, 10, 20}) {
    for (double a : {0.2, 0.31, 0.5}) {
      Rng rng(derive_seed(static_cast<std::uint64_t>(p), static_cast<std::uint64_t>(a * 100)));
      int hits = 0;
      for (int d = 0; d < draws; ++d) {
        int x = 0;
        for (int i = 0; i < p; ++i) x += rng.uniform01() < ps;
        hits += static_cast<double>(x) / p > a;
      }
      const double expected = weight_tail_compare(ps, p, a).p_avg;
      const double se = std::sqrt(expected * (1.0 - expected) / draws);
      EXPECT_NEAR(static_cast<double>(hits) / draws, expected, 3.0 * se + 1e-12) << "P=" << p << " a=" << a;
    }
  }
}

TEST(AttackConfig, JsonRoundTrip) {
  const auto c = attack_config_from_json(
      nlohmann::json{{"p", 10}, {"spread", 0.6}, {"lambda_grid", {0.01, 0.1}}, {"trials", 3}, {"seed", 5}});
  EXPECT_EQ(c.p, 10);
  EXPECT_EQ(c.lambda_grid.size(), 2u);
  EXPECT_EQ(attack_config_to_json(c), attack_config_to_json(attack_config_from_json(attack_config_to_json(c))));
  EXPECT_THROW(attack_config_from_json(nlohmann::json{{"p", 0}}), ParameterError);
  EXPECT_THROW(attack_config_from_json(nlohmann::json{{"p", "five"}}), FormatError);
}

}  // namespace
}  // namespace wet
