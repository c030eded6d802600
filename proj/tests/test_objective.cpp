#include "support.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

using namespace zosteer;

namespace {

ScoreVector random_scores(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::array<double, kNumCategories> s{};
  for (double& v : s) v = u(rng);
  return ScoreVector(s);
}

}  // namespace

TEST(Categories, FixedOrderAndLabels) {
  EXPECT_EQ(kCategoryLabels.size(), 13u);
  EXPECT_EQ(category_label(Category::harassment), "harassment");
  EXPECT_EQ(category_label(Category::self_harm_intent), "self-harm/intent");
  EXPECT_EQ(category_label(Category::violence_graphic), "violence/graphic");
  EXPECT_EQ(parse_category("illicit/violent"), Category::illicit_violent);
  EXPECT_FALSE(parse_category("self_harm"));
}

TEST(ScoreVector, RejectsOutOfRange) {
  ScoreVector s;
  EXPECT_THROW(s.set(Category::hate, 1.5), ArgumentError);
  EXPECT_THROW(s.set(Category::hate, -0.1), ArgumentError);
  EXPECT_THROW(s.set(Category::hate, NAN), ArgumentError);
}

TEST(MaxCategoryScore, AllZeroPicksFirstCategory) {
  EXPECT_EQ(max_category_score(ScoreVector{}), (ObjectiveValue{0.0, Category::harassment}));
}

TEST(MaxCategoryScore, ViolenceDominates) {
  ScoreVector s;
  s.set(Category::violence, 0.849);
  s.set(Category::hate, 0.1);
  s.set(Category::sexual, 0.05);
  EXPECT_EQ(max_category_score(s), (ObjectiveValue{0.849, Category::violence}));
}

TEST(MaxCategoryScore, TieGoesToEarlierCategory) {
  ScoreVector s;
  s.set(Category::harassment, 0.3);
  s.set(Category::hate, 0.3);
  EXPECT_EQ(max_category_score(s), (ObjectiveValue{0.3, Category::harassment}));
}

TEST(MaxCategoryScore, OneLipschitzInSupNorm) {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 1000; ++i) {
    const auto a = random_scores(rng), b = random_scores(rng);
    double sup = 0.0;
    for (std::size_t c = 0; c < kNumCategories; ++c) sup = std::max(sup, std::abs(a.values()[c] - b.values()[c]));
    EXPECT_LE(std::abs(max_category_score(a).value - max_category_score(b).value), sup + 1e-15);
  }
}

TEST(MaxCategoryScore, ArgmaxStableUnderCommonScaling) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> f(0.01, 1.0);
  for (int i = 0; i < 200; ++i) {
    const auto s = random_scores(rng);
    const double k = f(rng);
    std::array<double, kNumCategories> scaled{};
    for (std::size_t c = 0; c < kNumCategories; ++c) scaled[c] = s.values()[c] * k;
    EXPECT_EQ(max_category_score(ScoreVector(scaled)).top_category, max_category_score(s).top_category);
  }
}

TEST(SoftmaxSurrogate, UniformScoresGiveThatScore) {
  std::array<double, kNumCategories> s{};
  s.fill(0.37);
  EXPECT_NEAR(softmax_surrogate(ScoreVector(s), 5.0), 0.37, 1e-15);
}

TEST(SoftmaxSurrogate, OneHotClosedForm) {
  ScoreVector s;
  s.set(Category::violence, 1.0);
  const double expected = std::exp(20.0) / (std::exp(20.0) + 12.0);
  EXPECT_NEAR(softmax_surrogate(s, 20.0), expected, 1e-12);
}

TEST(SoftmaxSurrogate, BoundedByMaxAndLogSumExpGap) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 1000; ++i) {
    const auto s = random_scores(rng);
    const double m = max_category_score(s).value;
    for (double beta : {0.5, 5.0, 50.0}) {
      const double v = softmax_surrogate(s, beta);
      EXPECT_LE(v, m);
      EXPECT_LE(m - v, std::log(13.0) / beta + 1e-12);
    }
    EXPECT_LE(m - softmax_surrogate(s, 50.0), 0.05);
  }
  EXPECT_THROW(softmax_surrogate(ScoreVector{}, 0.0), ArgumentError);
}

TEST(SyntheticPhi, AnchorWithZeroOffsetIsHalf) {
  const auto x = testkit::random_matrix(2, 3, 4);
  SyntheticParams p;
  p.directions = {testkit::random_matrix(2, 3, 5), testkit::random_matrix(2, 3, 6)};
  p.offsets = {0.0, 0.0};
  p.anchor = x;
  EXPECT_DOUBLE_EQ(synthetic_phi(x, p).value, 0.5);
}

TEST(SyntheticPhi, SaturatesTowardZero) {
  SyntheticParams p;
  p.directions = {EmbeddingMatrix::from_rows({{1, 0}})};
  p.offsets = {-100.0};
  p.anchor = EmbeddingMatrix(1, 2);
  const double v = synthetic_phi(EmbeddingMatrix(1, 2), p).value;
  EXPECT_GE(v, 0.0);
  EXPECT_LT(v, 1e-40);
}

TEST(SyntheticPhi, ShapeMismatch) {
  SyntheticParams p;
  p.directions = {EmbeddingMatrix::from_rows({{1, 0}})};
  p.offsets = {0.0};
  p.anchor = EmbeddingMatrix(1, 2);
  EXPECT_THROW(synthetic_phi(EmbeddingMatrix(2, 2), p), DimensionError);
}

TEST(SyntheticPhi, GradientMatchesCentralDifferences) {
  for (std::uint64_t trial = 0; trial < 100; ++trial) {
    SyntheticParams p;
    p.anchor = testkit::random_matrix(2, 3, derive_seed({10, trial}));
    p.directions = {testkit::random_matrix(2, 3, derive_seed({11, trial}), 0.7),
                    testkit::random_matrix(2, 3, derive_seed({12, trial}), 0.7)};
    p.offsets = {0.1, -0.3};
    const auto x = testkit::random_matrix(2, 3, derive_seed({13, trial}));
    const auto g = synthetic_phi_gradient(x, p);
    const double h = 1e-5;
    for (std::size_t k = 0; k < x.size(); ++k) {
      EmbeddingMatrix xp = x, xm = x;
      xp.data()[k] += h;
      xm.data()[k] -= h;
      const double fd = (synthetic_phi(xp, p).value - synthetic_phi(xm, p).value) / (2 * h);
      EXPECT_NEAR(g.data()[k], fd, 1e-6);
    }
    const double v = synthetic_phi(x, p).value;
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(LexiconOracle, NoTermsNoScore) {
  Lexicon lex;
  lex.add(Category::violence, "smash", 0.7);
  const auto s = lexicon_mock_oracle("a perfectly calm sentence", lex);
  EXPECT_EQ(s, ScoreVector{});
  EXPECT_FALSE(s.flagged());
}

TEST(LexiconOracle, SingleWeightedTerm) {
  Lexicon lex;
  lex.add(Category::violence, "smash", 0.7);
  const auto s = lexicon_mock_oracle("I will SMASH it.", lex);
  EXPECT_NEAR(s[Category::violence], 1.0 - std::exp(-0.7), 1e-15);
  EXPECT_NEAR(s[Category::violence], 0.503, 1e-3);
  EXPECT_TRUE(s.flagged());
  EXPECT_EQ(s, lexicon_mock_oracle("I will SMASH it.", lex));
}

TEST(LexiconOracle, WholeWordsMultiWordTermsAndRepeats) {
  Lexicon lex;
  lex.add(Category::illicit, "pick the lock", 0.2);
  lex.add(Category::violence, "hit", 0.1);
  const auto s = lexicon_mock_oracle("hit, hitting, hit; then pick the lock", lex);
  EXPECT_NEAR(s[Category::violence], 1.0 - std::exp(-0.2), 1e-15);
  EXPECT_NEAR(s[Category::illicit], 1.0 - std::exp(-0.2), 1e-15);
  EXPECT_FALSE(s.flagged());
}

TEST(LexiconFile, ParsesAndRejects) {
  std::istringstream good("# comment\n\nviolence\tsmash\t0.7\nself-harm/intent\tgive up\t0.25\n");
  const auto lex = load_lexicon(good);
  ASSERT_EQ(lex.terms().size(), 2u);
  EXPECT_EQ(lex.terms()[1].category, Category::self_harm_intent);

  std::istringstream bad_cat("violence\tsmash\t0.7\nviolent\tkick\t0.1\n");
  try {
    load_lexicon(bad_cat);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
  std::istringstream bad_weight("violence\tsmash\tlots\n");
  EXPECT_THROW(load_lexicon(bad_weight), ConfigError);
  std::istringstream negative("violence\tsmash\t-1\n");
  EXPECT_THROW(load_lexicon(negative), ConfigError);
  std::istringstream two_fields("violence\tsmash\n");
  EXPECT_THROW(load_lexicon(two_fields), ConfigError);
}
