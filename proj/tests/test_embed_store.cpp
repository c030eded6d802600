#include "support.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>

using namespace zosteer;

namespace {

EmbeddingTable small_table() {
  std::vector<double> v;
  for (int r = 0; r < 10; ++r) {
    v.push_back(static_cast<double>(r));
    v.push_back(static_cast<double>(r * r) / 10.0);
  }
  std::vector<std::string> labels;
  for (int r = 0; r < 10; ++r) labels.push_back("w" + std::to_string(r));
  labels[5] = "hello";
  labels[9] = "world";
  return EmbeddingTable(10, 2, v, labels);
}

std::vector<std::size_t> brute_nearest(const EmbeddingMatrix& x, const EmbeddingTable& t) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    std::vector<std::pair<double, std::size_t>> d;
    for (std::size_t j = 0; j < t.vocab_size(); ++j) {
      double s = 0;
      for (std::size_t c = 0; c < t.dim(); ++c) s += (x(i, c) - t.row(j)[c]) * (x(i, c) - t.row(j)[c]);
      d.emplace_back(s, j);
    }
    out.push_back(std::min_element(d.begin(), d.end())->second);
  }
  return out;
}

}  // namespace

TEST(EmbeddingTable, Validation) {
  EXPECT_THROW(EmbeddingTable(1, 2, {0, 0}), DimensionError);
  EXPECT_THROW(EmbeddingTable(2, 0, {}), DimensionError);
  EXPECT_THROW(EmbeddingTable(2, 1, {0, NAN}), ArgumentError);
  EXPECT_THROW(EmbeddingTable(2, 1, {0, 1}, {"a"}), DimensionError);
}

TEST(EmbedTokens, LookupAndErrors) {
  const auto t = small_table();
  const std::vector<std::size_t> none;
  EXPECT_THROW(embed_tokens(none, t), DimensionError);
  const std::vector<std::size_t> three{3};
  const auto x = embed_tokens(three, t);
  EXPECT_EQ(x.rows(), 1u);
  EXPECT_EQ(x(0, 0), t.row(3)[0]);
  EXPECT_EQ(x(0, 1), t.row(3)[1]);
  const std::vector<std::size_t> bad{2, 10};
  EXPECT_THROW(embed_tokens(bad, t), LookupError);
}

TEST(NearestTokenDecode, RoundTripAndExactRows) {
  const auto t = small_table();
  const std::vector<std::size_t> ids{5, 9, 0, 5};
  EXPECT_EQ(nearest_token_decode(embed_tokens(ids, t), t), ids);
  for (std::size_t j = 0; j < t.vocab_size(); ++j) {
    const std::vector<std::size_t> one{j};
    EXPECT_EQ(nearest_token_decode(embed_tokens(one, t), t), one);
  }
}

TEST(NearestTokenDecode, SmallNoiseStaysInCell) {
  const auto& w = testkit::default_world();
  for (std::uint64_t s = 0; s < 50; ++s) {
    const std::size_t id = derive_seed({s}) % w.table.vocab_size();
    const std::vector<std::size_t> ids{id};
    auto x = embed_tokens(ids, w.table);
    // half the distance to the nearest other row bounds the safe radius
    double nearest = INFINITY;
    for (std::size_t j = 0; j < w.table.vocab_size(); ++j) {
      if (j == id) continue;
      double d = 0;
      for (std::size_t c = 0; c < w.table.dim(); ++c) d += std::pow(w.table.row(j)[c] - w.table.row(id)[c], 2);
      nearest = std::min(nearest, std::sqrt(d));
    }
    auto noise = normalize_gradient(testkit::random_matrix(1, w.table.dim(), s + 100)).direction;
    x.axpy(0.49 * nearest, noise);
    EXPECT_EQ(nearest_token_decode(x, w.table), ids);
    EXPECT_EQ(nearest_token_decode(x, w.table), brute_nearest(x, w.table));
  }
}

TEST(NearestTokenDecode, TieGoesToSmallerIdAndDimMismatch) {
  const EmbeddingTable t(3, 1, {1.0, -1.0, 1.0});
  EXPECT_EQ(nearest_token_decode(EmbeddingMatrix::from_rows({{0.0}}), t), std::vector<std::size_t>{0});
  EXPECT_EQ(nearest_token_decode(EmbeddingMatrix::from_rows({{1.0}}), t), std::vector<std::size_t>{0});
  EXPECT_THROW(nearest_token_decode(EmbeddingMatrix(1, 2), t), DimensionError);
}

TEST(NearestTokenDecode, PermutationEquivariant) {
  const auto& w = testkit::default_world();
  auto x = testkit::random_matrix(6, w.table.dim(), 3);
  const auto ids = nearest_token_decode(x, w.table);
  EmbeddingMatrix rev(6, w.table.dim());
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t c = 0; c < w.table.dim(); ++c) rev(i, c) = x(5 - i, c);
  const auto rids = nearest_token_decode(rev, w.table);
  for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(rids[i], ids[5 - i]);
}

TEST(TableFiles, TextRoundTripWithLabels) {
  const auto t = small_table();
  std::istringstream in(format_table_text(t));
  const auto back = parse_table_text(in);
  EXPECT_EQ(back.vocab_size(), 10u);
  EXPECT_EQ(back.dim(), 2u);
  EXPECT_TRUE(std::equal(t.data().begin(), t.data().end(), back.data().begin()));
  EXPECT_EQ(back.labels(), t.labels());
}

TEST(TableFiles, BinaryRoundTripIsF32) {
  const auto dir = std::filesystem::temp_directory_path() / "zosteer_table_test";
  std::filesystem::create_directories(dir);
  const EmbeddingTable t(2, 3, {0.1, -2.5, 3.0, 1e-3, 7.25, -0.0});
  save_table(t, (dir / "t.bin").string(), true);
  const auto back = load_table((dir / "t.bin").string());
  ASSERT_EQ(back.vocab_size(), 2u);
  for (std::size_t k = 0; k < 6; ++k) EXPECT_EQ(back.data()[k], static_cast<double>(static_cast<float>(t.data()[k])));
  const auto bytes = format_table_binary(t);
  EXPECT_EQ(bytes.size(), 16u + 6 * 4);
  EXPECT_EQ(bytes.substr(0, 8), "ZSEMBF32");
  std::filesystem::remove_all(dir);
}

TEST(TableFiles, MalformedInputs) {
  std::istringstream short_rows("3 2\n1 2\n3 4\n");
  EXPECT_THROW(parse_table_text(short_rows), ConfigError);
  std::istringstream wrong_width("2 2\n1 2\n3 4 5\n");
  EXPECT_THROW(parse_table_text(wrong_width), ConfigError);
  std::istringstream mixed_labels("2 1\n1\ta\n2\n");
  EXPECT_THROW(parse_table_text(mixed_labels), ConfigError);
  std::istringstream not_number("2 1\n1\nx\n");
  EXPECT_THROW(parse_table_text(not_number), ConfigError);
  EXPECT_THROW(parse_table_binary("ZSEMBF32\x02\0\0\0"), ConfigError);
}
