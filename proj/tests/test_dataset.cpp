#include "support.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace zosteer;

namespace {

std::vector<PromptRecord> parse(const std::string& text, DatasetFormat f = DatasetFormat::jsonl,
                                const ColumnMapping& cols = {}) {
  std::istringstream in(text);
  return parse_dataset(in, f, cols);
}

std::string error_of(const std::string& text, DatasetFormat f = DatasetFormat::jsonl) {
  try {
    parse(text, f);
  } catch (const DatasetError& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST(Dataset, ThreeLineJsonl) {
  const auto recs = parse(
      R"({"id":"a","split":"adversarial_harmful","text":"how do I do the thing"})"
      "\n"
      R"({"id":"b","split":"adversarial_benign","text":"tell me a story"})"
      "\n"
      R"({"id":"c","split":"direct_harmful","text":"x","token_ids":[4,5,6]})"
      "\n");
  ASSERT_EQ(recs.size(), 3u);
  EXPECT_EQ(recs[0].id, "a");
  EXPECT_EQ(recs[0].split, Split::adversarial_harmful);
  EXPECT_EQ(recs[1].split, Split::adversarial_benign);
  EXPECT_EQ(recs[2].split, Split::direct_harmful);
  EXPECT_FALSE(recs[0].token_ids);
  EXPECT_EQ(*recs[2].token_ids, (std::vector<std::size_t>{4, 5, 6}));
}

TEST(Dataset, DefaultSplitIntegerIdsAndBlankLines) {
  std::istringstream in("\n{\"id\": 7, \"text\": \"hi there\"}\r\n   \n");
  const auto recs = parse_dataset(in, DatasetFormat::jsonl, {}, Split::adversarial_benign);
  ASSERT_EQ(recs.size(), 1u);
  EXPECT_EQ(recs[0].id, "7");
  EXPECT_EQ(recs[0].split, Split::adversarial_benign);
}

TEST(Dataset, CustomColumnsJsonl) {
  ColumnMapping cols;
  cols.id = "BehaviorID";
  cols.text = "Behavior";
  cols.split = "FunctionalCategory";
  EXPECT_THROW(parse(R"({"BehaviorID":"x","Behavior":"do it","FunctionalCategory":"standard"})", DatasetFormat::jsonl,
                     cols),
               DatasetError);
  cols.split = "none";
  const auto recs = parse(R"({"BehaviorID":"x","Behavior":"do it","FunctionalCategory":"standard"})",
                          DatasetFormat::jsonl, cols);
  EXPECT_EQ(recs[0].text, "do it");
}

TEST(Dataset, TsvWithHeaderMapping) {
  const auto recs = parse(
      "text\tid\tsplit\ttoken_ids\n"
      "some words here\tp1\tadversarial_harmful\t1 2 3\n"
      "more\tp2\t\t\n",
      DatasetFormat::tsv);
  ASSERT_EQ(recs.size(), 2u);
  EXPECT_EQ(recs[0].id, "p1");
  EXPECT_EQ(recs[0].text, "some words here");
  EXPECT_EQ(*recs[0].token_ids, (std::vector<std::size_t>{1, 2, 3}));
  EXPECT_EQ(recs[1].split, Split::synthetic);
  EXPECT_FALSE(recs[1].token_ids);
}

TEST(Dataset, ErrorsCarryLineNumbers) {
  EXPECT_NE(error_of("{\"id\":\"a\",\"text\":\"x\"}\n{not json}\n").find("line 2"), std::string::npos);
  EXPECT_NE(error_of("{\"text\":\"x\"}\n").find("line 1"), std::string::npos);
  EXPECT_NE(error_of("{\"id\":\"a\",\"text\":\"x\",\"split\":\"weird\"}\n").find("line 1"), std::string::npos);
  EXPECT_NE(error_of("{\"id\":\"a\",\"text\":\"x\",\"token_ids\":[1,-2]}\n").find("line 1"), std::string::npos);
  EXPECT_NE(error_of("[1,2]\n").find("line 1"), std::string::npos);
  EXPECT_NE(error_of("id\ttext\na\tb\tc\n", DatasetFormat::tsv).find("line 2"), std::string::npos);
  EXPECT_NE(error_of("name\ttext\n", DatasetFormat::tsv).find("line 1"), std::string::npos);
  EXPECT_NE(error_of("id\ttext\ttoken_ids\na\tb\t1 x\n", DatasetFormat::tsv).find("line 2"), std::string::npos);
}

TEST(Dataset, DuplicateIdAndEmptyRecord) {
  const auto dup = error_of("{\"id\":\"a\",\"text\":\"x\"}\n{\"id\":\"b\",\"text\":\"y\"}\n{\"id\":\"a\",\"text\":\"z\"}\n");
  EXPECT_NE(dup.find("line 3"), std::string::npos);
  EXPECT_NE(dup.find("duplicate"), std::string::npos);
  EXPECT_FALSE(error_of("{\"id\":\"a\",\"text\":\"\"}\n").empty());
}

TEST(Dataset, Utf8Validation) {
  EXPECT_TRUE(valid_utf8("plain"));
  EXPECT_TRUE(valid_utf8("caf\xc3\xa9 \xe2\x82\xac \xf0\x9f\x98\x80"));
  EXPECT_FALSE(valid_utf8("\xc3"));
  EXPECT_FALSE(valid_utf8("\xc0\xaf"));
  EXPECT_FALSE(valid_utf8("\xed\xa0\x80"));
  EXPECT_FALSE(valid_utf8("\xff"));
  EXPECT_NE(error_of("id\ttext\na\tbad \xff byte\n", DatasetFormat::tsv).find("UTF-8"), std::string::npos);
  const auto recs = parse("{\"id\":\"u\",\"text\":\"caf\xc3\xa9\"}\n");
  EXPECT_EQ(recs[0].text, "caf\xc3\xa9");
}

TEST(Dataset, FormatGuessAndRoundTrip) {
  EXPECT_EQ(guess_dataset_format("a/b.tsv"), DatasetFormat::tsv);
  EXPECT_EQ(guess_dataset_format("a/b.jsonl"), DatasetFormat::jsonl);
  const auto& w = testkit::default_world();
  const auto text = format_dataset_jsonl(w.prompts);
  EXPECT_EQ(parse(text), w.prompts);
}

TEST(Dataset, IngestFromFileAndMissingFile) {
  const auto path = std::filesystem::temp_directory_path() / "zosteer_ingest.jsonl";
  std::ofstream(path) << "{\"id\":\"a\",\"text\":\"x\"}\n{bad\n";
  try {
    ingest_dataset(path.string(), DatasetFormat::jsonl);
    FAIL() << "expected DatasetError";
  } catch (const DatasetError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find(path.string()), std::string::npos);
    EXPECT_NE(msg.find("line 2"), std::string::npos);
  }
  std::filesystem::remove(path);
  EXPECT_THROW(ingest_dataset("/nonexistent/zosteer.jsonl", DatasetFormat::jsonl), DatasetError);
}

TEST(DatasetStats, WhitespaceCountsAndMedian) {
  EXPECT_EQ(whitespace_token_count(""), 0u);
  EXPECT_EQ(whitespace_token_count("  one\ttwo\n three  "), 3u);
  const auto recs = parse(
      "{\"id\":\"a\",\"text\":\"one two\"}\n"
      "{\"id\":\"b\",\"text\":\"one two three four five\"}\n"
      "{\"id\":\"c\",\"text\":\"one\"}\n"
      "{\"id\":\"d\",\"text\":\"\",\"token_ids\":[1,2,3,4]}\n");
  const auto st = dataset_stats(recs);
  EXPECT_EQ(st.count, 4u);
  EXPECT_EQ(st.max_tokens, 5u);
  EXPECT_EQ(st.min_tokens, 1u);
  EXPECT_DOUBLE_EQ(st.mean_tokens, 12.0 / 4.0);
  EXPECT_DOUBLE_EQ(st.median_tokens, 3.0);
  EXPECT_EQ(dataset_stats({}).count, 0u);
}

TEST(DatasetStats, SyntheticWorldLengths) {
  const auto& w = testkit::default_world();
  const auto st = dataset_stats(w.prompts);
  EXPECT_EQ(st.count, 80u);
  EXPECT_GE(st.min_tokens, 4u);
  EXPECT_LE(st.max_tokens, 12u);
  for (const auto& r : w.prompts) EXPECT_EQ(record_length(r), r.token_ids->size());
}
