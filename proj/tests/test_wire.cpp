#include "support.hpp"

#include <gtest/gtest.h>

using namespace zosteer;

namespace {

json full_scores(double fill) {
  json s = json::object();
  for (auto label : kCategoryLabels) s[std::string(label)] = fill;
  return s;
}

}  // namespace

TEST(Base64, Rfc4648Vectors) {
  const std::pair<const char*, const char*> cases[] = {
      {"", ""}, {"f", "Zg=="}, {"fo", "Zm8="}, {"foo", "Zm9v"}, {"foob", "Zm9vYg=="}, {"fooba", "Zm9vYmE="},
      {"foobar", "Zm9vYmFy"}};
  for (const auto& [raw, enc] : cases) {
    EXPECT_EQ(base64_encode(raw), enc);
    EXPECT_EQ(base64_decode(enc), raw);
  }
}

TEST(Base64, BinaryRoundTripAndErrors) {
  std::string bytes;
  for (int i = 0; i < 256; ++i) bytes.push_back(static_cast<char>(i));
  EXPECT_EQ(base64_decode(base64_encode(bytes)), bytes);
  EXPECT_THROW(base64_decode("abc"), ProtocolError);
  EXPECT_THROW(base64_decode("ab!d"), ProtocolError);
  EXPECT_THROW(base64_decode("a=bc"), ProtocolError);
}

TEST(EmbeddingPayload, LittleEndianF32) {
  // 1.0f = 0x3f800000, -2.0f = 0xc0000000
  const auto x = EmbeddingMatrix::from_rows({{1.0, -2.0}});
  const std::string raw("\x00\x00\x80\x3f\x00\x00\x00\xc0", 8);
  EXPECT_EQ(encode_embeddings_f32(x), base64_encode(raw));
  EXPECT_EQ(decode_embeddings_f32(1, 2, encode_embeddings_f32(x)), x);
}

TEST(EmbeddingPayload, RoundTripIsF32Rounding) {
  const auto x = testkit::random_matrix(4, 7, 11);
  const auto back = decode_embeddings_f32(4, 7, encode_embeddings_f32(x));
  for (std::size_t k = 0; k < x.size(); ++k) {
    EXPECT_EQ(back.data()[k], static_cast<double>(static_cast<float>(x.data()[k])));
  }
}

TEST(EmbeddingPayload, SizeAndShapeErrors) {
  const auto enc = encode_embeddings_f32(EmbeddingMatrix(2, 2));
  EXPECT_THROW(decode_embeddings_f32(2, 3, enc), ProtocolError);
  EXPECT_THROW(decode_embeddings_f32(0, 4, enc), ProtocolError);
  const std::string nan_bytes("\x00\x00\xc0\x7f", 4);
  EXPECT_THROW(decode_embeddings_f32(1, 1, base64_encode(nan_bytes)), ProtocolError);
}

TEST(ModerationSchema, ViolenceResponse) {
  json scores = full_scores(0.001);
  scores["violence"] = 0.944;
  scores["harassment/threatening"] = 0.51;
  json cats = json::object();
  cats["violence"] = true;
  const json body{{"id", "modr-1"}, {"results", json::array({{{"category_scores", scores}, {"categories", cats},
                                                                 {"flagged", true}}})}};
  const auto parsed = parse_moderation_response(body, CategoryMapping{});
  ASSERT_EQ(parsed.size(), 1u);
  EXPECT_EQ(max_category_score(parsed[0]), (ObjectiveValue{0.944, Category::violence}));
  EXPECT_TRUE(parsed[0].flagged());
}

TEST(ModerationSchema, MissingCategoryAndBadScores) {
  json scores = full_scores(0.0);
  scores.erase("hate/threatening");
  const json missing{{"results", json::array({{{"category_scores", scores}}})}};
  try {
    parse_moderation_response(missing, CategoryMapping{});
    FAIL() << "expected ProtocolError";
  } catch (const ProtocolError& e) {
    EXPECT_NE(std::string(e.what()).find("hate/threatening"), std::string::npos);
  }
  json high = full_scores(0.0);
  high["sexual"] = 1.2;
  EXPECT_THROW(parse_moderation_response(json{{"results", json::array({{{"category_scores", high}}})}}, {}),
               ProtocolError);
  json text = full_scores(0.0);
  text["sexual"] = "0.2";
  EXPECT_THROW(parse_moderation_response(json{{"results", json::array({{{"category_scores", text}}})}}, {}),
               ProtocolError);
  EXPECT_THROW(parse_moderation_response(json{{"results", json::array()}}, {}), ProtocolError);
  EXPECT_THROW(parse_moderation_response(json::object(), {}), ProtocolError);
}

TEST(ModerationSchema, CustomMappingAndExtraLabels) {
  CategoryMapping m;
  m.set(Category::illicit, "illegal");
  m.validate();
  json scores = full_scores(0.0);
  scores.erase("illicit");
  scores["illegal"] = 0.6;
  scores["some-new-category"] = 0.99;
  const auto s = parse_moderation_result(json{{"category_scores", scores}}, m);
  EXPECT_EQ(max_category_score(s), (ObjectiveValue{0.6, Category::illicit}));
  EXPECT_FALSE(s.flagged());

  CategoryMapping dup;
  dup.set(Category::hate, "harassment");
  EXPECT_THROW(dup.validate(), ConfigError);
}

TEST(ModerationSchema, MockResultRoundTrips) {
  ScoreVector s;
  s.set(Category::self_harm_intent, 0.25);
  s.set(Category::violence, 0.7);
  s.set_flagged(true);
  const auto back = parse_moderation_result(moderation_result_json(s), CategoryMapping{});
  EXPECT_EQ(back, s);
  EXPECT_TRUE(back.flagged());
}

TEST(GenerationSchema, RequestRoundTrip) {
  GenerationRequest req;
  req.embeddings = EmbeddingMatrix::from_rows({{0.5, -1.0, 2.0}, {0.0, 0.25, 8.0}});
  req.max_new_tokens = 16;
  req.temperature = 0.0;
  req.sampling_seed = 1234567890123ULL;
  const json body = generation_request_json(req);
  EXPECT_EQ(body["rows"], 2);
  EXPECT_EQ(body["cols"], 3);
  const auto back = parse_generation_request(json::parse(body.dump()));
  EXPECT_EQ(back.embeddings, req.embeddings);
  EXPECT_EQ(back.max_new_tokens, 16u);
  EXPECT_EQ(back.temperature, 0.0);
  EXPECT_EQ(back.sampling_seed, req.sampling_seed);
}

TEST(GenerationSchema, RejectsMalformedRequests) {
  GenerationRequest req;
  req.embeddings = EmbeddingMatrix::from_rows({{1.0, 2.0}});
  json body = generation_request_json(req);
  json zero_rows = body;
  zero_rows["rows"] = 0;
  EXPECT_THROW(parse_generation_request(zero_rows), ProtocolError);
  json no_data = body;
  no_data.erase("data_b64");
  EXPECT_THROW(parse_generation_request(no_data), ProtocolError);
  json zero_tokens = body;
  zero_tokens["max_new_tokens"] = 0;
  EXPECT_THROW(parse_generation_request(zero_tokens), ProtocolError);
  json neg_temp = body;
  neg_temp["temperature"] = -0.5;
  EXPECT_THROW(parse_generation_request(neg_temp), ProtocolError);
}

TEST(GenerationSchema, Response) {
  const auto r = parse_generation_response(json{{"text", "ok then"}, {"tokens_generated", 2}});
  EXPECT_EQ(r.text, "ok then");
  EXPECT_EQ(r.tokens_generated, 2u);
  EXPECT_THROW(parse_generation_response(json{{"tokens_generated", 2}}), ProtocolError);
  EXPECT_THROW(parse_generation_response(json{{"text", "x"}, {"tokens_generated", "two"}}), ProtocolError);
}
