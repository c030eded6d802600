#pragma once

// JSON wire schemas shared by the clients and the in-process mock services.
//
// Moderation:  POST {"input": "<text>"} or {"input": ["<text>", ...]}
//              -> {"results": [{"category_scores": {label: real},
//                               "categories": {label: bool}, "flagged": bool}]}
// Generation:  POST {"rows", "cols", "data_b64", "max_new_tokens", "temperature", "seed"}
//              -> {"text": "...", "tokens_generated": n}
// data_b64 is base64 of the row-major embedding matrix as little-endian f32.

#include "zosteer/embed_store.hpp"
#include "zosteer/error.hpp"
#include "zosteer/objective.hpp"
#include "zosteer/tensor.hpp"

#include <json.hpp>

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace zosteer {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// base64 (RFC 4648, padded)
// ---------------------------------------------------------------------------

inline std::string base64_encode(std::string_view bytes) {
  static constexpr char kAlphabet[] =
      "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < bytes.size(); i += 3) {
    const std::uint32_t n = (static_cast<unsigned char>(bytes[i]) << 16) |
                            (static_cast<unsigned char>(bytes[i + 1]) << 8) |
                            static_cast<unsigned char>(bytes[i + 2]);
    out.push_back(kAlphabet[(n >> 18) & 63]);
    out.push_back(kAlphabet[(n >> 12) & 63]);
    out.push_back(kAlphabet[(n >> 6) & 63]);
    out.push_back(kAlphabet[n & 63]);
  }
  const std::size_t rest = bytes.size() - i;
  if (rest > 0) {
    std::uint32_t n = static_cast<unsigned char>(bytes[i]) << 16;
    if (rest == 2) n |= static_cast<unsigned char>(bytes[i + 1]) << 8;
    out.push_back(kAlphabet[(n >> 18) & 63]);
    out.push_back(kAlphabet[(n >> 12) & 63]);
    out.push_back(rest == 2 ? kAlphabet[(n >> 6) & 63] : '=');
    out.push_back('=');
  }
  return out;
}

inline std::string base64_decode(std::string_view text) {
  auto value = [](char c) -> int {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    return -1;
  };
  if (text.size() % 4 != 0) throw ProtocolError("base64 length is not a multiple of 4");
  std::string out;
  out.reserve(text.size() / 4 * 3);
  for (std::size_t i = 0; i < text.size(); i += 4) {
    int v[4];
    int pad = 0;
    for (int k = 0; k < 4; ++k) {
      const char c = text[i + k];
      if (c == '=' && i + 4 == text.size() && k >= 2) {
        v[k] = 0;
        ++pad;
      } else {
        if (pad) throw ProtocolError("base64 padding in the middle of a quantum");
        v[k] = value(c);
        if (v[k] < 0) throw ProtocolError("invalid base64 character");
      }
    }
    const std::uint32_t n = (v[0] << 18) | (v[1] << 12) | (v[2] << 6) | v[3];
    out.push_back(static_cast<char>((n >> 16) & 0xff));
    if (pad < 2) out.push_back(static_cast<char>((n >> 8) & 0xff));
    if (pad < 1) out.push_back(static_cast<char>(n & 0xff));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Embedding payloads
// ---------------------------------------------------------------------------

inline std::string encode_embeddings_f32(const EmbeddingMatrix& x) {
  std::string bytes;
  bytes.reserve(x.size() * 4);
  for (double v : x.data()) detail::append_f32_le(bytes, static_cast<float>(v));
  return base64_encode(bytes);
}

inline EmbeddingMatrix decode_embeddings_f32(std::size_t rows, std::size_t cols,
                                             std::string_view data_b64) {
  if (rows == 0 || cols == 0) throw ProtocolError("rows and cols must be >= 1");
  const std::string bytes = base64_decode(data_b64);
  if (bytes.size() != rows * cols * 4) {
    throw ProtocolError("payload has " + std::to_string(bytes.size()) + " bytes, expected " +
                        std::to_string(rows * cols * 4));
  }
  std::vector<double> values(rows * cols);
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  for (std::size_t k = 0; k < values.size(); ++k) {
    const float f = detail::f32_from_le(p + 4 * k);
    if (!std::isfinite(f)) throw ProtocolError("non-finite embedding value");
    values[k] = f;
  }
  return EmbeddingMatrix(rows, cols, std::move(values));
}

// ---------------------------------------------------------------------------
// Category label mapping
// ---------------------------------------------------------------------------

/// Maps the oracle's category labels onto the 13 internal categories.
/// Every internal category must be covered exactly once.
class CategoryMapping {
 public:
  /// Identity mapping onto the standard labels.
  CategoryMapping() {
    for (std::size_t i = 0; i < kNumCategories; ++i) labels_[i] = std::string(kCategoryLabels[i]);
  }

  /// Overrides the wire label for one category; call validate() afterwards.
  void set(Category c, std::string wire_label) { labels_[static_cast<std::size_t>(c)] = std::move(wire_label); }

  const std::string& wire_label(Category c) const { return labels_[static_cast<std::size_t>(c)]; }

  void validate() const {
    for (std::size_t i = 0; i < kNumCategories; ++i) {
      if (labels_[i].empty()) throw ConfigError("empty wire label for " + std::string(kCategoryLabels[i]));
      for (std::size_t j = 0; j < i; ++j) {
        if (labels_[i] == labels_[j]) throw ConfigError("wire label '" + labels_[i] + "' mapped twice");
      }
    }
  }

 private:
  std::array<std::string, kNumCategories> labels_;
};

// ---------------------------------------------------------------------------
// Moderation schema
// ---------------------------------------------------------------------------

inline json moderation_request_json(std::string_view text) { return json{{"input", std::string(text)}}; }

inline json moderation_request_json(const std::vector<std::string>& texts) {
  return json{{"input", texts}};
}

/// One entry of "results" -> ScoreVector. flagged is the OR of the per-category
/// flags and the top-level flag.
inline ScoreVector parse_moderation_result(const json& result, const CategoryMapping& mapping) {
  if (!result.is_object() || !result.contains("category_scores") || !result["category_scores"].is_object()) {
    throw ProtocolError("moderation result lacks a category_scores object");
  }
  const json& scores = result["category_scores"];
  ScoreVector out;
  for (Category c : all_categories()) {
    const std::string& label = mapping.wire_label(c);
    auto it = scores.find(label);
    if (it == scores.end()) throw ProtocolError("moderation response is missing category '" + label + "'");
    if (!it->is_number()) throw ProtocolError("score for '" + label + "' is not a number");
    const double s = it->get<double>();
    if (!(s >= 0.0 && s <= 1.0)) throw ProtocolError("score for '" + label + "' outside [0,1]");
    out.set(c, s);
  }
  bool flagged = false;
  if (auto f = result.find("flagged"); f != result.end() && f->is_boolean()) flagged = f->get<bool>();
  if (auto cats = result.find("categories"); cats != result.end() && cats->is_object()) {
    for (const auto& [label, v] : cats->items()) {
      if (v.is_boolean() && v.get<bool>()) flagged = true;
    }
  }
  out.set_flagged(flagged);
  return out;
}

inline std::vector<ScoreVector> parse_moderation_response(const json& body, const CategoryMapping& mapping) {
  if (!body.is_object() || !body.contains("results") || !body["results"].is_array() ||
      body["results"].empty()) {
    throw ProtocolError("moderation response lacks a non-empty results array");
  }
  std::vector<ScoreVector> out;
  for (const auto& r : body["results"]) out.push_back(parse_moderation_result(r, mapping));
  return out;
}

inline json moderation_result_json(const ScoreVector& s, double flag_threshold = kMockFlagThreshold) {
  json scores = json::object();
  json cats = json::object();
  for (Category c : all_categories()) {
    scores[std::string(category_label(c))] = s[c];
    cats[std::string(category_label(c))] = s[c] >= flag_threshold;
  }
  return json{{"category_scores", scores}, {"categories", cats}, {"flagged", s.flagged()}};
}

// ---------------------------------------------------------------------------
// Generation schema
// ---------------------------------------------------------------------------

struct GenerationRequest {
  EmbeddingMatrix embeddings;
  std::size_t max_new_tokens = 128;
  double temperature = 0.1;
  std::uint64_t sampling_seed = 0;

  void validate() const {
    if (embeddings.empty()) throw ArgumentError("generation request has no embeddings");
    if (max_new_tokens < 1) throw ArgumentError("max_new_tokens must be >= 1");
    if (!(temperature >= 0.0) || !std::isfinite(temperature)) throw ArgumentError("temperature must be >= 0");
  }
};

inline json generation_request_json(const GenerationRequest& req) {
  return json{{"rows", req.embeddings.rows()},
              {"cols", req.embeddings.cols()},
              {"data_b64", encode_embeddings_f32(req.embeddings)},
              {"max_new_tokens", req.max_new_tokens},
              {"temperature", req.temperature},
              {"seed", req.sampling_seed}};
}

inline GenerationRequest parse_generation_request(const json& body) {
  try {
    GenerationRequest req;
    const auto rows = body.at("rows").get<std::size_t>();
    const auto cols = body.at("cols").get<std::size_t>();
    req.embeddings = decode_embeddings_f32(rows, cols, body.at("data_b64").get<std::string>());
    req.max_new_tokens = body.value("max_new_tokens", std::size_t{128});
    req.temperature = body.value("temperature", 0.1);
    req.sampling_seed = body.value("seed", std::uint64_t{0});
    req.validate();
    return req;
  } catch (const json::exception& e) {
    throw ProtocolError(std::string("malformed generation request: ") + e.what());
  } catch (const DimensionError& e) {
    throw ProtocolError(e.what());
  } catch (const ArgumentError& e) {
    throw ProtocolError(e.what());
  }
}

struct GenerationResponse {
  std::string text;
  std::size_t tokens_generated = 0;
};

inline GenerationResponse parse_generation_response(const json& body) {
  if (!body.is_object() || !body.contains("text") || !body["text"].is_string()) {
    throw ProtocolError("generation response lacks a text field");
  }
  GenerationResponse out;
  out.text = body["text"].get<std::string>();
  if (auto it = body.find("tokens_generated"); it != body.end()) {
    if (!it->is_number_unsigned() && !it->is_number_integer()) {
      throw ProtocolError("tokens_generated is not an integer");
    }
    out.tokens_generated = it->get<std::size_t>();
  }
  return out;
}

}  // namespace zosteer
