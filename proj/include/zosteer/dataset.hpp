#pragma once

// Benchmark prompt files.
//
// JSONL: one object per line. TSV: a header row naming the columns, then one
// record per row; token ids are space-separated integers. Field names are set
// through ColumnMapping. Records are kept verbatim apart from UTF-8 validation.

#include "zosteer/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

namespace zosteer {

enum class Split { adversarial_harmful, adversarial_benign, direct_harmful, synthetic };

inline const char* split_name(Split s) {
  switch (s) {
    case Split::adversarial_harmful: return "adversarial_harmful";
    case Split::adversarial_benign: return "adversarial_benign";
    case Split::direct_harmful: return "direct_harmful";
    case Split::synthetic: return "synthetic";
  }
  return "?";
}

inline std::optional<Split> parse_split(std::string_view name) {
  for (Split s : {Split::adversarial_harmful, Split::adversarial_benign, Split::direct_harmful, Split::synthetic}) {
    if (name == split_name(s)) return s;
  }
  return std::nullopt;
}

struct PromptRecord {
  std::string id;
  Split split = Split::synthetic;
  std::string text;
  std::optional<std::vector<std::size_t>> token_ids;

  friend bool operator==(const PromptRecord&, const PromptRecord&) = default;
};

struct ColumnMapping {
  std::string id = "id";
  std::string text = "text";
  std::string split = "split";
  std::string token_ids = "token_ids";
};

enum class DatasetFormat { jsonl, tsv };

inline std::optional<DatasetFormat> parse_dataset_format(std::string_view s) {
  if (s == "jsonl") return DatasetFormat::jsonl;
  if (s == "tsv") return DatasetFormat::tsv;
  return std::nullopt;
}

/// Format from the file extension; jsonl unless it ends in .tsv.
inline DatasetFormat guess_dataset_format(std::string_view path) {
  return path.size() >= 4 && path.substr(path.size() - 4) == ".tsv" ? DatasetFormat::tsv : DatasetFormat::jsonl;
}

inline bool valid_utf8(std::string_view s) {
  std::size_t i = 0;
  while (i < s.size()) {
    const auto c = static_cast<unsigned char>(s[i]);
    std::size_t len = 0;
    std::uint32_t cp = 0;
    if (c < 0x80) {
      ++i;
      continue;
    } else if ((c & 0xE0) == 0xC0) {
      len = 2;
      cp = c & 0x1F;
    } else if ((c & 0xF0) == 0xE0) {
      len = 3;
      cp = c & 0x0F;
    } else if ((c & 0xF8) == 0xF0) {
      len = 4;
      cp = c & 0x07;
    } else {
      return false;
    }
    if (i + len > s.size()) return false;
    for (std::size_t k = 1; k < len; ++k) {
      const auto cc = static_cast<unsigned char>(s[i + k]);
      if ((cc & 0xC0) != 0x80) return false;
      cp = (cp << 6) | (cc & 0x3F);
    }
    // overlong forms, surrogates, out of range
    if ((len == 2 && cp < 0x80) || (len == 3 && cp < 0x800) || (len == 4 && cp < 0x10000)) return false;
    if ((cp >= 0xD800 && cp <= 0xDFFF) || cp > 0x10FFFF) return false;
    i += len;
  }
  return true;
}

namespace detail {

inline DatasetError line_error(std::size_t line_no, const std::string& what) {
  return DatasetError("line " + std::to_string(line_no) + ": " + what);
}

inline std::vector<std::size_t> parse_token_list(const std::string& s, std::size_t line_no) {
  std::vector<std::size_t> out;
  std::istringstream in(s);
  std::string tok;
  while (in >> tok) {
    if (tok.find_first_not_of("0123456789") != std::string::npos) {
      throw line_error(line_no, "token id '" + tok + "' is not a non-negative integer");
    }
    try {
      out.push_back(std::stoull(tok));
    } catch (const std::out_of_range&) {
      throw line_error(line_no, "token id '" + tok + "' out of range");
    }
  }
  return out;
}

inline std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const auto tab = line.find('\t', start);
    out.push_back(line.substr(start, tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  return out;
}

inline void finish_record(PromptRecord& r, std::size_t line_no, std::unordered_set<std::string>& seen) {
  if (r.id.empty()) throw line_error(line_no, "empty id");
  if (!valid_utf8(r.id) || !valid_utf8(r.text)) throw line_error(line_no, "invalid UTF-8");
  if (r.text.empty() && (!r.token_ids || r.token_ids->empty())) {
    throw line_error(line_no, "record has neither text nor token ids");
  }
  if (!seen.insert(r.id).second) throw line_error(line_no, "duplicate id '" + r.id + "'");
}

inline Split parse_split_field(const std::string& v, std::size_t line_no) {
  const auto s = parse_split(v);
  if (!s) throw line_error(line_no, "unknown split '" + v + "'");
  return *s;
}

}  // namespace detail

inline std::vector<PromptRecord> parse_dataset(std::istream& in, DatasetFormat format,
                                               const ColumnMapping& cols = {},
                                               Split default_split = Split::synthetic) {
  std::vector<PromptRecord> out;
  std::unordered_set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;

  if (format == DatasetFormat::jsonl) {
    while (std::getline(in, line)) {
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.find_first_not_of(" \t") == std::string::npos) continue;
      if (!valid_utf8(line)) throw detail::line_error(line_no, "invalid UTF-8");
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(line);
      } catch (const nlohmann::json::exception& e) {
        throw detail::line_error(line_no, std::string("malformed JSON: ") + e.what());
      }
      if (!j.is_object()) throw detail::line_error(line_no, "expected a JSON object");
      PromptRecord r;
      r.split = default_split;
      auto id = j.find(cols.id);
      if (id == j.end()) throw detail::line_error(line_no, "missing field '" + cols.id + "'");
      if (id->is_string()) r.id = id->get<std::string>();
      else if (id->is_number_integer()) r.id = id->dump();
      else throw detail::line_error(line_no, "field '" + cols.id + "' must be a string or integer");
      if (auto t = j.find(cols.text); t != j.end() && !t->is_null()) {
        if (!t->is_string()) throw detail::line_error(line_no, "field '" + cols.text + "' must be a string");
        r.text = t->get<std::string>();
      }
      if (auto s = j.find(cols.split); s != j.end() && !s->is_null()) {
        if (!s->is_string()) throw detail::line_error(line_no, "field '" + cols.split + "' must be a string");
        r.split = detail::parse_split_field(s->get<std::string>(), line_no);
      }
      if (auto ids = j.find(cols.token_ids); ids != j.end() && !ids->is_null()) {
        if (!ids->is_array()) throw detail::line_error(line_no, "field '" + cols.token_ids + "' must be an array");
        std::vector<std::size_t> v;
        for (const auto& e : *ids) {
          if (!e.is_number_unsigned()) throw detail::line_error(line_no, "token ids must be non-negative integers");
          v.push_back(e.get<std::size_t>());
        }
        r.token_ids = std::move(v);
      }
      detail::finish_record(r, line_no, seen);
      out.push_back(std::move(r));
    }
    return out;
  }

  std::vector<std::string> header;
  int id_col = -1, text_col = -1, split_col = -1, ids_col = -1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (header.empty()) {
      if (line.empty()) continue;
      header = detail::split_tabs(line);
      for (std::size_t c = 0; c < header.size(); ++c) {
        if (header[c] == cols.id) id_col = static_cast<int>(c);
        if (header[c] == cols.text) text_col = static_cast<int>(c);
        if (header[c] == cols.split) split_col = static_cast<int>(c);
        if (header[c] == cols.token_ids) ids_col = static_cast<int>(c);
      }
      if (id_col < 0) throw detail::line_error(line_no, "header has no '" + cols.id + "' column");
      if (text_col < 0 && ids_col < 0) {
        throw detail::line_error(line_no, "header has neither '" + cols.text + "' nor '" + cols.token_ids + "'");
      }
      continue;
    }
    if (line.empty()) continue;
    if (!valid_utf8(line)) throw detail::line_error(line_no, "invalid UTF-8");
    const auto fields = detail::split_tabs(line);
    if (fields.size() != header.size()) {
      throw detail::line_error(line_no, "expected " + std::to_string(header.size()) + " fields, got " +
                                            std::to_string(fields.size()));
    }
    PromptRecord r;
    r.split = default_split;
    r.id = fields[id_col];
    if (text_col >= 0) r.text = fields[text_col];
    if (split_col >= 0 && !fields[split_col].empty()) r.split = detail::parse_split_field(fields[split_col], line_no);
    if (ids_col >= 0 && !fields[ids_col].empty()) r.token_ids = detail::parse_token_list(fields[ids_col], line_no);
    detail::finish_record(r, line_no, seen);
    out.push_back(std::move(r));
  }
  return out;
}

inline std::vector<PromptRecord> ingest_dataset(const std::string& path, DatasetFormat format,
                                                const ColumnMapping& cols = {},
                                                Split default_split = Split::synthetic) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DatasetError("cannot open dataset " + path);
  try {
    return parse_dataset(in, format, cols, default_split);
  } catch (const DatasetError& e) {
    throw DatasetError(path + ": " + e.what());
  }
}

inline std::string format_dataset_jsonl(const std::vector<PromptRecord>& records) {
  std::string out;
  for (const auto& r : records) {
    nlohmann::json j{{"id", r.id}, {"split", split_name(r.split)}, {"text", r.text}};
    if (r.token_ids) j["token_ids"] = *r.token_ids;
    out += j.dump() + "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Length statistics
// ---------------------------------------------------------------------------

/// Whitespace-separated word count; the tokenization proxy for dataset stats.
inline std::size_t whitespace_token_count(std::string_view text) {
  std::size_t n = 0;
  bool in_word = false;
  for (unsigned char c : text) {
    const bool space = c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
    if (!space && !in_word) ++n;
    in_word = !space;
  }
  return n;
}

/// Length used for statistics: whitespace tokens of the text, or the token id
/// count for records without text.
inline std::size_t record_length(const PromptRecord& r) {
  if (!r.text.empty()) return whitespace_token_count(r.text);
  return r.token_ids ? r.token_ids->size() : 0;
}

struct DatasetStats {
  std::size_t count = 0;
  std::size_t max_tokens = 0;
  std::size_t min_tokens = 0;
  double mean_tokens = 0.0;
  double median_tokens = 0.0;
};

inline DatasetStats dataset_stats(const std::vector<PromptRecord>& records) {
  DatasetStats s;
  s.count = records.size();
  if (records.empty()) return s;
  std::vector<std::size_t> lens;
  lens.reserve(records.size());
  for (const auto& r : records) lens.push_back(record_length(r));
  std::sort(lens.begin(), lens.end());
  s.min_tokens = lens.front();
  s.max_tokens = lens.back();
  double sum = 0.0;
  for (auto l : lens) sum += static_cast<double>(l);
  s.mean_tokens = sum / static_cast<double>(lens.size());
  const std::size_t m = lens.size() / 2;
  s.median_tokens = lens.size() % 2 ? static_cast<double>(lens[m])
                                    : 0.5 * static_cast<double>(lens[m - 1] + lens[m]);
  return s;
}

}  // namespace zosteer
