#pragma once

/**
 * Input embedding tables: loading, token lookup and nearest-token decoding.
 *
 * Text format:   first line "vocab_size dim", then one row per line of
 *                space-separated reals, optionally followed by a TAB and a label.
 * Binary format: 16-byte header (8-byte magic "ZSEMBF32", u32 vocab_size,
 *                u32 dim, little-endian) followed by vocab_size*dim f32 LE.
 */

#include "zosteer/error.hpp"
#include "zosteer/tensor.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

namespace zosteer {

class EmbeddingTable {
 public:
  EmbeddingTable() = default;

  EmbeddingTable(std::size_t vocab_size, std::size_t dim, std::vector<double> vectors,
                 std::vector<std::string> labels = {})
      : vocab_size_(vocab_size), dim_(dim), vectors_(std::move(vectors)), labels_(std::move(labels)) {
    if (vocab_size_ < 2) throw DimensionError("embedding table needs at least 2 rows");
    if (dim_ < 1) throw DimensionError("embedding dimension must be >= 1");
    if (vectors_.size() != vocab_size_ * dim_) throw DimensionError("table data size mismatch");
    for (double v : vectors_) {
      if (!std::isfinite(v)) throw ArgumentError("embedding table contains non-finite values");
    }
    if (!labels_.empty() && labels_.size() != vocab_size_) {
      throw DimensionError("label count does not match vocabulary size");
    }
  }

  std::size_t vocab_size() const noexcept { return vocab_size_; }
  std::size_t dim() const noexcept { return dim_; }
  bool has_labels() const noexcept { return !labels_.empty(); }
  const std::vector<std::string>& labels() const noexcept { return labels_; }

  std::span<const double> row(std::size_t id) const { return {vectors_.data() + id * dim_, dim_}; }
  std::span<const double> data() const noexcept { return vectors_; }

  const std::string& label(std::size_t id) const {
    if (!has_labels()) throw LookupError("table carries no token labels");
    if (id >= vocab_size_) throw LookupError("token id " + std::to_string(id) + " out of range");
    return labels_[id];
  }

 private:
  std::size_t vocab_size_ = 0;
  std::size_t dim_ = 0;
  std::vector<double> vectors_;
  std::vector<std::string> labels_;
};

/// Row i of the result is table row ids[i].
inline EmbeddingMatrix embed_tokens(std::span<const std::size_t> ids, const EmbeddingTable& table) {
  if (ids.empty()) throw DimensionError("cannot embed an empty token sequence");
  std::vector<double> data;
  data.reserve(ids.size() * table.dim());
  for (std::size_t id : ids) {
    if (id >= table.vocab_size()) {
      throw LookupError("token id " + std::to_string(id) + " outside vocabulary of " +
                        std::to_string(table.vocab_size()));
    }
    const auto r = table.row(id);
    data.insert(data.end(), r.begin(), r.end());
  }
  return EmbeddingMatrix(ids.size(), table.dim(), std::move(data));
}

/// Nearest vocabulary row (Euclidean) for every row of x; smallest id on ties.
inline std::vector<std::size_t> nearest_token_decode(const EmbeddingMatrix& x,
                                                     const EmbeddingTable& table) {
  if (x.cols() != table.dim()) {
    throw DimensionError("embedding dim " + std::to_string(x.cols()) + " != table dim " +
                         std::to_string(table.dim()));
  }
  std::vector<std::size_t> out(x.rows());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const auto xi = x.row(i);
    double best = std::numeric_limits<double>::infinity();
    std::size_t best_id = 0;
    for (std::size_t j = 0; j < table.vocab_size(); ++j) {
      const auto v = table.row(j);
      double d2 = 0.0;
      for (std::size_t c = 0; c < xi.size(); ++c) {
        const double diff = xi[c] - v[c];
        d2 += diff * diff;
      }
      if (d2 < best) {
        best = d2;
        best_id = j;
      }
    }
    out[i] = best_id;
  }
  return out;
}

// ---------------------------------------------------------------------------
// File formats
// ---------------------------------------------------------------------------

inline constexpr std::array<char, 8> kTableMagic = {'Z', 'S', 'E', 'M', 'B', 'F', '3', '2'};

namespace detail {

inline std::uint32_t read_u32_le(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline void write_u32_le(std::string& out, std::uint32_t v) {
  for (int s = 0; s < 32; s += 8) out.push_back(static_cast<char>((v >> s) & 0xff));
}

inline float f32_from_le(const unsigned char* p) {
  return std::bit_cast<float>(read_u32_le(p));
}

inline void append_f32_le(std::string& out, float f) {
  write_u32_le(out, std::bit_cast<std::uint32_t>(f));
}

}  // namespace detail

inline EmbeddingTable parse_table_text(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  std::size_t vocab = 0, dim = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream hs(line);
    if (!(hs >> vocab >> dim)) throw ConfigError("table header must be 'vocab_size dim'");
    break;
  }
  if (vocab == 0) throw ConfigError("embedding table file is empty");

  std::vector<double> values;
  values.reserve(vocab * dim);
  std::vector<std::string> labels;
  for (std::size_t r = 0; r < vocab; ++r) {
    if (!std::getline(in, line)) {
      throw ConfigError("table ends after " + std::to_string(r) + " of " + std::to_string(vocab) + " rows");
    }
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::string label;
    const auto tab = line.find('\t');
    if (tab != std::string::npos) {
      label = line.substr(tab + 1);
      line.resize(tab);
    }
    std::istringstream rs(line);
    std::size_t count = 0;
    double v = 0.0;
    while (rs >> v) {
      if (!std::isfinite(v)) throw ConfigError("non-finite value on line " + std::to_string(line_no));
      values.push_back(v);
      ++count;
    }
    if (!rs.eof() || count != dim) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected " + std::to_string(dim) +
                        " values");
    }
    if (tab != std::string::npos) labels.push_back(std::move(label));
  }
  if (!labels.empty() && labels.size() != vocab) {
    throw ConfigError("labels must be given for all rows or none");
  }
  return EmbeddingTable(vocab, dim, std::move(values), std::move(labels));
}

inline EmbeddingTable parse_table_binary(const std::string& bytes) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kTableMagic.data(), 8) != 0) {
    throw ConfigError("not a binary embedding table");
  }
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::size_t vocab = detail::read_u32_le(p + 8);
  const std::size_t dim = detail::read_u32_le(p + 12);
  if (bytes.size() != 16 + vocab * dim * 4) throw ConfigError("binary table size does not match header");
  std::vector<double> values(vocab * dim);
  for (std::size_t k = 0; k < values.size(); ++k) {
    const float f = detail::f32_from_le(p + 16 + 4 * k);
    if (!std::isfinite(f)) throw ConfigError("binary table contains non-finite values");
    values[k] = f;
  }
  return EmbeddingTable(vocab, dim, std::move(values));
}

/// Picks the format from the leading magic.
inline EmbeddingTable load_table(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open embedding table " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() >= 8 && std::memcmp(bytes.data(), kTableMagic.data(), 8) == 0) {
    return parse_table_binary(bytes);
  }
  std::istringstream text(bytes);
  return parse_table_text(text);
}

inline std::string format_table_text(const EmbeddingTable& t) {
  std::ostringstream out;
  out.precision(17);
  out << t.vocab_size() << ' ' << t.dim() << '\n';
  for (std::size_t r = 0; r < t.vocab_size(); ++r) {
    const auto row = t.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) out << (c ? " " : "") << row[c];
    if (t.has_labels()) out << '\t' << t.labels()[r];
    out << '\n';
  }
  return out.str();
}

inline std::string format_table_binary(const EmbeddingTable& t) {
  std::string out(kTableMagic.begin(), kTableMagic.end());
  detail::write_u32_le(out, static_cast<std::uint32_t>(t.vocab_size()));
  detail::write_u32_le(out, static_cast<std::uint32_t>(t.dim()));
  out.reserve(16 + t.data().size() * 4);
  for (double v : t.data()) detail::append_f32_le(out, static_cast<float>(v));
  return out;
}

inline void save_table(const EmbeddingTable& t, const std::string& path, bool binary = false) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write embedding table " + path);
  out << (binary ? format_table_binary(t) : format_table_text(t));
  if (!out) throw ConfigError("write failed for " + path);
}

}  // namespace zosteer
