#pragma once

// Flat key-value configuration with one section per module:
//
//   [optimizer]
//   mu = 0.05
//   n_samples = 8
//
// Keys are addressed as "section.key". Every known key has a default, so the
// resolved configuration is always complete; unknown keys are rejected.

#include "zosteer/error.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>

namespace zosteer {

class Config {
 public:
  /// All known keys at their defaults.
  static Config defaults();

  static Config parse(std::istream& in, const std::string& source = "config") {
    Config c = defaults();
    c.merge_from(in, source);
    return c;
  }

  static Config load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    return parse(in, path);
  }

  void merge_from(std::istream& in, const std::string& source) {
    std::string line, section;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      const std::string t = trim(line);
      if (t.empty() || t.front() == '#' || t.front() == ';') continue;
      const auto where = source + ":" + std::to_string(line_no);
      if (t.front() == '[') {
        if (t.back() != ']' || t.size() < 3) throw ConfigError(where + ": malformed section header");
        section = trim(t.substr(1, t.size() - 2));
        continue;
      }
      const auto eq = t.find('=');
      if (eq == std::string::npos) throw ConfigError(where + ": expected key = value");
      const std::string key = trim(t.substr(0, eq));
      if (key.empty()) throw ConfigError(where + ": empty key");
      set(section.empty() ? key : section + "." + key, trim(t.substr(eq + 1)), where);
    }
  }

  /// Sets a known key; `origin` only flavours the error message.
  void set(const std::string& key, std::string value, const std::string& origin = "override") {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError(origin + ": unknown config key '" + key + "'");
    it->second = std::move(value);
  }

  /// "section.key=value" as given on the command line.
  void set_assignment(const std::string& kv) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("override '" + kv + "' is not key=value");
    set(trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
  }

  bool contains(const std::string& key) const { return values_.contains(key); }

  const std::string& str(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
    return it->second;
  }

  double real(const std::string& key) const {
    const auto& v = str(key);
    try {
      std::size_t used = 0;
      const double d = std::stod(v, &used);
      if (used != v.size()) throw std::invalid_argument(v);
      return d;
    } catch (const std::exception&) {
      throw ConfigError(key + ": '" + v + "' is not a number");
    }
  }

  std::uint64_t u64(const std::string& key) const {
    const auto& v = str(key);
    std::uint64_t out = 0;
    const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || p != v.data() + v.size()) throw ConfigError(key + ": '" + v + "' is not a count");
    return out;
  }

  std::size_t count(const std::string& key) const { return static_cast<std::size_t>(u64(key)); }

  bool flag(const std::string& key) const {
    const auto& v = str(key);
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ConfigError(key + ": '" + v + "' is not a boolean");
  }

  const std::map<std::string, std::string>& entries() const noexcept { return values_; }

  /// Resolved configuration in file syntax, sections and keys sorted.
  std::string dump() const {
    std::ostringstream out;
    std::string current;
    for (const auto& [key, value] : values_) {
      const auto dot = key.find('.');
      const std::string section = key.substr(0, dot);
      if (section != current) {
        if (!current.empty()) out << '\n';
        out << '[' << section << "]\n";
        current = section;
      }
      out << key.substr(dot + 1) << " = " << value << '\n';
    }
    return out.str();
  }

 private:
  static std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
  }

  std::map<std::string, std::string> values_;
};

inline Config Config::defaults() {
  Config c;
  c.values_ = {
      {"optimizer.mu", "0.05"},
      {"optimizer.n_samples", "8"},
      {"optimizer.eta", "1.0"},
      {"optimizer.kappa", "0.2"},
      {"optimizer.max_iters", "10"},
      {"optimizer.threshold", "0.1"},
      {"optimizer.seed", "0"},
      {"optimizer.use_surrogate", "false"},
      {"optimizer.surrogate_beta", "50"},
      {"optimizer.ascent_mode", "false"},
      {"optimizer.cosine_mode", "flattened"},
      {"optimizer.parallelism", "1"},
      {"run.trials", "3"},
      {"run.prompt_parallelism", "4"},
      {"run.max_new_tokens", "128"},
      {"run.temperature", "0.1"},
      {"run.persist_text", "false"},
      {"run.max_failure_fraction", "0.01"},
      {"dataset.path", ""},
      {"dataset.format", "auto"},
      {"dataset.id_field", "id"},
      {"dataset.text_field", "text"},
      {"dataset.split_field", "split"},
      {"dataset.token_ids_field", "token_ids"},
      {"dataset.default_split", "synthetic"},
      {"embeddings.table", ""},
      {"generation.url", "http://127.0.0.1:8000"},
      {"generation.path", "/generate"},
      {"generation.max_attempts", "3"},
      {"generation.backoff_base_ms", "500"},
      {"generation.timeout_s", "120"},
      {"moderation.url", "https://api.openai.com"},
      {"moderation.path", "/v1/moderations"},
      {"moderation.model", "omni-moderation-latest"},
      {"moderation.api_key_env", "OPENAI_API_KEY"},
      {"moderation.rate_limit_rps", "20"},
      {"moderation.rate_limit_burst", "20"},
      {"moderation.max_attempts", "5"},
      {"moderation.backoff_base_ms", "250"},
      {"moderation.timeout_s", "30"},
      {"mock.generator_mode", "synthetic"},
      {"mock.harm_model", ""},
      {"mock.lexicon", ""},
  };
  for (auto label : {"harassment", "harassment/threatening", "hate", "hate/threatening", "illicit",
                     "illicit/violent", "self-harm", "self-harm/intent", "self-harm/instructions", "sexual",
                     "sexual/minors", "violence", "violence/graphic"}) {
    c.values_[std::string("moderation.label.") + label] = label;
  }
  return c;
}

}  // namespace zosteer
