#pragma once

// In-process stand-ins for the two services, speaking the same JSON wire
// protocol as the real endpoints. Wrap them in a HandlerTransport to run the
// full client stack without a network.
//
// MockGenerator
//   echo mode       decodes the embeddings to their nearest tokens and returns
//                   the token labels joined by spaces.
//   synthetic mode  scores the embeddings with a planted linear harm model and
//                   emits graded lexicon terms whose weights reproduce the
//                   model's probability through the lexicon oracle.
// LexiconModerationService
//   scores text with lexicon_mock_oracle, optionally failing on demand.

#include "zosteer/clients.hpp"
#include "zosteer/embed_store.hpp"
#include "zosteer/error.hpp"
#include "zosteer/objective.hpp"
#include "zosteer/wire.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <memory>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace zosteer {

/// One harm channel: logit z = gain * sum_i <w, x_i> / sqrt(T) + offset.
struct HarmChannel {
  Category category = Category::violence;
  std::string stem;               // lexicon term prefix, e.g. "viol"
  std::vector<double> direction;  // unit vector in R^d
  double offset = -4.0;
};

/// Linear-logistic harm model behind the synthetic generator. Probabilities are
/// carried to the oracle by lexicon terms on a geometric weight grid:
/// level L has weight min_weight * grid_ratio^L.
struct SyntheticHarmModel {
  std::size_t dim = 0;
  double gain = 20.0;
  double noise_scale = 1.0;  // logit noise is temperature * noise_scale * N(0,1)
  double min_weight = 1e-4;
  double grid_ratio = 1.01;
  std::size_t max_level = 1200;
  std::vector<HarmChannel> channels;

  void validate() const {
    if (dim == 0) throw ConfigError("harm model dim must be >= 1");
    if (channels.empty()) throw ConfigError("harm model needs at least one channel");
    if (!(min_weight > 0.0) || !(grid_ratio > 1.0)) throw ConfigError("bad harm model weight grid");
    for (const auto& ch : channels) {
      if (ch.direction.size() != dim) throw ConfigError("harm channel direction has wrong dimension");
      if (ch.stem.empty()) throw ConfigError("harm channel needs a term stem");
    }
  }

  /// Noise-free logits.
  std::vector<double> logits(const EmbeddingMatrix& x) const {
    if (x.cols() != dim) {
      throw DimensionError("embedding dim " + std::to_string(x.cols()) + " != model dim " + std::to_string(dim));
    }
    std::vector<double> z;
    const double scale = gain / std::sqrt(static_cast<double>(x.rows()));
    for (const auto& ch : channels) {
      double acc = 0.0;
      for (std::size_t i = 0; i < x.rows(); ++i) {
        const auto r = x.row(i);
        for (std::size_t c = 0; c < dim; ++c) acc += r[c] * ch.direction[c];
      }
      z.push_back(scale * acc + ch.offset);
    }
    return z;
  }

  std::vector<double> probabilities(const EmbeddingMatrix& x, double temperature = 0.0,
                                    std::uint64_t seed = 0) const {
    auto z = logits(x);
    double eps = 0.0;
    if (temperature > 0.0 && noise_scale > 0.0) {
      std::mt19937_64 rng(seed);
      eps = std::normal_distribution<double>(0.0, 1.0)(rng) * temperature * noise_scale;
    }
    for (double& v : z) v = logistic(v + eps);
    return z;
  }

  double level_weight(std::size_t level) const {
    return min_weight * std::pow(grid_ratio, static_cast<double>(level));
  }

  /// Grid level whose weight best encodes probability p; none when p is negligible.
  std::optional<std::size_t> level_for(double p) const {
    if (!(p > 0.0)) return std::nullopt;
    const double w = p >= 1.0 ? level_weight(max_level) : -std::log1p(-p);
    if (w < min_weight / std::sqrt(grid_ratio)) return std::nullopt;
    const double l = std::round(std::log(w / min_weight) / std::log(grid_ratio));
    return static_cast<std::size_t>(std::clamp(l, 0.0, static_cast<double>(max_level)));
  }

  std::string term(std::size_t channel, std::size_t level) const {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04zu", level);
    return channels.at(channel).stem + "_" + buf;
  }

  /// Every graded term as lexicon TSV lines.
  std::string lexicon_tsv() const {
    std::ostringstream out;
    out.precision(17);
    out << "# graded terms for the synthetic harm model\n";
    for (std::size_t c = 0; c < channels.size(); ++c) {
      for (std::size_t l = 0; l <= max_level; ++l) {
        out << category_label(channels[c].category) << '\t' << term(c, l) << '\t' << level_weight(l) << '\n';
      }
    }
    return out.str();
  }

  Lexicon lexicon() const {
    std::istringstream in(lexicon_tsv());
    return load_lexicon(in);
  }

  json to_json() const {
    json chans = json::array();
    for (const auto& ch : channels) {
      chans.push_back({{"category", std::string(category_label(ch.category))},
                       {"stem", ch.stem},
                       {"offset", ch.offset},
                       {"direction", ch.direction}});
    }
    return json{{"dim", dim},
                {"gain", gain},
                {"noise_scale", noise_scale},
                {"min_weight", min_weight},
                {"grid_ratio", grid_ratio},
                {"max_level", max_level},
                {"channels", chans}};
  }

  static SyntheticHarmModel from_json(const json& j) {
    SyntheticHarmModel m;
    try {
      m.dim = j.at("dim").get<std::size_t>();
      m.gain = j.at("gain").get<double>();
      m.noise_scale = j.value("noise_scale", 1.0);
      m.min_weight = j.value("min_weight", 1e-4);
      m.grid_ratio = j.value("grid_ratio", 1.01);
      m.max_level = j.value("max_level", std::size_t{1200});
      for (const auto& c : j.at("channels")) {
        HarmChannel ch;
        const auto label = c.at("category").get<std::string>();
        const auto cat = parse_category(label);
        if (!cat) throw ConfigError("harm model: unknown category '" + label + "'");
        ch.category = *cat;
        ch.stem = c.at("stem").get<std::string>();
        ch.offset = c.at("offset").get<double>();
        ch.direction = c.at("direction").get<std::vector<double>>();
        m.channels.push_back(std::move(ch));
      }
    } catch (const json::exception& e) {
      throw ConfigError(std::string("harm model: ") + e.what());
    }
    m.validate();
    return m;
  }
};

inline SyntheticHarmModel load_harm_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open harm model " + path);
  try {
    return SyntheticHarmModel::from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw ConfigError("harm model " + path + ": " + e.what());
  }
}

namespace detail {

inline HttpResponse json_response(int status, const json& body) { return {status, body.dump(), {}}; }

inline HttpResponse error_response(int status, const std::string& message) {
  return json_response(status, json{{"error", message}});
}

}  // namespace detail

class MockGenerator {
 public:
  enum class Mode { echo, synthetic_harm };

  static MockGenerator echo(std::shared_ptr<const EmbeddingTable> table) {
    if (!table || !table->has_labels()) throw ConfigError("echo generator needs a labelled table");
    MockGenerator g;
    g.mode_ = Mode::echo;
    g.table_ = std::move(table);
    return g;
  }

  static MockGenerator synthetic(SyntheticHarmModel model) {
    model.validate();
    MockGenerator g;
    g.mode_ = Mode::synthetic_harm;
    g.model_ = std::make_shared<const SyntheticHarmModel>(std::move(model));
    return g;
  }

  Mode mode() const noexcept { return mode_; }

  /// Direct call, bypassing the wire.
  GenerationResponse generate(const GenerationRequest& req) const {
    std::vector<std::string> words;
    if (mode_ == Mode::echo) {
      for (std::size_t id : nearest_token_decode(req.embeddings, *table_)) words.push_back(table_->label(id));
    } else {
      const auto p = model_->probabilities(req.embeddings, req.temperature, req.sampling_seed);
      words = {"here", "is", "my", "answer"};
      for (std::size_t c = 0; c < p.size(); ++c) {
        if (auto level = model_->level_for(p[c])) words.push_back(model_->term(c, *level));
      }
    }
    if (words.size() > req.max_new_tokens) words.resize(req.max_new_tokens);
    std::string text;
    for (const auto& w : words) text += (text.empty() ? "" : " ") + w;
    return {text, words.size()};
  }

  /// Wire handler: POST generation JSON -> {text, tokens_generated}.
  HttpResponse handle(const std::string& /*path*/, const std::string& body) const {
    GenerationRequest req;
    try {
      req = parse_generation_request(json::parse(body));
    } catch (const json::exception& e) {
      return detail::error_response(400, e.what());
    } catch (const ProtocolError& e) {
      return detail::error_response(400, e.what());
    }
    const std::size_t expected = mode_ == Mode::echo ? table_->dim() : model_->dim;
    if (req.embeddings.cols() != expected) {
      return detail::error_response(400, "embedding dim " + std::to_string(req.embeddings.cols()) +
                                             " does not match model dim " + std::to_string(expected));
    }
    const auto out = generate(req);
    return detail::json_response(200, json{{"text", out.text}, {"tokens_generated", out.tokens_generated}});
  }

  HandlerTransport::Handler handler() const {
    return [self = *this](const std::string& path, const std::string& body) { return self.handle(path, body); };
  }

 private:
  MockGenerator() = default;

  Mode mode_ = Mode::echo;
  std::shared_ptr<const EmbeddingTable> table_;
  std::shared_ptr<const SyntheticHarmModel> model_;
};

class LexiconModerationService {
 public:
  /// Returns true when the request should fail with HTTP 500.
  using FailurePredicate = std::function<bool(const std::string& text)>;

  explicit LexiconModerationService(std::shared_ptr<const Lexicon> lexicon, FailurePredicate fail = {})
      : lexicon_(std::move(lexicon)), fail_(std::move(fail)) {
    if (!lexicon_) throw ConfigError("moderation mock needs a lexicon");
  }

  HttpResponse handle(const std::string& /*path*/, const std::string& body) const {
    json req;
    try {
      req = json::parse(body);
    } catch (const json::exception& e) {
      return detail::error_response(400, e.what());
    }
    if (!req.is_object() || !req.contains("input")) return detail::error_response(400, "missing input");
    std::vector<std::string> inputs;
    const json& in = req["input"];
    if (in.is_string()) {
      inputs.push_back(in.get<std::string>());
    } else if (in.is_array()) {
      for (const auto& v : in) {
        if (!v.is_string()) return detail::error_response(400, "input entries must be strings");
        inputs.push_back(v.get<std::string>());
      }
    } else {
      return detail::error_response(400, "input must be a string or an array of strings");
    }
    json results = json::array();
    for (const auto& text : inputs) {
      if (fail_ && fail_(text)) return detail::error_response(500, "injected failure");
      results.push_back(moderation_result_json(lexicon_mock_oracle(text, *lexicon_)));
    }
    return detail::json_response(200, json{{"results", results}});
  }

  HandlerTransport::Handler handler() const {
    return [self = *this](const std::string& path, const std::string& body) { return self.handle(path, body); };
  }

 private:
  std::shared_ptr<const Lexicon> lexicon_;
  FailurePredicate fail_;
};

}  // namespace zosteer
