#pragma once

// Builds the generate-then-moderate objective from configuration and the
// chosen transports: in-process mocks, live HTTP, fixture replay, or live/mock
// traffic recorded into a fixture file.

#include "zosteer/clients.hpp"
#include "zosteer/config.hpp"
#include "zosteer/embed_store.hpp"
#include "zosteer/error.hpp"
#include "zosteer/mock.hpp"

#include <cstdlib>
#include <memory>
#include <string>

namespace zosteer {

struct ServiceSelection {
  bool mock_generator = false;
  bool mock_oracle = false;
  bool live = false;           // network access for anything not mocked
  std::string replay_fixture;  // answer everything not mocked from this file
  std::string record_fixture;  // append successful exchanges to this file
};

inline CategoryMapping category_mapping_from(const Config& c) {
  CategoryMapping m;
  for (Category cat : all_categories()) {
    m.set(cat, c.str("moderation.label." + std::string(category_label(cat))));
  }
  m.validate();
  return m;
}

inline MockGenerator mock_generator_from(const Config& c, std::shared_ptr<const EmbeddingTable> table) {
  const auto& mode = c.str("mock.generator_mode");
  if (mode == "echo") {
    if (!table) throw ConfigError("echo generator needs embeddings.table");
    return MockGenerator::echo(std::move(table));
  }
  if (mode != "synthetic") throw ConfigError("mock.generator_mode must be synthetic or echo");
  const auto& path = c.str("mock.harm_model");
  if (path.empty()) throw ConfigError("synthetic mock generator needs mock.harm_model");
  return MockGenerator::synthetic(load_harm_model(path));
}

namespace detail {

inline std::shared_ptr<Transport> pick_transport(bool mocked, HandlerTransport::Handler mock_handler,
                                                 const ServiceSelection& sel, const std::string& url,
                                                 std::size_t timeout_s, const char* what,
                                                 const std::shared_ptr<FixtureWriter>& recorder) {
  std::shared_ptr<Transport> t;
  if (mocked) {
    t = std::make_shared<HandlerTransport>(std::move(mock_handler));
  } else if (!sel.replay_fixture.empty()) {
    return std::make_shared<ReplayTransport>(sel.replay_fixture);
  } else if (sel.live) {
    t = std::make_shared<HttpTransport>(url, std::chrono::seconds(timeout_s));
  } else {
    throw ConfigError(std::string("no ") + what + " selected: use the mock, --live, or a replay fixture");
  }
  if (recorder) t = std::make_shared<RecordingTransport>(t, recorder);
  return t;
}

}  // namespace detail

/// `table` is only needed by the echo generator.
inline PipelineObjective build_pipeline(const Config& c, const ServiceSelection& sel,
                                        std::shared_ptr<const EmbeddingTable> table = nullptr,
                                        bool keep_response = false) {
  std::shared_ptr<FixtureWriter> recorder;
  if (!sel.record_fixture.empty()) recorder = std::make_shared<FixtureWriter>(sel.record_fixture);

  HandlerTransport::Handler gen_handler;
  if (sel.mock_generator) gen_handler = mock_generator_from(c, table).handler();
  HandlerTransport::Handler mod_handler;
  if (sel.mock_oracle) {
    const auto& lex = c.str("mock.lexicon");
    if (lex.empty()) throw ConfigError("mock oracle needs mock.lexicon");
    mod_handler = LexiconModerationService(std::make_shared<const Lexicon>(load_lexicon_file(lex))).handler();
  }

  auto gen_transport = detail::pick_transport(sel.mock_generator, gen_handler, sel, c.str("generation.url"),
                                              c.count("generation.timeout_s"), "generator", recorder);
  auto mod_transport = detail::pick_transport(sel.mock_oracle, mod_handler, sel, c.str("moderation.url"),
                                              c.count("moderation.timeout_s"), "moderation oracle", recorder);

  GenerationOptions gopts;
  gopts.path = c.str("generation.path");
  gopts.retry.max_attempts = c.count("generation.max_attempts");
  gopts.retry.backoff_base_ms = c.count("generation.backoff_base_ms");

  ModerationOptions mopts;
  mopts.path = c.str("moderation.path");
  mopts.mapping = category_mapping_from(c);
  mopts.retry.max_attempts = c.count("moderation.max_attempts");
  mopts.retry.backoff_base_ms = c.count("moderation.backoff_base_ms");
  // Only live traffic carries credentials and the provider's model field; mock
  // and replay requests must hash identically whatever the environment holds.
  const bool live_oracle = !sel.mock_oracle && sel.replay_fixture.empty() && sel.live;
  if (live_oracle) {
    mopts.api_key_env = c.str("moderation.api_key_env");
    if (!mopts.api_key_env.empty()) {
      const char* key = std::getenv(mopts.api_key_env.c_str());
      if (!key || !*key) throw ConfigError("environment variable " + mopts.api_key_env + " is not set");
    }
    mopts.model = c.str("moderation.model");
    mopts.rate_limit_rps = c.real("moderation.rate_limit_rps");
    mopts.rate_limit_burst = c.real("moderation.rate_limit_burst");
  } else {
    mopts.rate_limit_rps = 0.0;
  }

  GenerationParams params;
  params.max_new_tokens = c.count("run.max_new_tokens");
  params.temperature = c.real("run.temperature");

  return PipelineObjective(std::make_shared<GenerationClient>(gen_transport, gopts),
                           std::make_shared<ModerationClient>(mod_transport, mopts), params, keep_response);
}

}  // namespace zosteer
