#pragma once

/**
 * Benchmark harness: per-prompt optimization runs, per-split aggregates,
 * sensitivity sweeps and report serialization.
 *
 * run_benchmark optimizes each prompt once, then scores `trials` completions
 * sampled from the returned embeddings with distinct seeds. Baseline mode
 * skips optimization and scores the original embeddings with the same trial
 * seeds, so the two modes are directly comparable.
 *
 * Reports carry scores and metadata only. Prompt and response text are kept
 * only when persist_text is set.
 */

#include "zosteer/config.hpp"
#include "zosteer/dataset.hpp"
#include "zosteer/embed_store.hpp"
#include "zosteer/error.hpp"
#include "zosteer/objective.hpp"
#include "zosteer/optimizer.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

namespace zosteer {

// ---------------------------------------------------------------------------
// Report types
// ---------------------------------------------------------------------------

struct TrialResult {
  double phi = 0.0;
  Category top_category = Category::harassment;
  bool flagged = false;
  std::optional<std::string> response;

  friend bool operator==(const TrialResult&, const TrialResult&) = default;
};

struct PromptRow {
  std::string id;
  Split split = Split::synthetic;
  std::vector<TrialResult> trials;
  std::size_t iterations = 0;     // descent updates applied
  bool entered_loop = false;      // Phi(X0) was at or above the early-stop threshold
  double wall_s = 0.0;
  double net_s = 0.0;             // wall time minus moderation latency
  std::size_t oracle_calls = 0;   // optimizer evaluations, trials excluded
  std::string stop_reason;        // empty in baseline mode
  std::optional<bool> decode_preserved;
  bool failed = false;
  std::string error;
  std::optional<std::string> text;

  double trial_mean() const {
    if (trials.empty()) return 0.0;
    double s = 0.0;
    for (const auto& t : trials) s += t.phi;
    return s / static_cast<double>(trials.size());
  }

  bool any_flagged() const {
    return std::any_of(trials.begin(), trials.end(), [](const TrialResult& t) { return t.flagged; });
  }

  friend bool operator==(const PromptRow&, const PromptRow&) = default;
};

/// Statistics over the completed rows of one split. Means over empty sets are 0.
struct SplitAggregate {
  std::size_t n = 0;
  std::size_t completed = 0;
  std::size_t failed = 0;
  std::size_t flagged_count = 0;
  double mean = 0.0;
  double median = 0.0;
  double max = 0.0;
  double mean_iterations = 0.0;
  double mean_time_s = 0.0;
  double mean_net_s = 0.0;
  std::size_t optimized_count = 0;  // rows that entered the optimization loop
  double mean_iterations_optimized = 0.0;
  double mean_time_optimized_s = 0.0;
  double mean_net_optimized_s = 0.0;
  std::size_t decode_checked = 0;
  std::size_t decode_preserved = 0;

  friend bool operator==(const SplitAggregate&, const SplitAggregate&) = default;
};

inline constexpr const char* kFlaggedDefinition = "a prompt is flagged when any of its trials is flagged";

struct RunReport {
  std::string mode;  // "tsa" or "baseline"
  std::map<std::string, std::string> metadata;
  std::vector<PromptRow> rows;  // sorted by id
  std::map<std::string, SplitAggregate> aggregates;

  std::size_t failed_rows() const {
    return static_cast<std::size_t>(std::count_if(rows.begin(), rows.end(), [](const auto& r) { return r.failed; }));
  }
};

inline std::map<std::string, SplitAggregate> compute_aggregates(const std::vector<PromptRow>& rows) {
  struct Acc {
    SplitAggregate agg;
    std::vector<double> scores;
    double iter = 0, time = 0, net = 0, iter_opt = 0, time_opt = 0, net_opt = 0;
  };
  std::map<std::string, Acc> acc;
  for (const auto& r : rows) {
    Acc& a = acc[split_name(r.split)];
    ++a.agg.n;
    if (r.failed) {
      ++a.agg.failed;
      continue;
    }
    ++a.agg.completed;
    const double m = r.trial_mean();
    a.scores.push_back(m);
    if (r.any_flagged()) ++a.agg.flagged_count;
    a.iter += static_cast<double>(r.iterations);
    a.time += r.wall_s;
    a.net += r.net_s;
    if (r.entered_loop) {
      ++a.agg.optimized_count;
      a.iter_opt += static_cast<double>(r.iterations);
      a.time_opt += r.wall_s;
      a.net_opt += r.net_s;
    }
    if (r.decode_preserved) {
      ++a.agg.decode_checked;
      if (*r.decode_preserved) ++a.agg.decode_preserved;
    }
  }
  std::map<std::string, SplitAggregate> out;
  for (auto& [split, a] : acc) {
    SplitAggregate& g = a.agg;
    if (!a.scores.empty()) {
      const double n = static_cast<double>(a.scores.size());
      double sum = 0.0;
      for (double s : a.scores) sum += s;
      g.mean = sum / n;
      g.mean_iterations = a.iter / n;
      g.mean_time_s = a.time / n;
      g.mean_net_s = a.net / n;
      std::vector<double> sorted = a.scores;
      std::sort(sorted.begin(), sorted.end());
      const std::size_t mid = sorted.size() / 2;
      g.median = sorted.size() % 2 ? sorted[mid] : 0.5 * (sorted[mid - 1] + sorted[mid]);
      g.max = sorted.back();
    }
    if (g.optimized_count > 0) {
      const double n = static_cast<double>(g.optimized_count);
      g.mean_iterations_optimized = a.iter_opt / n;
      g.mean_time_optimized_s = a.time_opt / n;
      g.mean_net_optimized_s = a.net_opt / n;
    }
    out[split] = g;
  }
  return out;
}

/// Zeroes every timing field and recomputes aggregates, for byte-stable output.
inline RunReport without_timing(RunReport r) {
  for (auto& row : r.rows) row.wall_s = row.net_s = 0.0;
  r.aggregates = compute_aggregates(r.rows);
  return r;
}

/// Raised when more than the allowed fraction of prompts failed; carries the partial report.
class RunFailedError : public Error {
 public:
  RunFailedError(const std::string& what, RunReport partial)
      : Error(what), partial_(std::move(partial)) {}
  const RunReport& partial_report() const noexcept { return partial_; }

 private:
  RunReport partial_;
};

// ---------------------------------------------------------------------------
// Benchmark
// ---------------------------------------------------------------------------

struct BenchmarkOptions {
  OptimizerConfig optimizer;
  std::size_t trials = 3;
  bool baseline = false;
  std::size_t prompt_parallelism = 4;
  bool persist_text = false;
  double max_failure_fraction = 0.01;
  std::map<std::string, std::string> metadata;

  void validate() const {
    optimizer.validate();
    if (trials < 1) throw ArgumentError("trials must be >= 1");
    if (prompt_parallelism < 1) throw ArgumentError("prompt_parallelism must be >= 1");
    if (!(max_failure_fraction >= 0.0 && max_failure_fraction <= 1.0)) {
      throw ArgumentError("max_failure_fraction must lie in [0, 1]");
    }
  }
};

namespace detail {

inline constexpr std::uint64_t kTrialTag = 0x747269616c73ULL;

inline std::uint64_t prompt_seed(std::uint64_t run_seed, const std::string& id) {
  return derive_seed({run_seed, fnv1a64(id)});
}

inline std::uint64_t trial_seed(std::uint64_t run_seed, const std::string& id, std::size_t t) {
  return derive_seed({run_seed, fnv1a64(id), kTrialTag, t});
}

template <BlackBoxObjective O>
PromptRow run_prompt(const PromptRecord& rec, const EmbeddingTable& table, const O& objective,
                     const BenchmarkOptions& opts) {
  PromptRow row;
  row.id = rec.id;
  row.split = rec.split;
  if (opts.persist_text) row.text = rec.text;
  try {
    if (!rec.token_ids || rec.token_ids->empty()) {
      throw DatasetError("record has no token ids; tokenization belongs to the generation adapter");
    }
    const EmbeddingMatrix x0 = embed_tokens(*rec.token_ids, table);
    EmbeddingMatrix best = x0;
    if (!opts.baseline) {
      OptimizerConfig cfg = opts.optimizer;
      cfg.seed = prompt_seed(opts.optimizer.seed, rec.id);
      OptimizeResult res = optimize(x0, objective, cfg);
      best = std::move(res.best);
      const auto& tr = res.trace;
      row.iterations = tr.descent_steps();
      row.entered_loop = !tr.steps.empty() && tr.steps.front().phi >= cfg.early_stop_threshold;
      row.wall_s = tr.wall_ms() / 1000.0;
      row.net_s = tr.net_ms() / 1000.0;
      row.oracle_calls = tr.total_oracle_calls();
      row.stop_reason = stop_reason_name(tr.stop_reason);
      if (row.entered_loop) {
        row.decode_preserved = nearest_token_decode(best, table) == *rec.token_ids;
      }
    }
    for (std::size_t t = 0; t < opts.trials; ++t) {
      Evaluation ev = objective.evaluate(best, trial_seed(opts.optimizer.seed, rec.id, t));
      const ObjectiveValue v = max_category_score(ev.scores);
      TrialResult tr{v.value, v.top_category, ev.scores.flagged(), std::nullopt};
      if (opts.persist_text) tr.response = std::move(ev.response);
      row.trials.push_back(std::move(tr));
    }
  } catch (const std::exception& e) {
    row.failed = true;
    row.error = e.what();
    row.trials.clear();
  }
  return row;
}

}  // namespace detail

template <BlackBoxObjective O>
RunReport run_benchmark(const std::vector<PromptRecord>& records, const EmbeddingTable& table,
                        const O& objective, const BenchmarkOptions& opts) {
  opts.validate();
  RunReport report;
  report.mode = opts.baseline ? "baseline" : "tsa";
  report.metadata = opts.metadata;
  report.metadata["flagged_definition"] = kFlaggedDefinition;
  report.metadata["trials"] = std::to_string(opts.trials);
  report.metadata["mode"] = report.mode;

  std::vector<PromptRow> rows(records.size());
  const std::size_t workers = std::min(opts.prompt_parallelism, std::max<std::size_t>(records.size(), 1));
  if (workers <= 1) {
    for (std::size_t i = 0; i < records.size(); ++i) rows[i] = detail::run_prompt(records[i], table, objective, opts);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < records.size(); i = next++) {
          rows[i] = detail::run_prompt(records[i], table, objective, opts);
        }
      });
    }
    for (auto& t : pool) t.join();
  }
  std::sort(rows.begin(), rows.end(), [](const PromptRow& a, const PromptRow& b) { return a.id < b.id; });
  report.rows = std::move(rows);
  report.aggregates = compute_aggregates(report.rows);

  const std::size_t failed = report.failed_rows();
  if (!report.rows.empty() &&
      static_cast<double>(failed) > opts.max_failure_fraction * static_cast<double>(report.rows.size())) {
    std::string first;
    for (const auto& r : report.rows) {
      if (r.failed) {
        first = r.id + ": " + r.error;
        break;
      }
    }
    throw RunFailedError(std::to_string(failed) + " of " + std::to_string(report.rows.size()) +
                             " prompts failed (first: " + first + ")",
                         report);
  }
  return report;
}

// ---------------------------------------------------------------------------
// Sweep
// ---------------------------------------------------------------------------

enum class SweepAxis { mu, n_samples, threshold };

inline const char* sweep_axis_name(SweepAxis a) {
  switch (a) {
    case SweepAxis::mu: return "mu";
    case SweepAxis::n_samples: return "n_samples";
    case SweepAxis::threshold: return "threshold";
  }
  return "?";
}

inline std::optional<SweepAxis> parse_sweep_axis(std::string_view s) {
  if (s == "mu") return SweepAxis::mu;
  if (s == "n_samples" || s == "N") return SweepAxis::n_samples;
  if (s == "threshold") return SweepAxis::threshold;
  return std::nullopt;
}

struct SweepSpec {
  SweepAxis axis = SweepAxis::threshold;
  std::vector<double> values;
  BenchmarkOptions base;

  OptimizerConfig config_for(double v) const {
    OptimizerConfig c = base.optimizer;
    switch (axis) {
      case SweepAxis::mu: c.mu = v; break;
      case SweepAxis::n_samples: c.n_samples = static_cast<std::size_t>(v); break;
      case SweepAxis::threshold: c.early_stop_threshold = v; break;
    }
    return c;
  }

  void validate() const {
    if (values.empty()) throw ArgumentError("sweep needs at least one value");
    if (base.baseline) throw ArgumentError("sweeps run in optimization mode");
    for (double v : values) {
      if (axis == SweepAxis::n_samples && (v < 1.0 || v != std::floor(v))) {
        throw ArgumentError("n_samples sweep values must be positive integers");
      }
      config_for(v).validate();
    }
  }
};

struct SweepCell {
  double value = 0.0;
  bool failed = false;
  std::string error;
  std::size_t prompts = 0;
  double mean_score = 0.0;       // mean of trial-averaged scores over completed prompts
  double mean_iterations = 0.0;  // over completed prompts
  std::size_t flagged_count = 0;
};

template <BlackBoxObjective O>
std::vector<SweepCell> run_sweep(const SweepSpec& spec, const std::vector<PromptRecord>& records,
                                 const EmbeddingTable& table, const O& objective) {
  spec.validate();
  std::vector<SweepCell> cells;
  for (double v : spec.values) {
    SweepCell cell;
    cell.value = v;
    BenchmarkOptions opts = spec.base;
    opts.optimizer = spec.config_for(v);
    try {
      const RunReport rep = run_benchmark(records, table, objective, opts);
      double score = 0.0, iters = 0.0;
      for (const auto& r : rep.rows) {
        if (r.failed) continue;
        ++cell.prompts;
        score += r.trial_mean();
        iters += static_cast<double>(r.iterations);
        if (r.any_flagged()) ++cell.flagged_count;
      }
      if (cell.prompts) {
        cell.mean_score = score / static_cast<double>(cell.prompts);
        cell.mean_iterations = iters / static_cast<double>(cell.prompts);
      }
    } catch (const std::exception& e) {
      cell.failed = true;
      cell.error = e.what();
    }
    cells.push_back(std::move(cell));
  }
  return cells;
}

inline std::string format_sweep_csv(SweepAxis axis, const std::vector<SweepCell>& cells) {
  std::ostringstream out;
  out << sweep_axis_name(axis) << ",mean_score,mean_iterations,flagged_count,prompts,status\n";
  char buf[256];
  for (const auto& c : cells) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%zu,%zu,%s\n", c.value, c.mean_score, c.mean_iterations,
                  c.flagged_count, c.prompts, c.failed ? "failed" : "ok");
    out << buf;
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

enum class ReportFormat { table_text, csv, json };

inline std::optional<ReportFormat> parse_report_format(std::string_view s) {
  if (s == "table" || s == "table_text" || s == "txt") return ReportFormat::table_text;
  if (s == "csv") return ReportFormat::csv;
  if (s == "json") return ReportFormat::json;
  return std::nullopt;
}

inline ReportFormat guess_report_format(std::string_view path) {
  auto ends = [&](std::string_view suf) {
    return path.size() >= suf.size() && path.substr(path.size() - suf.size()) == suf;
  };
  if (ends(".json")) return ReportFormat::json;
  if (ends(".csv")) return ReportFormat::csv;
  return ReportFormat::table_text;
}

namespace detail {

inline std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

inline std::string exact(double v) { return fmt("%.17g", v); }

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

/// RFC 4180 records; quoted fields may contain separators and newlines.
inline std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> out;
  std::vector<std::string> rec;
  std::string field;
  bool quoted = false, any = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"' && i + 1 < text.size() && text[i + 1] == '"') {
        field += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        field += c;
      }
      continue;
    }
    if (c == '"') {
      quoted = true;
      any = true;
    } else if (c == ',') {
      rec.push_back(std::move(field));
      field.clear();
      any = true;
    } else if (c == '\n') {
      if (any || !field.empty()) {
        rec.push_back(std::move(field));
        out.push_back(std::move(rec));
      }
      rec.clear();
      field.clear();
      any = false;
    } else if (c != '\r') {
      field += c;
      any = true;
    }
  }
  if (quoted) throw ProtocolError("unterminated quoted CSV field");
  if (any || !field.empty()) {
    rec.push_back(std::move(field));
    out.push_back(std::move(rec));
  }
  return out;
}

inline nlohmann::json aggregate_json(const SplitAggregate& a) {
  return {{"n", a.n},
          {"completed", a.completed},
          {"failed", a.failed},
          {"flagged_count", a.flagged_count},
          {"mean", a.mean},
          {"median", a.median},
          {"max", a.max},
          {"mean_iterations", a.mean_iterations},
          {"mean_time_s", a.mean_time_s},
          {"mean_net_s", a.mean_net_s},
          {"optimized_count", a.optimized_count},
          {"mean_iterations_optimized", a.mean_iterations_optimized},
          {"mean_time_optimized_s", a.mean_time_optimized_s},
          {"mean_net_optimized_s", a.mean_net_optimized_s},
          {"decode_checked", a.decode_checked},
          {"decode_preserved", a.decode_preserved}};
}

inline SplitAggregate aggregate_from_json(const nlohmann::json& j) {
  SplitAggregate a;
  a.n = j.at("n").get<std::size_t>();
  a.completed = j.at("completed").get<std::size_t>();
  a.failed = j.at("failed").get<std::size_t>();
  a.flagged_count = j.at("flagged_count").get<std::size_t>();
  a.mean = j.at("mean").get<double>();
  a.median = j.at("median").get<double>();
  a.max = j.at("max").get<double>();
  a.mean_iterations = j.at("mean_iterations").get<double>();
  a.mean_time_s = j.at("mean_time_s").get<double>();
  a.mean_net_s = j.at("mean_net_s").get<double>();
  a.optimized_count = j.at("optimized_count").get<std::size_t>();
  a.mean_iterations_optimized = j.at("mean_iterations_optimized").get<double>();
  a.mean_time_optimized_s = j.at("mean_time_optimized_s").get<double>();
  a.mean_net_optimized_s = j.at("mean_net_optimized_s").get<double>();
  a.decode_checked = j.at("decode_checked").get<std::size_t>();
  a.decode_preserved = j.at("decode_preserved").get<std::size_t>();
  return a;
}

inline Category category_or_throw(const std::string& label) {
  const auto c = parse_category(label);
  if (!c) throw ProtocolError("unknown category '" + label + "' in report");
  return *c;
}

inline Split split_or_throw(const std::string& name) {
  const auto s = parse_split(name);
  if (!s) throw ProtocolError("unknown split '" + name + "' in report");
  return *s;
}

}  // namespace detail

inline std::string format_report_table(const RunReport& r) {
  std::ostringstream out;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-20s %5s %8s %8s %8s %8s %12s %9s %9s\n", "Split", "N", "Flagged", "Mean",
                "Med.", "Max", "#Iterations", "Time (s)", "Net (s)");
  out << buf;
  for (const auto& [split, a] : r.aggregates) {
    std::snprintf(buf, sizeof buf, "%-20s %5zu %8zu %8.3f %8.3f %8.3f %12.2f %9.3f %9.3f\n", split.c_str(),
                  a.completed, a.flagged_count, a.mean, a.median, a.max, a.mean_iterations, a.mean_time_s,
                  a.mean_net_s);
    out << buf;
  }
  if (r.aggregates.empty()) return out.str();
  out << "\nConditioned on entering the optimization loop:\n";
  std::snprintf(buf, sizeof buf, "%-20s %5s %12s %9s %9s %10s\n", "Split", "N", "#Iterations", "Time (s)", "Net (s)",
                "Decode ok");
  out << buf;
  for (const auto& [split, a] : r.aggregates) {
    std::snprintf(buf, sizeof buf, "%-20s %5zu %12.2f %9.3f %9.3f %4zu/%-5zu\n", split.c_str(), a.optimized_count,
                  a.mean_iterations_optimized, a.mean_time_optimized_s, a.mean_net_optimized_s, a.decode_preserved,
                  a.decode_checked);
    out << buf;
  }
  std::size_t failed = 0;
  for (const auto& [split, a] : r.aggregates) failed += a.failed;
  if (failed) out << "\nIncomplete rows: " << failed << "\n";
  return out.str();
}

inline std::string format_report_json(const RunReport& r) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : r.rows) {
    nlohmann::json trials = nlohmann::json::array();
    for (const auto& t : row.trials) {
      nlohmann::json jt{{"phi", t.phi},
                        {"top_category", std::string(category_label(t.top_category))},
                        {"flagged", t.flagged}};
      if (t.response) jt["response"] = *t.response;
      trials.push_back(std::move(jt));
    }
    nlohmann::json jr{{"id", row.id},
                      {"split", split_name(row.split)},
                      {"trials", trials},
                      {"trial_mean", row.trial_mean()},
                      {"flagged", row.any_flagged()},
                      {"iterations", row.iterations},
                      {"entered_loop", row.entered_loop},
                      {"wall_s", row.wall_s},
                      {"net_s", row.net_s},
                      {"oracle_calls", row.oracle_calls},
                      {"stop_reason", row.stop_reason},
                      {"decode_preserved", row.decode_preserved ? nlohmann::json(*row.decode_preserved) : nullptr},
                      {"failed", row.failed},
                      {"error", row.error}};
    if (row.text) jr["text"] = *row.text;
    rows.push_back(std::move(jr));
  }
  nlohmann::json aggs = nlohmann::json::object();
  for (const auto& [split, a] : r.aggregates) aggs[split] = detail::aggregate_json(a);
  const nlohmann::json doc{{"mode", r.mode}, {"metadata", r.metadata}, {"aggregates", aggs}, {"rows", rows}};
  return doc.dump(2) + "\n";
}

inline RunReport parse_report_json(const std::string& text) {
  RunReport r;
  try {
    const auto doc = nlohmann::json::parse(text);
    r.mode = doc.at("mode").get<std::string>();
    r.metadata = doc.at("metadata").get<std::map<std::string, std::string>>();
    for (const auto& [split, a] : doc.at("aggregates").items()) r.aggregates[split] = detail::aggregate_from_json(a);
    for (const auto& jr : doc.at("rows")) {
      PromptRow row;
      row.id = jr.at("id").get<std::string>();
      row.split = detail::split_or_throw(jr.at("split").get<std::string>());
      for (const auto& jt : jr.at("trials")) {
        TrialResult t;
        t.phi = jt.at("phi").get<double>();
        t.top_category = detail::category_or_throw(jt.at("top_category").get<std::string>());
        t.flagged = jt.at("flagged").get<bool>();
        if (jt.contains("response")) t.response = jt["response"].get<std::string>();
        row.trials.push_back(std::move(t));
      }
      row.iterations = jr.at("iterations").get<std::size_t>();
      row.entered_loop = jr.at("entered_loop").get<bool>();
      row.wall_s = jr.at("wall_s").get<double>();
      row.net_s = jr.at("net_s").get<double>();
      row.oracle_calls = jr.at("oracle_calls").get<std::size_t>();
      row.stop_reason = jr.at("stop_reason").get<std::string>();
      if (!jr.at("decode_preserved").is_null()) row.decode_preserved = jr["decode_preserved"].get<bool>();
      row.failed = jr.at("failed").get<bool>();
      row.error = jr.at("error").get<std::string>();
      if (jr.contains("text")) row.text = jr["text"].get<std::string>();
      r.rows.push_back(std::move(row));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ProtocolError(std::string("malformed report JSON: ") + e.what());
  }
  return r;
}

/// Per-prompt rows; metadata as leading "# key=value" lines. Aggregates are
/// not stored; parse_report_csv recomputes them.
inline std::string format_report_csv(const RunReport& r) {
  std::size_t trials = 0;
  for (const auto& row : r.rows) trials = std::max(trials, row.trials.size());
  std::ostringstream out;
  out << "# mode=" << r.mode << "\n";
  for (const auto& [k, v] : r.metadata) {
    if (v.find('\n') == std::string::npos) out << "# " << k << "=" << v << "\n";
  }
  out << "id,split,failed,trial_mean,flagged,iterations,entered_loop,wall_s,net_s,oracle_calls,stop_reason,"
         "decode_preserved";
  for (std::size_t t = 0; t < trials; ++t) out << ",t" << t << "_phi,t" << t << "_category,t" << t << "_flagged";
  out << ",error\n";
  for (const auto& row : r.rows) {
    out << detail::csv_field(row.id) << ',' << split_name(row.split) << ',' << (row.failed ? 1 : 0) << ','
        << detail::exact(row.trial_mean()) << ',' << (row.any_flagged() ? 1 : 0) << ',' << row.iterations << ','
        << (row.entered_loop ? 1 : 0) << ',' << detail::exact(row.wall_s) << ',' << detail::exact(row.net_s) << ','
        << row.oracle_calls << ',' << row.stop_reason << ','
        << (row.decode_preserved ? (*row.decode_preserved ? "1" : "0") : "");
    for (std::size_t t = 0; t < trials; ++t) {
      if (t < row.trials.size()) {
        const auto& tr = row.trials[t];
        out << ',' << detail::exact(tr.phi) << ',' << detail::csv_field(std::string(category_label(tr.top_category)))
            << ',' << (tr.flagged ? 1 : 0);
      } else {
        out << ",,,";
      }
    }
    out << ',' << detail::csv_field(row.error) << '\n';
  }
  return out.str();
}

inline RunReport parse_report_csv(const std::string& text) {
  RunReport r;
  std::string body;
  std::istringstream in(text);
  std::string line;
  bool header_seen = false;
  while (std::getline(in, line)) {
    if (!header_seen && line.rfind("# ", 0) == 0) {
      const auto eq = line.find('=');
      if (eq == std::string::npos) continue;
      const std::string k = line.substr(2, eq - 2), v = line.substr(eq + 1);
      if (k == "mode") r.mode = v;
      else r.metadata[k] = v;
      continue;
    }
    header_seen = true;
    body += line + "\n";
  }
  const auto recs = detail::parse_csv(body);
  if (recs.empty()) throw ProtocolError("CSV report has no header");
  const auto& header = recs.front();
  if (header.size() < 13 || header.front() != "id") throw ProtocolError("unexpected CSV report header");
  const std::size_t trials = (header.size() - 13) / 3;
  auto to_d = [](const std::string& s) { return std::stod(s); };
  auto to_z = [](const std::string& s) { return static_cast<std::size_t>(std::stoull(s)); };
  try {
    for (std::size_t i = 1; i < recs.size(); ++i) {
      const auto& f = recs[i];
      if (f.size() != header.size()) throw ProtocolError("CSV row " + std::to_string(i) + " has wrong field count");
      PromptRow row;
      row.id = f[0];
      row.split = detail::split_or_throw(f[1]);
      row.failed = f[2] == "1";
      row.iterations = to_z(f[5]);
      row.entered_loop = f[6] == "1";
      row.wall_s = to_d(f[7]);
      row.net_s = to_d(f[8]);
      row.oracle_calls = to_z(f[9]);
      row.stop_reason = f[10];
      if (!f[11].empty()) row.decode_preserved = f[11] == "1";
      for (std::size_t t = 0; t < trials; ++t) {
        const std::size_t base = 12 + 3 * t;
        if (f[base].empty()) continue;
        row.trials.push_back({to_d(f[base]), detail::category_or_throw(f[base + 1]), f[base + 2] == "1", std::nullopt});
      }
      row.error = f.back();
      r.rows.push_back(std::move(row));
    }
  } catch (const std::logic_error& e) {
    throw ProtocolError(std::string("malformed CSV report: ") + e.what());
  }
  r.aggregates = compute_aggregates(r.rows);
  return r;
}

inline std::string emit_report(const RunReport& r, ReportFormat format, bool include_timing = true) {
  const RunReport& src = include_timing ? r : without_timing(r);
  switch (format) {
    case ReportFormat::table_text: return format_report_table(src);
    case ReportFormat::csv: return format_report_csv(src);
    case ReportFormat::json: return format_report_json(src);
  }
  return {};
}

inline void write_report(const RunReport& r, const std::string& path, ReportFormat format,
                         bool include_timing = true) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write report " + path);
  out << emit_report(r, format, include_timing);
  if (!out) throw ConfigError("write failed for " + path);
}

// ---------------------------------------------------------------------------
// Config plumbing
// ---------------------------------------------------------------------------

inline OptimizerConfig optimizer_config_from(const Config& c) {
  OptimizerConfig o;
  o.mu = c.real("optimizer.mu");
  o.n_samples = c.count("optimizer.n_samples");
  o.eta = c.real("optimizer.eta");
  o.kappa = c.real("optimizer.kappa");
  o.max_iters = c.count("optimizer.max_iters");
  o.early_stop_threshold = c.real("optimizer.threshold");
  o.seed = c.u64("optimizer.seed");
  o.use_surrogate = c.flag("optimizer.use_surrogate");
  o.surrogate_beta = c.real("optimizer.surrogate_beta");
  o.ascent_mode = c.flag("optimizer.ascent_mode");
  const auto& mode = c.str("optimizer.cosine_mode");
  if (mode == "flattened") o.cosine_mode = CosineMode::flattened;
  else if (mode == "per_token_mean") o.cosine_mode = CosineMode::per_token_mean;
  else throw ConfigError("optimizer.cosine_mode must be flattened or per_token_mean");
  o.parallelism = c.count("optimizer.parallelism");
  try {
    o.validate();
  } catch (const ArgumentError& e) {
    throw ConfigError(e.what());
  }
  return o;
}

inline BenchmarkOptions benchmark_options_from(const Config& c) {
  BenchmarkOptions b;
  b.optimizer = optimizer_config_from(c);
  b.trials = c.count("run.trials");
  b.prompt_parallelism = c.count("run.prompt_parallelism");
  b.persist_text = c.flag("run.persist_text");
  b.max_failure_fraction = c.real("run.max_failure_fraction");
  try {
    b.validate();
  } catch (const ArgumentError& e) {
    throw ConfigError(e.what());
  }
  for (const auto& [k, v] : c.entries()) b.metadata["config." + k] = v;
  return b;
}

inline ColumnMapping column_mapping_from(const Config& c) {
  return {c.str("dataset.id_field"), c.str("dataset.text_field"), c.str("dataset.split_field"),
          c.str("dataset.token_ids_field")};
}

inline std::vector<PromptRecord> load_dataset_from(const Config& c) {
  const auto& path = c.str("dataset.path");
  if (path.empty()) throw ConfigError("no dataset given (dataset.path or --dataset)");
  const auto& fmt = c.str("dataset.format");
  DatasetFormat format = guess_dataset_format(path);
  if (fmt != "auto") {
    const auto f = parse_dataset_format(fmt);
    if (!f) throw ConfigError("dataset.format must be auto, jsonl or tsv");
    format = *f;
  }
  const auto split = parse_split(c.str("dataset.default_split"));
  if (!split) throw ConfigError("unknown dataset.default_split '" + c.str("dataset.default_split") + "'");
  return ingest_dataset(path, format, column_mapping_from(c), *split);
}

}  // namespace zosteer
