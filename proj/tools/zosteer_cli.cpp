// zosteer: command-line front end for benchmark runs, sweeps and checks.
//
// Exit codes: 0 success, 2 config error, 3 dataset error, 4 endpoint error,
// 5 acceptance-threshold failure.

#include "zosteer/zosteer.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace {

using namespace zosteer;

constexpr int kExitConfig = 2;
constexpr int kExitDataset = 3;
constexpr int kExitEndpoint = 4;
constexpr int kExitThreshold = 5;

struct CommonArgs {
  std::string config_path;
  std::string dataset;
  std::string split;
  std::string table;
  bool mock_oracle = false;
  bool mock_generator = false;
  bool live = false;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> trials;
  bool persist_text = false;
  std::string out;
  std::string format;
  bool no_timing = false;
  std::string record;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, CommonArgs& a) {
  cmd->add_option("--config", a.config_path, "Config file ([section] key = value)");
  cmd->add_option("--dataset", a.dataset, "Prompt file (jsonl or tsv)");
  cmd->add_option("--split", a.split, "Only run prompts of this split");
  cmd->add_option("--table", a.table, "Embedding table file");
  cmd->add_flag("--mock-oracle", a.mock_oracle, "Use the in-process lexicon moderation oracle");
  cmd->add_flag("--mock-generator", a.mock_generator, "Use the in-process mock generator");
  cmd->add_flag("--live", a.live, "Allow network access for services that are not mocked");
  cmd->add_option("--seed", a.seed, "Run seed");
  cmd->add_option("--trials", a.trials, "Scored completions per prompt");
  cmd->add_flag("--persist-text", a.persist_text, "Keep prompt and response text in the report");
  cmd->add_option("--out", a.out, "Report path (stdout when omitted)");
  cmd->add_option("--format", a.format, "table, csv or json (default: from --out extension)");
  cmd->add_flag("--no-timing", a.no_timing, "Zero all timing fields for byte-stable reports");
  cmd->add_option("--record", a.record, "Append successful service exchanges to this fixture file");
  cmd->add_option("--set", a.overrides, "Override a config key: section.key=value")->take_all();
}

Config resolve_config(const CommonArgs& a) {
  Config c = a.config_path.empty() ? Config::defaults() : Config::load(a.config_path);
  for (const auto& kv : a.overrides) c.set_assignment(kv);
  if (!a.dataset.empty()) c.set("dataset.path", a.dataset);
  if (!a.table.empty()) c.set("embeddings.table", a.table);
  if (a.seed) c.set("optimizer.seed", std::to_string(*a.seed));
  if (a.trials) c.set("run.trials", std::to_string(*a.trials));
  if (a.persist_text) c.set("run.persist_text", "true");
  return c;
}

std::shared_ptr<const EmbeddingTable> load_table_from(const Config& c) {
  const auto& path = c.str("embeddings.table");
  if (path.empty()) throw ConfigError("no embedding table given (embeddings.table or --table)");
  return std::make_shared<const EmbeddingTable>(load_table(path));
}

std::vector<PromptRecord> load_records(const Config& c, const std::string& split) {
  auto records = load_dataset_from(c);
  if (split.empty()) return records;
  const auto s = parse_split(split);
  if (!s) throw ConfigError("unknown split '" + split + "'");
  std::erase_if(records, [&](const PromptRecord& r) { return r.split != *s; });
  return records;
}

ServiceSelection selection_from(const CommonArgs& a, const std::string& replay = {}) {
  ServiceSelection sel;
  sel.mock_generator = a.mock_generator;
  sel.mock_oracle = a.mock_oracle;
  sel.live = a.live;
  sel.replay_fixture = replay;
  sel.record_fixture = a.record;
  return sel;
}

void emit(const std::string& text, const std::string& out) {
  if (out.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream f(out, std::ios::binary);
  if (!f || !(f << text)) throw ConfigError("cannot write " + out);
}

ReportFormat format_of(const CommonArgs& a) {
  if (a.format.empty()) return a.out.empty() ? ReportFormat::table_text : guess_report_format(a.out);
  const auto f = parse_report_format(a.format);
  if (!f) throw ConfigError("unknown report format '" + a.format + "'");
  return *f;
}

struct Gates {
  std::optional<std::size_t> max_flagged;
  std::optional<double> max_mean;
  std::optional<double> max_mean_iterations;
  std::optional<double> min_decode_fraction;
};

void add_gates(CLI::App* cmd, Gates& g) {
  cmd->add_option("--gate-max-flagged", g.max_flagged, "Fail (exit 5) when any split flags more prompts");
  cmd->add_option("--gate-max-mean", g.max_mean, "Fail (exit 5) when any split's mean score is higher");
  cmd->add_option("--gate-max-iterations", g.max_mean_iterations,
                  "Fail (exit 5) when any split's mean iteration count is higher");
  cmd->add_option("--gate-min-decode", g.min_decode_fraction,
                  "Fail (exit 5) when fewer optimized prompts decode to their original tokens");
}

/// Prints one line per violated gate; true when all pass.
bool check_gates(const RunReport& r, const Gates& g) {
  bool ok = true;
  std::size_t checked = 0, preserved = 0;
  for (const auto& [split, a] : r.aggregates) {
    if (g.max_flagged && a.flagged_count > *g.max_flagged) {
      std::cerr << "gate: " << split << " flagged " << a.flagged_count << " > " << *g.max_flagged << "\n";
      ok = false;
    }
    if (g.max_mean && a.mean > *g.max_mean) {
      std::cerr << "gate: " << split << " mean " << a.mean << " > " << *g.max_mean << "\n";
      ok = false;
    }
    if (g.max_mean_iterations && a.mean_iterations > *g.max_mean_iterations) {
      std::cerr << "gate: " << split << " mean iterations " << a.mean_iterations << " > "
                << *g.max_mean_iterations << "\n";
      ok = false;
    }
    checked += a.decode_checked;
    preserved += a.decode_preserved;
  }
  if (g.min_decode_fraction) {
    const double frac = checked ? static_cast<double>(preserved) / static_cast<double>(checked) : 1.0;
    if (frac < *g.min_decode_fraction) {
      std::cerr << "gate: decode preserved " << preserved << "/" << checked << " < " << *g.min_decode_fraction
                << "\n";
      ok = false;
    }
  }
  return ok;
}

int run_benchmark_cmd(const CommonArgs& a, const Gates& g, bool baseline, const std::string& replay = {}) {
  const Config c = resolve_config(a);
  auto table = load_table_from(c);
  const auto records = load_records(c, a.split);
  BenchmarkOptions opts = benchmark_options_from(c);
  opts.baseline = baseline;
  const auto objective = build_pipeline(c, selection_from(a, replay), table, opts.persist_text);
  RunReport report;
  try {
    report = run_benchmark(records, *table, objective, opts);
  } catch (const RunFailedError& e) {
    if (!a.out.empty()) write_report(e.partial_report(), a.out, format_of(a), !a.no_timing);
    throw;
  }
  emit(emit_report(report, format_of(a), !a.no_timing), a.out);
  if (!a.out.empty()) std::cerr << format_report_table(a.no_timing ? without_timing(report) : report);
  return check_gates(report, g) ? 0 : kExitThreshold;
}

std::vector<double> parse_values(const std::string& csv) {
  std::vector<double> out;
  std::stringstream in(csv);
  std::string item;
  while (std::getline(in, item, ',')) {
    try {
      out.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw ConfigError("sweep value '" + item + "' is not a number");
    }
  }
  return out;
}

int with_exit_codes(const std::function<int()>& body) {
  try {
    return body();
  } catch (const DatasetError& e) {
    std::cerr << "dataset error: " << e.what() << "\n";
    return kExitDataset;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const ArgumentError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DimensionError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const LookupError& e) {
    std::cerr << "dataset error: " << e.what() << "\n";
    return kExitDataset;
  } catch (const std::exception& e) {
    std::cerr << "endpoint error: " << e.what() << "\n";
    return kExitEndpoint;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Zeroth-order prompt-embedding steering against a black-box moderation score"};
  app.require_subcommand(1);

  CommonArgs run_args, base_args, replay_args, sweep_args, decode_args;
  Gates run_gates, base_gates, replay_gates, decode_gates;

  auto* run = app.add_subcommand("run", "Optimize every prompt and score the results");
  add_common(run, run_args);
  add_gates(run, run_gates);

  auto* baseline = app.add_subcommand("baseline", "Score the unmodified prompts");
  add_common(baseline, base_args);
  add_gates(baseline, base_gates);

  auto* replay = app.add_subcommand("replay", "Re-run a benchmark from a recorded fixture file");
  std::string fixtures;
  bool replay_baseline = false;
  add_common(replay, replay_args);
  add_gates(replay, replay_gates);
  replay->add_option("--fixtures", fixtures, "NDJSON fixture file")->required();
  replay->add_flag("--baseline", replay_baseline, "Replay a baseline run");

  auto* sweep = app.add_subcommand("sweep", "Sensitivity sweep over one optimizer setting");
  std::string axis_name, values;
  add_common(sweep, sweep_args);
  sweep->add_option("--axis", axis_name, "mu, n_samples or threshold")->required();
  sweep->add_option("--values", values, "Comma-separated axis values")->required();

  auto* decode = app.add_subcommand("decode-check", "Check that optimized embeddings decode to the original tokens");
  add_common(decode, decode_args);
  add_gates(decode, decode_gates);

  auto* check = app.add_subcommand("check-dataset", "Parse a prompt file and print length statistics");
  std::string check_path, check_format = "auto", check_split;
  ColumnMapping check_cols;
  std::optional<std::size_t> expect_count;
  std::optional<double> expect_mean;
  double mean_tolerance = 0.5;
  check->add_option("--dataset", check_path, "Prompt file")->required();
  check->add_option("--format", check_format, "auto, jsonl or tsv");
  check->add_option("--split", check_split, "Split assigned to records without one");
  check->add_option("--id-field", check_cols.id, "Id column");
  check->add_option("--text-field", check_cols.text, "Text column");
  check->add_option("--split-field", check_cols.split, "Split column");
  check->add_option("--expect-count", expect_count, "Fail (exit 5) unless the record count matches");
  check->add_option("--expect-mean", expect_mean, "Fail (exit 5) unless the mean token count is within tolerance");
  check->add_option("--tolerance", mean_tolerance, "Tolerance for --expect-mean");

  auto* synth = app.add_subcommand("synth", "Write the synthetic fixture world and a config for it");
  std::string synth_dir;
  zosteer::SyntheticWorldSpec spec;
  synth->add_option("--out-dir", synth_dir, "Output directory")->required();
  synth->add_option("--seed", spec.seed, "World seed");
  synth->add_option("--harmful", spec.n_harmful, "Planted harmful prompts");
  synth->add_option("--benign", spec.n_benign, "Benign prompts");

  CLI11_PARSE(app, argc, argv);

  if (*run) return with_exit_codes([&] { return run_benchmark_cmd(run_args, run_gates, false); });
  if (*baseline) return with_exit_codes([&] { return run_benchmark_cmd(base_args, base_gates, true); });
  if (*replay) {
    return with_exit_codes([&] { return run_benchmark_cmd(replay_args, replay_gates, replay_baseline, fixtures); });
  }
  if (*decode) {
    return with_exit_codes([&] {
      Gates g = decode_gates;
      if (!g.min_decode_fraction) g.min_decode_fraction = 0.95;
      const Config c = resolve_config(decode_args);
      auto table = load_table_from(c);
      const auto records = load_records(c, decode_args.split);
      BenchmarkOptions opts = benchmark_options_from(c);
      opts.trials = 1;
      const auto objective = build_pipeline(c, selection_from(decode_args), table);
      const RunReport report = run_benchmark(records, *table, objective, opts);
      std::size_t checked = 0, preserved = 0;
      for (const auto& row : report.rows) {
        if (!row.decode_preserved) continue;
        ++checked;
        if (*row.decode_preserved) ++preserved;
        else std::cerr << "decode changed: " << row.id << "\n";
      }
      std::ostringstream out;
      out << "optimized prompts: " << checked << "\n"
          << "decode preserved:  " << preserved << "\n";
      if (checked) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "fraction:          %.4f\n",
                      static_cast<double>(preserved) / static_cast<double>(checked));
        out << buf;
      }
      emit(out.str(), decode_args.out);
      return check_gates(report, g) ? 0 : kExitThreshold;
    });
  }
  if (*sweep) {
    return with_exit_codes([&] {
      const auto axis = parse_sweep_axis(axis_name);
      if (!axis) throw ConfigError("unknown sweep axis '" + axis_name + "'");
      const Config c = resolve_config(sweep_args);
      auto table = load_table_from(c);
      const auto records = load_records(c, sweep_args.split);
      SweepSpec s;
      s.axis = *axis;
      s.values = parse_values(values);
      s.base = benchmark_options_from(c);
      try {
        s.validate();
      } catch (const ArgumentError& e) {
        throw ConfigError(e.what());
      }
      const auto objective = build_pipeline(c, selection_from(sweep_args), table);
      const auto cells = run_sweep(s, records, *table, objective);
      emit(format_sweep_csv(s.axis, cells), sweep_args.out);
      for (const auto& cell : cells) {
        if (cell.failed) std::cerr << "cell " << cell.value << " failed: " << cell.error << "\n";
      }
      return 0;
    });
  }
  if (*check) {
    return with_exit_codes([&] {
      DatasetFormat format = guess_dataset_format(check_path);
      if (check_format != "auto") {
        const auto f = parse_dataset_format(check_format);
        if (!f) throw ConfigError("unknown dataset format '" + check_format + "'");
        format = *f;
      }
      Split def = Split::synthetic;
      if (!check_split.empty()) {
        const auto s = parse_split(check_split);
        if (!s) throw ConfigError("unknown split '" + check_split + "'");
        def = *s;
      }
      const auto records = ingest_dataset(check_path, format, check_cols, def);
      const auto st = dataset_stats(records);
      std::printf("records: %zu\ntokens (whitespace): max %zu  min %zu  mean %.2f  median %.1f\n", st.count,
                  st.max_tokens, st.min_tokens, st.mean_tokens, st.median_tokens);
      bool ok = true;
      if (expect_count && st.count != *expect_count) {
        std::fprintf(stderr, "expected %zu records, found %zu\n", *expect_count, st.count);
        ok = false;
      }
      if (expect_mean && std::abs(st.mean_tokens - *expect_mean) > mean_tolerance) {
        std::fprintf(stderr, "mean tokens %.2f not within %.2f of %.2f\n", st.mean_tokens, mean_tolerance,
                     *expect_mean);
        ok = false;
      }
      return ok ? 0 : kExitThreshold;
    });
  }
  if (*synth) {
    return with_exit_codes([&] {
      const auto world = build_synthetic_world(spec);
      const auto files = save_synthetic_world(world, synth_dir);
      Config c = Config::defaults();
      c.set("dataset.path", files.dataset);
      c.set("embeddings.table", files.table);
      c.set("mock.harm_model", files.harm_model);
      c.set("mock.lexicon", files.lexicon);
      const auto cfg_path = (std::filesystem::path(synth_dir) / "zosteer.ini").string();
      std::ofstream(cfg_path) << c.dump();
      std::printf("wrote %s\n  %s\n  %s\n  %s\n  %s\n", cfg_path.c_str(), files.table.c_str(),
                  files.harm_model.c_str(), files.lexicon.c_str(), files.dataset.c_str());
      return 0;
    });
  }
  return 0;
}
