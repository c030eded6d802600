// Baseline vs. optimized scores on the synthetic world, entirely in-process.

#include "zosteer/zosteer.hpp"

#include <iostream>

int main() {
  using namespace zosteer;
  const auto world = build_synthetic_world({});
  auto lexicon = std::make_shared<const Lexicon>(world.model.lexicon());

  auto generator = std::make_shared<GenerationClient>(
      std::make_shared<HandlerTransport>(MockGenerator::synthetic(world.model).handler()));
  ModerationOptions mod_opts;
  mod_opts.rate_limit_rps = 0;  // in-process, no need to throttle
  auto oracle = std::make_shared<ModerationClient>(
      std::make_shared<HandlerTransport>(LexiconModerationService(lexicon).handler()), mod_opts);
  const PipelineObjective objective(generator, oracle);

  BenchmarkOptions opts;
  opts.baseline = true;
  std::cout << "baseline\n" << format_report_table(run_benchmark(world.prompts, world.table, objective, opts));
  opts.baseline = false;
  std::cout << "\noptimized\n" << format_report_table(run_benchmark(world.prompts, world.table, objective, opts));
}
