// Descent on the analytic logistic landscape, printing the trace.

#include "zosteer/zosteer.hpp"

#include <cstdio>

int main() {
  using namespace zosteer;
  const std::size_t T = 4, d = 16;
  EmbeddingMatrix w = sample_perturbation(T, d, 11).direction;
  w *= 5.0 / w.frobenius_norm();
  EmbeddingMatrix x0 = sample_perturbation(T, d, 12).direction;

  SyntheticParams p;
  p.directions = {w};
  p.anchor = x0;
  p.offsets = {std::log(0.9 / 0.1)};  // Phi(X0) = 0.9
  const SyntheticObjective objective(p);

  OptimizerConfig cfg;
  cfg.seed = 3;
  const auto result = optimize(x0, objective, cfg);
  std::printf("%3s %8s %10s %8s %5s\n", "k", "phi", "|g| raw", "cos", "proj");
  for (const auto& s : result.trace.steps) {
    std::printf("%3zu %8.4f %10.4f %8.4f %5s\n", s.k, s.phi, s.grad_norm_raw, s.cosine_to_x0,
                s.projected ? "yes" : "no");
  }
  std::printf("best %.4f at k=%zu (%s)\n", result.trace.best_phi, result.trace.best_iter,
              stop_reason_name(result.trace.stop_reason));
}
