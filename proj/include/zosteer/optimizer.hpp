#pragma once

/**
 * Zeroth-order descent over prompt embeddings.
 *
 * Each iteration evaluates the black-box objective at the current iterate,
 * stops early once the score falls under the threshold, and otherwise probes
 * N Gaussian perturbations, forms the finite-difference gradient estimate
 *
 *   g = (1/N) sum_i (Phi(X + mu U_i) - Phi(X)) / mu * U_i,
 *
 * steps along -g/|g| by eta and pulls the result back into the cosine ball
 * around the starting embeddings. The best iterate seen is returned.
 *
 * Usage:
 *   zosteer::OptimizerConfig cfg;            // mu, N, eta, kappa, K, threshold
 *   auto result = zosteer::optimize(x0, objective, cfg);
 *   use(result.best, result.trace.best_phi);
 */

#include "zosteer/error.hpp"
#include "zosteer/objective.hpp"
#include "zosteer/tensor.hpp"

#include <atomic>
#include <chrono>
#include <concepts>
#include <exception>
#include <limits>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

namespace zosteer {

/// What one black-box call returns: the oracle's scores plus latency bookkeeping.
struct Evaluation {
  ScoreVector scores;
  double oracle_ms = 0.0;     // moderation latency, excluded from net time
  double generator_ms = 0.0;
  std::optional<std::string> response;  // kept only when the objective is asked to
};

/// Phi(X) = h(f(X)) as an opaque capability. `seed` fixes the generator's
/// sampling so identical (X, seed) pairs give identical evaluations.
template <class O>
concept BlackBoxObjective = requires(const O& o, const EmbeddingMatrix& x, std::uint64_t seed) {
  { o.evaluate(x, seed) } -> std::convertible_to<Evaluation>;
};

/// The analytic logistic landscape behind the BlackBoxObjective interface.
class SyntheticObjective {
 public:
  explicit SyntheticObjective(SyntheticParams params) : params_(std::move(params)) {
    params_.validate();
  }

  Evaluation evaluate(const EmbeddingMatrix& x, std::uint64_t /*seed*/) const {
    return {synthetic_scores(x, params_), 0.0, 0.0, std::nullopt};
  }

  const SyntheticParams& params() const noexcept { return params_; }

 private:
  SyntheticParams params_;
};

// ---------------------------------------------------------------------------
// Configuration and trace
// ---------------------------------------------------------------------------

struct OptimizerConfig {
  double mu = 0.05;
  std::size_t n_samples = 8;
  double eta = 1.0;
  double kappa = 0.2;
  std::size_t max_iters = 10;
  double early_stop_threshold = 0.1;
  std::uint64_t seed = 0;
  bool use_surrogate = false;
  double surrogate_beta = 50.0;
  bool ascent_mode = false;  // experimental: flips the update sign
  CosineMode cosine_mode = CosineMode::flattened;
  std::size_t parallelism = 1;  // concurrent evaluations within one iteration

  void validate() const {
    if (!(mu > 0.0) || !std::isfinite(mu)) throw ArgumentError("mu must be > 0");
    if (n_samples < 1) throw ArgumentError("n_samples must be >= 1");
    if (!(eta > 0.0) || !std::isfinite(eta)) throw ArgumentError("eta must be > 0");
    if (!(kappa > -1.0 && kappa < 1.0)) throw ArgumentError("kappa must lie in (-1, 1)");
    if (max_iters < 1) throw ArgumentError("max_iters must be >= 1");
    if (!(early_stop_threshold > 0.0 && early_stop_threshold <= 1.0)) {
      throw ArgumentError("early_stop_threshold must lie in (0, 1]");
    }
    if (!(surrogate_beta > 0.0)) throw ArgumentError("surrogate_beta must be > 0");
    if (parallelism < 1) throw ArgumentError("parallelism must be >= 1");
  }
};

enum class StopReason { early_stop, max_iters };

inline const char* stop_reason_name(StopReason r) {
  return r == StopReason::early_stop ? "early_stop" : "max_iters";
}

struct TraceStep {
  std::size_t k = 0;
  double phi = 0.0;            // max-category score at X_k
  Category top_category = Category::harassment;
  double objective = 0.0;      // value fed to the estimator (phi, or the surrogate)
  double grad_norm_raw = 0.0;  // |g_k| before normalization; 0 when no estimate was formed
  double cosine_to_x0 = 1.0;   // cos(X_k, X0)
  bool updated = false;        // a descent update X_k -> X_{k+1} was applied
  bool projected = false;      // X_{k+1} was pulled back onto the cosine ball
  bool resampled = false;      // first estimate was null, perturbations redrawn
  bool null_step = false;      // estimate stayed null; the run ended here
  std::size_t oracle_calls = 0;
  double wall_ms = 0.0;
  double oracle_ms = 0.0;
  double net_ms = 0.0;
};

struct OptimizationTrace {
  std::vector<TraceStep> steps;
  double best_phi = std::numeric_limits<double>::infinity();
  std::size_t best_iter = 0;
  StopReason stop_reason = StopReason::max_iters;

  /// Number of descent updates applied.
  std::size_t descent_steps() const {
    std::size_t n = 0;
    for (const auto& s : steps) n += s.updated ? 1 : 0;
    return n;
  }
  std::size_t total_oracle_calls() const {
    std::size_t n = 0;
    for (const auto& s : steps) n += s.oracle_calls;
    return n;
  }
  double wall_ms() const {
    double t = 0.0;
    for (const auto& s : steps) t += s.wall_ms;
    return t;
  }
  double net_ms() const {
    double t = 0.0;
    for (const auto& s : steps) t += s.net_ms;
    return t;
  }
};

struct OptimizeResult {
  EmbeddingMatrix best;
  OptimizationTrace trace;
};

/// Objective failure mid-run; carries everything recorded up to that point.
class OptimizationError : public Error {
 public:
  OptimizationError(const std::string& cause, OptimizationTrace partial)
      : Error("optimization aborted: " + cause), partial_(std::move(partial)) {}
  const OptimizationTrace& partial_trace() const noexcept { return partial_; }

 private:
  OptimizationTrace partial_;
};

// ---------------------------------------------------------------------------
// Estimator pieces
// ---------------------------------------------------------------------------

inline EmbeddingMatrix estimate_gradient(double phi_base, std::span<const double> phi_perturbed,
                                         std::span<const PerturbationMatrix> perturbations,
                                         double mu) {
  if (phi_perturbed.size() != perturbations.size()) {
    throw ArgumentError("got " + std::to_string(phi_perturbed.size()) + " scores for " +
                        std::to_string(perturbations.size()) + " perturbations");
  }
  if (perturbations.empty()) throw ArgumentError("estimator needs N >= 1 perturbations");
  if (!(mu > 0.0)) throw ArgumentError("mu must be > 0");
  if (!std::isfinite(phi_base)) throw ArgumentError("non-finite base value");

  const auto& first = perturbations.front().direction;
  EmbeddingMatrix g(first.rows(), first.cols());
  const double inv_n = 1.0 / static_cast<double>(perturbations.size());
  for (std::size_t i = 0; i < perturbations.size(); ++i) {
    if (!std::isfinite(phi_perturbed[i])) throw ArgumentError("non-finite perturbed value");
    const double coeff = (phi_perturbed[i] - phi_base) / mu * inv_n;
    if (coeff != 0.0) g.axpy(coeff, perturbations[i].direction);
    else first.require_same_shape(perturbations[i].direction);
  }
  return g;
}

struct NormalizedGradient {
  EmbeddingMatrix direction;
  double raw_norm = 0.0;
  bool null_step = false;  // |g| <= 1e-12: direction is zero, no update possible
};

inline constexpr double kNullGradientNorm = 1e-12;

inline NormalizedGradient normalize_gradient(const EmbeddingMatrix& g) {
  const double norm = g.frobenius_norm();
  if (!(norm > kNullGradientNorm)) return {EmbeddingMatrix(g.rows(), g.cols()), norm, true};
  EmbeddingMatrix unit = g;
  unit *= 1.0 / norm;
  return {std::move(unit), norm, false};
}

inline EmbeddingMatrix descent_step(const EmbeddingMatrix& x, const EmbeddingMatrix& g_unit,
                                    double eta, bool ascent = false) {
  EmbeddingMatrix out = x;
  out.axpy(ascent ? eta : -eta, g_unit);
  return out;
}

// ---------------------------------------------------------------------------
// Batched evaluation
// ---------------------------------------------------------------------------

/// Evaluates points[i] with seeds[i], up to `parallelism` at a time. Results
/// keep input order and do not depend on completion order. If any point
/// fails, throws BatchError naming the lowest failing index.
template <BlackBoxObjective O>
std::vector<Evaluation> batch_evaluate(std::span<const EmbeddingMatrix> points, const O& objective,
                                       std::span<const std::uint64_t> seeds,
                                       std::size_t parallelism = 1) {
  if (points.empty()) throw ArgumentError("batch_evaluate needs a non-empty batch");
  if (seeds.size() != points.size()) throw ArgumentError("one sampling seed per point");

  std::vector<std::optional<Evaluation>> results(points.size());
  std::vector<std::string> errors(points.size());
  std::vector<char> failed(points.size(), 0);

  auto run_one = [&](std::size_t i) {
    try {
      results[i] = objective.evaluate(points[i], seeds[i]);
    } catch (const std::exception& e) {
      failed[i] = 1;
      errors[i] = e.what();
    } catch (...) {
      failed[i] = 1;
      errors[i] = "unknown error";
    }
  };

  const std::size_t workers = std::min(std::max<std::size_t>(parallelism, 1), points.size());
  if (workers == 1) {
    for (std::size_t i = 0; i < points.size(); ++i) run_one(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < points.size(); i = next++) run_one(i);
      });
    }
    for (auto& t : pool) t.join();
  }

  for (std::size_t i = 0; i < points.size(); ++i) {
    if (failed[i]) throw BatchError(i, errors[i]);
  }
  std::vector<Evaluation> out;
  out.reserve(points.size());
  for (auto& r : results) out.push_back(std::move(*r));
  return out;
}

/// Seeds derived from (base_seed, index).
template <BlackBoxObjective O>
std::vector<Evaluation> batch_evaluate(std::span<const EmbeddingMatrix> points, const O& objective,
                                       std::uint64_t base_seed, std::size_t parallelism = 1) {
  std::vector<std::uint64_t> seeds(points.size());
  for (std::size_t i = 0; i < seeds.size(); ++i) seeds[i] = derive_seed({base_seed, i});
  return batch_evaluate(points, objective, std::span<const std::uint64_t>(seeds), parallelism);
}

// ---------------------------------------------------------------------------
// The loop
// ---------------------------------------------------------------------------

namespace detail {

inline constexpr std::uint64_t kPerturbationTag = 0x7065727475726221ULL;

inline std::uint64_t evaluation_seed(std::uint64_t run_seed, std::size_t k, std::size_t attempt,
                                     std::size_t index) {
  return derive_seed({run_seed, k, attempt, index});
}

inline std::uint64_t perturbation_seed(std::uint64_t run_seed, std::size_t k, std::size_t attempt,
                                       std::size_t index) {
  return derive_seed({run_seed, k, attempt, index, kPerturbationTag});
}

inline double elapsed_ms(std::chrono::steady_clock::time_point since) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - since).count();
}

}  // namespace detail

template <BlackBoxObjective O>
OptimizeResult optimize(const EmbeddingMatrix& x0, const O& objective, const OptimizerConfig& cfg) {
  cfg.validate();
  if (x0.empty()) throw DimensionError("empty starting embeddings");
  if (!x0.all_finite()) throw ArgumentError("starting embeddings must be finite");
  if (x0.squared_norm() == 0.0) throw DegenerateInputError("starting embeddings have zero norm");

  const auto reduce = [&](const ScoreVector& s) {
    return cfg.use_surrogate ? softmax_surrogate(s, cfg.surrogate_beta) : max_category_score(s).value;
  };

  OptimizeResult result{x0, {}};
  OptimizationTrace& trace = result.trace;
  EmbeddingMatrix x = x0;

  for (std::size_t k = 0; k < cfg.max_iters; ++k) {
    const auto t0 = std::chrono::steady_clock::now();
    TraceStep step;
    step.k = k;
    step.cosine_to_x0 = cosine_similarity(x, x0, cfg.cosine_mode);

    auto finish_step = [&] {
      step.wall_ms = detail::elapsed_ms(t0);
      step.net_ms = std::max(0.0, step.wall_ms - step.oracle_ms);
      trace.steps.push_back(step);
    };

    Evaluation base;
    try {
      base = objective.evaluate(x, detail::evaluation_seed(cfg.seed, k, 0, 0));
    } catch (const std::exception& e) {
      finish_step();
      throw OptimizationError(e.what(), trace);
    }
    step.oracle_calls = 1;
    step.oracle_ms += base.oracle_ms;

    const ObjectiveValue top = max_category_score(base.scores);
    step.phi = top.value;
    step.top_category = top.top_category;
    step.objective = reduce(base.scores);

    if (step.phi < trace.best_phi) {
      trace.best_phi = step.phi;
      trace.best_iter = k;
      result.best = x;
    }
    if (step.phi < cfg.early_stop_threshold) {
      trace.stop_reason = StopReason::early_stop;
      finish_step();
      return result;
    }

    NormalizedGradient dir;
    for (std::size_t attempt = 0; attempt < 2; ++attempt) {
      std::vector<PerturbationMatrix> us;
      std::vector<EmbeddingMatrix> points;
      std::vector<std::uint64_t> seeds;
      us.reserve(cfg.n_samples);
      points.reserve(cfg.n_samples);
      for (std::size_t i = 1; i <= cfg.n_samples; ++i) {
        us.push_back(sample_perturbation(x.rows(), x.cols(),
                                         detail::perturbation_seed(cfg.seed, k, attempt, i)));
        EmbeddingMatrix p = x;
        p.axpy(cfg.mu, us.back().direction);
        points.push_back(std::move(p));
        seeds.push_back(detail::evaluation_seed(cfg.seed, k, attempt, i));
      }

      std::vector<Evaluation> evals;
      try {
        evals = batch_evaluate(std::span<const EmbeddingMatrix>(points), objective,
                               std::span<const std::uint64_t>(seeds), cfg.parallelism);
      } catch (const std::exception& e) {
        finish_step();
        throw OptimizationError(e.what(), trace);
      }
      step.oracle_calls += evals.size();
      std::vector<double> values;
      values.reserve(evals.size());
      for (const auto& ev : evals) {
        step.oracle_ms += ev.oracle_ms;
        values.push_back(reduce(ev.scores));
      }

      dir = normalize_gradient(estimate_gradient(step.objective, values, us, cfg.mu));
      step.grad_norm_raw = dir.raw_norm;
      if (!dir.null_step) break;
      if (attempt == 0) step.resampled = true;
    }

    if (dir.null_step) {
      step.null_step = true;
      trace.stop_reason = StopReason::max_iters;
      finish_step();
      return result;
    }

    x = descent_step(x, dir.direction, cfg.eta, cfg.ascent_mode);
    step.updated = true;
    if (cosine_similarity(x, x0, cfg.cosine_mode) < cfg.kappa) {
      x = project_cosine_ball(x, x0, cfg.kappa, cfg.cosine_mode);
      step.projected = true;
    }
    finish_step();
  }

  trace.stop_reason = StopReason::max_iters;
  return result;
}

}  // namespace zosteer
