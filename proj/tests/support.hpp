#pragma once

// Shared fixtures for the unit and acceptance tests.

#include "zosteer/zosteer.hpp"

#include <atomic>
#include <memory>
#include <random>

namespace zosteer::testkit {

/// Phi(X) = 0.5 |X - A|^2 reported through a raw value rather than a ScoreVector.
struct Quadratic {
  EmbeddingMatrix a;
  double operator()(const EmbeddingMatrix& x) const { return 0.5 * (x - a).squared_norm(); }
  EmbeddingMatrix gradient(const EmbeddingMatrix& x) const { return x - a; }
};

inline EmbeddingMatrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed, double scale = 1.0) {
  EmbeddingMatrix m = sample_perturbation(rows, cols, seed).direction;
  m *= scale;
  return m;
}

/// Single-category logistic landscape with Phi(X0) = p0 and |W|_F = w_norm.
inline SyntheticParams logistic_landscape(const EmbeddingMatrix& x0, double w_norm, double p0, std::uint64_t seed) {
  EmbeddingMatrix w = sample_perturbation(x0.rows(), x0.cols(), seed).direction;
  w *= w_norm / w.frobenius_norm();
  SyntheticParams p;
  p.directions = {w};
  p.anchor = x0;
  p.offsets = {std::log(p0 / (1.0 - p0))};
  return p;
}

/// Counts every evaluation of the wrapped objective.
template <class O>
class Counting {
 public:
  explicit Counting(O inner) : inner_(std::move(inner)), calls_(std::make_shared<std::atomic<std::size_t>>(0)) {}
  Evaluation evaluate(const EmbeddingMatrix& x, std::uint64_t seed) const {
    ++*calls_;
    return inner_.evaluate(x, seed);
  }
  std::size_t calls() const { return *calls_; }
  void reset() const { *calls_ = 0; }

 private:
  O inner_;
  std::shared_ptr<std::atomic<std::size_t>> calls_;
};

/// Mock generator plus lexicon oracle over the wire protocol, in-process.
inline PipelineObjective mock_pipeline(const SyntheticHarmModel& model, bool keep_response = false) {
  auto lexicon = std::make_shared<const Lexicon>(model.lexicon());
  auto gen = std::make_shared<GenerationClient>(
      std::make_shared<HandlerTransport>(MockGenerator::synthetic(model).handler()));
  ModerationOptions mo;
  mo.rate_limit_rps = 0.0;
  auto mod = std::make_shared<ModerationClient>(
      std::make_shared<HandlerTransport>(LexiconModerationService(lexicon).handler()), mo);
  return PipelineObjective(gen, mod, {}, keep_response);
}

/// The default synthetic world, built once per process.
inline const SyntheticWorld& default_world() {
  static const SyntheticWorld w = build_synthetic_world({});
  return w;
}

}  // namespace zosteer::testkit
