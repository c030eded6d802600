#pragma once

/**
 * Dense T x d prompt-embedding arithmetic.
 *
 * An EmbeddingMatrix stores one token embedding per row, row-major, in 64-bit
 * reals. Geometry (inner product, norm, cosine) treats the whole matrix as a
 * single flattened vector of length T*d unless CosineMode::per_token_mean is
 * requested explicitly.
 */

#include "zosteer/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <string_view>
#include <string>
#include <vector>

namespace zosteer {

class EmbeddingMatrix {
 public:
  EmbeddingMatrix() = default;

  /// Zero-filled T x d matrix.
  EmbeddingMatrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols) {
    check_shape(rows, cols);
    data_.assign(rows * cols, 0.0);
  }

  EmbeddingMatrix(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    check_shape(rows, cols);
    if (data_.size() != rows * cols) {
      throw DimensionError("matrix data has " + std::to_string(data_.size()) + " values, expected " +
                           std::to_string(rows * cols));
    }
    for (double v : data_) {
      if (!std::isfinite(v)) throw ArgumentError("matrix values must be finite");
    }
  }

  static EmbeddingMatrix from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    if (rows.size() == 0) throw DimensionError("matrix needs at least one row");
    const std::size_t cols = rows.begin()->size();
    std::vector<double> data;
    data.reserve(rows.size() * cols);
    for (const auto& r : rows) {
      if (r.size() != cols) throw DimensionError("ragged rows");
      data.insert(data.end(), r.begin(), r.end());
    }
    return EmbeddingMatrix(rows.size(), cols, std::move(data));
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }

  std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
  std::span<const double> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  bool same_shape(const EmbeddingMatrix& o) const noexcept {
    return rows_ == o.rows_ && cols_ == o.cols_;
  }

  double squared_norm() const noexcept {
    double s = 0.0;
    for (double v : data_) s += v * v;
    return s;
  }
  double frobenius_norm() const noexcept { return std::sqrt(squared_norm()); }

  bool all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
  }

  EmbeddingMatrix& operator+=(const EmbeddingMatrix& o) {
    require_same_shape(o);
    for (std::size_t k = 0; k < data_.size(); ++k) data_[k] += o.data_[k];
    return *this;
  }
  EmbeddingMatrix& operator-=(const EmbeddingMatrix& o) {
    require_same_shape(o);
    for (std::size_t k = 0; k < data_.size(); ++k) data_[k] -= o.data_[k];
    return *this;
  }
  EmbeddingMatrix& operator*=(double s) noexcept {
    for (double& v : data_) v *= s;
    return *this;
  }

  /// this += alpha * o
  EmbeddingMatrix& axpy(double alpha, const EmbeddingMatrix& o) {
    require_same_shape(o);
    for (std::size_t k = 0; k < data_.size(); ++k) data_[k] += alpha * o.data_[k];
    return *this;
  }

  friend EmbeddingMatrix operator+(EmbeddingMatrix a, const EmbeddingMatrix& b) { return a += b; }
  friend EmbeddingMatrix operator-(EmbeddingMatrix a, const EmbeddingMatrix& b) { return a -= b; }
  friend EmbeddingMatrix operator*(double s, EmbeddingMatrix a) { return a *= s; }
  friend EmbeddingMatrix operator-(EmbeddingMatrix a) { return a *= -1.0; }

  friend bool operator==(const EmbeddingMatrix&, const EmbeddingMatrix&) = default;

  void require_same_shape(const EmbeddingMatrix& o) const {
    if (!same_shape(o)) {
      throw DimensionError("shape mismatch: " + shape_string() + " vs " + o.shape_string());
    }
  }

  std::string shape_string() const {
    return std::to_string(rows_) + "x" + std::to_string(cols_);
  }

 private:
  static void check_shape(std::size_t rows, std::size_t cols) {
    if (rows == 0 || cols == 0) {
      throw DimensionError("matrix dimensions must be >= 1, got " + std::to_string(rows) + "x" +
                           std::to_string(cols));
    }
  }

  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Frobenius inner product.
inline double frobenius_dot(const EmbeddingMatrix& a, const EmbeddingMatrix& b) {
  a.require_same_shape(b);
  const auto x = a.data();
  const auto y = b.data();
  double s = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) s += x[k] * y[k];
  return s;
}

// ---------------------------------------------------------------------------
// Seeding
// ---------------------------------------------------------------------------

inline std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Mixes an ordered key (run seed, iteration, sample index, ...) into one seed.
/// Distinct keys give independent streams regardless of evaluation order.
inline std::uint64_t derive_seed(std::initializer_list<std::uint64_t> key) noexcept {
  std::uint64_t h = 0x6a09e667f3bcc909ULL;
  for (std::uint64_t k : key) h = splitmix64(h ^ splitmix64(k));
  return h;
}

/// FNV-1a, used to turn strings (prompt ids, request bodies) into seed material.
inline std::uint64_t fnv1a64(std::string_view s) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// ---------------------------------------------------------------------------
// Perturbations
// ---------------------------------------------------------------------------

/// i.i.d. standard-normal direction U, plus the seed that regenerates it.
struct PerturbationMatrix {
  EmbeddingMatrix direction;
  std::uint64_t seed = 0;
};

inline PerturbationMatrix sample_perturbation(std::size_t rows, std::size_t cols,
                                              std::uint64_t seed) {
  EmbeddingMatrix u(rows, cols);  // throws DimensionError on zero dims
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (double& v : u.data()) v = normal(gen);
  return {std::move(u), seed};
}

// ---------------------------------------------------------------------------
// Cosine geometry
// ---------------------------------------------------------------------------

enum class CosineMode { flattened, per_token_mean };

namespace detail {

inline double vector_cosine(std::span<const double> a, std::span<const double> b) {
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    ab += a[k] * b[k];
    aa += a[k] * a[k];
    bb += b[k] * b[k];
  }
  if (aa == 0.0 || bb == 0.0) throw DegenerateInputError("cosine of a zero-norm input");
  return std::clamp(ab / (std::sqrt(aa) * std::sqrt(bb)), -1.0, 1.0);
}

/// Rotates x toward anchor inside span{anchor, x} until cos(x, anchor) == kappa,
/// keeping |x|. No-op when already feasible.
inline void project_vector(std::span<double> x, std::span<const double> anchor, double kappa) {
  const double cos_now = vector_cosine(x, anchor);
  if (cos_now >= kappa) return;

  double aa = 0.0, xx = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    aa += anchor[k] * anchor[k];
    xx += x[k] * x[k];
  }
  const double a_norm = std::sqrt(aa);
  const double x_norm = std::sqrt(xx);
  std::vector<double> a_hat(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) a_hat[k] = anchor[k] / a_norm;

  // r = x minus its a_hat component. Near-antiparallel inputs lose most digits
  // to cancellation, so orthogonalize twice.
  std::vector<double> r(x.begin(), x.end());
  for (int pass = 0; pass < 2; ++pass) {
    double d = 0.0;
    for (std::size_t k = 0; k < r.size(); ++k) d += r[k] * a_hat[k];
    for (std::size_t k = 0; k < r.size(); ++k) r[k] -= d * a_hat[k];
  }
  double rr = 0.0;
  for (double v : r) rr += v * v;
  const double r_norm = std::sqrt(rr);

  if (r_norm <= 1e-12 * x_norm) {
    // Antiparallel: the rotation plane is undefined. kappa < 1 is always
    // satisfiable, so fall back to the rescaled anchor.
    for (std::size_t k = 0; k < x.size(); ++k) x[k] = x_norm * a_hat[k];
    return;
  }

  const double sin_part = std::sqrt(std::max(0.0, 1.0 - kappa * kappa));
  for (std::size_t k = 0; k < x.size(); ++k) {
    x[k] = x_norm * (kappa * a_hat[k] + sin_part * r[k] / r_norm);
  }
}

inline void check_kappa(double kappa) {
  if (!(kappa > -1.0 && kappa < 1.0)) {
    throw ArgumentError("cosine threshold kappa must lie in (-1, 1)");
  }
}

}  // namespace detail

/// <A,B>_F / (|A|_F |B|_F), or the mean of row cosines in per_token_mean mode.
inline double cosine_similarity(const EmbeddingMatrix& a, const EmbeddingMatrix& b,
                                CosineMode mode = CosineMode::flattened) {
  a.require_same_shape(b);
  if (mode == CosineMode::flattened) return detail::vector_cosine(a.data(), b.data());
  double sum = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i) sum += detail::vector_cosine(a.row(i), b.row(i));
  return sum / static_cast<double>(a.rows());
}

/// Projection onto the boundary of {Z : cos(Z, X0) >= kappa}.
///
/// Feasible inputs come back unchanged. Infeasible ones are rotated toward X0
/// in the plane span{X0, X}, which preserves |X|_F and lands exactly on the
/// boundary. In per_token_mean mode each row is projected onto its own row
/// ball, which makes the mean feasible as well.
inline EmbeddingMatrix project_cosine_ball(const EmbeddingMatrix& x, const EmbeddingMatrix& x0,
                                           double kappa,
                                           CosineMode mode = CosineMode::flattened) {
  detail::check_kappa(kappa);
  x.require_same_shape(x0);
  if (x0.squared_norm() == 0.0) throw DegenerateInputError("projection anchor has zero norm");
  if (x.squared_norm() == 0.0) throw DegenerateInputError("projected matrix has zero norm");

  EmbeddingMatrix out = x;
  if (mode == CosineMode::flattened) {
    detail::project_vector(out.data(), x0.data(), kappa);
  } else {
    if (cosine_similarity(x, x0, mode) >= kappa) return out;
    for (std::size_t i = 0; i < out.rows(); ++i) detail::project_vector(out.row(i), x0.row(i), kappa);
  }
  return out;
}

}  // namespace zosteer
