#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "msc/error.hpp"
#include "msc/matrix.hpp"

namespace msc {

/// Norms at or below this are treated as directionless.
inline constexpr double kDegenerateNorm = 1e-12;

inline void check_same_dim(std::span<const double> u, std::span<const double> v) {
  require(u.size() == v.size(), ErrorKind::DimensionMismatch,
          "dimension " + std::to_string(u.size()) + " vs " + std::to_string(v.size()));
}

inline double dot(std::span<const double> u, std::span<const double> v) {
  check_same_dim(u, v);
  double s = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) s += u[i] * v[i];
  return s;
}

inline double norm(std::span<const double> v) { return std::sqrt(dot(v, v)); }

inline Vector l2_normalize(std::span<const double> v) {
  const double n = norm(v);
  require(n > kDegenerateNorm && std::isfinite(n), ErrorKind::DegenerateVector,
          "vector norm " + std::to_string(n) + " is not above the degenerate threshold");
  Vector out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] / n;
  return out;
}

/// Cosine similarity clamped to [-1, 1]. Exactly symmetric in its arguments.
inline double cosine_sim(std::span<const double> u, std::span<const double> v) {
  check_same_dim(u, v);
  const double nu = norm(u);
  const double nv = norm(v);
  require(nu > kDegenerateNorm && nv > kDegenerateNorm, ErrorKind::DegenerateVector,
          "cosine similarity of a degenerate vector");
  return std::clamp(dot(u, v) / (nu * nv), -1.0, 1.0);
}

/// Mean of the L2-normalized training features under the unadapted map.
/// Frozen once built.
class Center {
 public:
  /// Wraps an explicit center vector (e.g. the zero vector for the origin
  /// frame). Rejects vectors outside the unit ball.
  static Center from_vector(Vector c, std::size_t source_count = 0) {
    require(!c.empty(), ErrorKind::InvalidArgument, "center must have dimension >= 1");
    const double n = norm(c);
    require(std::isfinite(n) && n <= 1.0 + 1e-12, ErrorKind::InvariantViolation,
            "center norm " + std::to_string(n) + " exceeds 1");
    return Center(std::move(c), source_count);
  }

  static Center zero(std::size_t dim) { return Center(Vector(dim, 0.0), 0); }

  std::span<const double> values() const noexcept { return c_; }
  const Vector& vector() const noexcept { return c_; }
  std::size_t dim() const noexcept { return c_.size(); }
  std::size_t source_count() const noexcept { return source_count_; }

 private:
  Center(Vector c, std::size_t n) : c_(std::move(c)), source_count_(n) {}

  Vector c_;
  std::size_t source_count_;
};

namespace detail {

/// Neumaier-compensated running sum.
struct CompensatedSum {
  double sum = 0.0;
  double comp = 0.0;

  void add(double x) {
    const double t = sum + x;
    if (std::abs(sum) >= std::abs(x))
      comp += (sum - t) + x;
    else
      comp += (x - t) + sum;
    sum = t;
  }
  double value() const { return sum + comp; }
};

}  // namespace detail

inline Center compute_center(const Matrix& train_features) {
  require(train_features.rows() > 0, ErrorKind::EmptyTrainingSet, "cannot compute a center from zero vectors");
  const std::size_t d = train_features.cols();
  std::vector<detail::CompensatedSum> acc(d);
  for (std::size_t r = 0; r < train_features.rows(); ++r) {
    const Vector u = l2_normalize(train_features.row(r));
    for (std::size_t j = 0; j < d; ++j) acc[j].add(u[j]);
  }
  Vector c(d);
  const auto n = static_cast<double>(train_features.rows());
  for (std::size_t j = 0; j < d; ++j) c[j] = acc[j].value() / n;
  // Rounding can push a singleton's center a hair outside the unit ball.
  const double cn = norm(c);
  if (cn > 1.0)
    for (double& x : c) x /= cn;
  return Center::from_vector(std::move(c), train_features.rows());
}

inline Vector mean_shift(std::span<const double> u_normalized, const Center& center) {
  check_same_dim(u_normalized, center.values());
  Vector out(u_normalized.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = u_normalized[i] - center.values()[i];
  return out;
}

/// Normalizes then mean-shifts, rejecting a post-shift vector with no direction.
inline Vector normalize_and_shift(std::span<const double> raw, const Center& center) {
  Vector shifted = mean_shift(l2_normalize(raw), center);
  require(norm(shifted) > kDegenerateNorm, ErrorKind::DegenerateVector,
          "normalized feature coincides with the center");
  return shifted;
}

}  // namespace msc
