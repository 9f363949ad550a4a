#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <string_view>

#include "msc/error.hpp"
#include "msc/geometry.hpp"
#include "msc/matrix.hpp"

namespace msc {

enum class Objective { Center, AngularCenter, Contrastive, Msc, MscPlusAngular };

/// CLI vocabulary: center, ang-center, contrastive, msc, msc+ang.
constexpr std::string_view objective_name(Objective o) noexcept {
  switch (o) {
    case Objective::Center: return "center";
    case Objective::AngularCenter: return "ang-center";
    case Objective::Contrastive: return "contrastive";
    case Objective::Msc: return "msc";
    case Objective::MscPlusAngular: return "msc+ang";
  }
  return "?";
}

inline Objective parse_objective(std::string_view name) {
  for (auto o : {Objective::Center, Objective::AngularCenter, Objective::Contrastive, Objective::Msc,
                 Objective::MscPlusAngular})
    if (objective_name(o) == name) return o;
  fail(ErrorKind::InvalidArgument, "unknown objective '" + std::string(name) + "'");
}

struct LossConfig {
  Objective objective = Objective::Msc;
  double tau = 0.25;
  /// Weight of the angular center term in msc+ang.
  double lambda = 1.0;

  void validate() const {
    require(std::isfinite(tau) && tau > 0.0, ErrorKind::InvalidArgument, "tau must be > 0");
    require(std::isfinite(lambda) && lambda >= 0.0, ErrorKind::InvalidArgument, "lambda must be finite and >= 0");
  }
};

/// Loss value and its gradient w.r.t. the raw (pre-normalization) embeddings,
/// one gradient row per input row.
struct LossResult {
  double value = 0.0;
  Matrix grads;
};

namespace detail {

/// Backprop through u = v / |v|: returns (g - (g.u) u) / |v|.
inline void normalize_backward(std::span<const double> unit, double raw_norm, std::span<double> grad) {
  const double gu = dot(grad, unit);
  for (std::size_t j = 0; j < grad.size(); ++j) grad[j] = (grad[j] - gu * unit[j]) / raw_norm;
}

/// NT-Xent over rows that are already unit vectors. Row i is paired with
/// row (i + B) mod 2B. Returns the anchor-mean loss; `grad_units` receives
/// d loss / d unit rows.
inline double ntxent_on_units(const Matrix& units, double tau, Matrix& grad_units) {
  const std::size_t n = units.rows();
  const std::size_t half = n / 2;
  grad_units = Matrix(n, units.cols());
  if (n == 2) return 0.0;

  Matrix sims(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t m = i; m < n; ++m) {
      const double s = std::clamp(dot(units.row(i), units.row(m)), -1.0, 1.0);
      sims(i, m) = s;
      sims(m, i) = s;
    }

  // coeff(i, m) = d loss / d logit(i, m), logit = sim / tau.
  Matrix coeff(n, n);
  const double inv_n = 1.0 / static_cast<double>(n);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t pos = (i + half) % n;
    double max_logit = -std::numeric_limits<double>::infinity();
    for (std::size_t m = 0; m < n; ++m)
      if (m != i) max_logit = std::max(max_logit, sims(i, m) / tau);
    double denom = 0.0;
    for (std::size_t m = 0; m < n; ++m)
      if (m != i) denom += std::exp(sims(i, m) / tau - max_logit);
    const double lse = max_logit + std::log(denom);
    // Per-anchor term is a negative log-probability; rounding can dip below 0.
    total += std::max(0.0, lse - sims(i, pos) / tau);
    for (std::size_t m = 0; m < n; ++m) {
      if (m == i) continue;
      const double p = std::exp(sims(i, m) / tau - lse);
      coeff(i, m) = inv_n * (p - (m == pos ? 1.0 : 0.0));
    }
  }

  for (std::size_t i = 0; i < n; ++i) {
    auto g = grad_units.row(i);
    for (std::size_t m = 0; m < n; ++m) {
      if (m == i) continue;
      const double w = (coeff(i, m) + coeff(m, i)) / tau;
      const auto um = units.row(m);
      for (std::size_t j = 0; j < g.size(); ++j) g[j] += w * um[j];
    }
  }
  return total * inv_n;
}

inline void check_batch(const Matrix& batch) {
  require(batch.rows() >= 2 && batch.rows() % 2 == 0, ErrorKind::BatchTooSmall,
          "contrastive objectives need an even batch of at least 2 rows, got " + std::to_string(batch.rows()));
}

}  // namespace detail

inline LossResult center_loss(std::span<const double> z, const Center& c) {
  check_same_dim(z, c.values());
  LossResult r{0.0, Matrix(1, z.size())};
  for (std::size_t j = 0; j < z.size(); ++j) {
    const double diff = z[j] - c.values()[j];
    r.value += diff * diff;
    r.grads(0, j) = 2.0 * diff;
  }
  return r;
}

/// -normalize(z) . c, differentiated through the normalization.
inline LossResult angular_center_loss(std::span<const double> z, const Center& c) {
  check_same_dim(z, c.values());
  const Vector u = l2_normalize(z);
  LossResult r{-dot(u, c.values()), Matrix(1, z.size())};
  auto g = r.grads.row(0);
  for (std::size_t j = 0; j < z.size(); ++j) g[j] = -c.values()[j];
  detail::normalize_backward(u, norm(z), g);
  return r;
}

/// Anchor-mean NT-Xent with cosine similarity around the origin. Rows i and
/// i + B of the 2B-row batch are positives.
inline LossResult contrastive_loss(const Matrix& batch, const LossConfig& cfg) {
  cfg.validate();
  detail::check_batch(batch);
  const std::size_t n = batch.rows();
  Matrix units(n, batch.cols());
  std::vector<double> norms(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Vector u = l2_normalize(batch.row(i));
    norms[i] = norm(batch.row(i));
    std::copy(u.begin(), u.end(), units.row(i).begin());
  }
  LossResult r;
  r.value = detail::ntxent_on_units(units, cfg.tau, r.grads);
  for (std::size_t i = 0; i < n; ++i) detail::normalize_backward(units.row(i), norms[i], r.grads.row(i));
  return r;
}

/// Mean-shifted contrastive loss: NT-Xent where similarities are measured
/// between normalize(z) - c vectors.
inline LossResult msc_loss(const Matrix& batch, const Center& c, const LossConfig& cfg) {
  cfg.validate();
  detail::check_batch(batch);
  require(batch.cols() == c.dim(), ErrorKind::DimensionMismatch, "batch and center dimensions differ");
  const std::size_t n = batch.rows();
  const std::size_t d = batch.cols();
  Matrix normalized(n, d);
  Matrix units(n, d);
  std::vector<double> raw_norms(n);
  std::vector<double> shifted_norms(n);
  for (std::size_t i = 0; i < n; ++i) {
    raw_norms[i] = norm(batch.row(i));
    const Vector nz = l2_normalize(batch.row(i));
    const Vector shifted = mean_shift(nz, c);
    shifted_norms[i] = norm(shifted);
    require(shifted_norms[i] > kDegenerateNorm, ErrorKind::DegenerateVector,
            "row " + std::to_string(i) + " coincides with the center after normalization");
    std::copy(nz.begin(), nz.end(), normalized.row(i).begin());
    for (std::size_t j = 0; j < d; ++j) units(i, j) = shifted[j] / shifted_norms[i];
  }
  LossResult r;
  r.value = detail::ntxent_on_units(units, cfg.tau, r.grads);
  for (std::size_t i = 0; i < n; ++i) {
    auto g = r.grads.row(i);
    detail::normalize_backward(units.row(i), shifted_norms[i], g);  // through the shifted normalization
    detail::normalize_backward(normalized.row(i), raw_norms[i], g);  // the shift has unit Jacobian
  }
  return r;
}

/// Batch mean of a per-row objective.
template <typename RowLoss>
LossResult mean_over_rows(const Matrix& batch, RowLoss&& row_loss) {
  require(batch.rows() >= 1, ErrorKind::BatchTooSmall, "empty batch");
  LossResult r{0.0, Matrix(batch.rows(), batch.cols())};
  const double inv_n = 1.0 / static_cast<double>(batch.rows());
  for (std::size_t i = 0; i < batch.rows(); ++i) {
    const LossResult one = row_loss(batch.row(i));
    r.value += one.value;
    auto g = r.grads.row(i);
    for (std::size_t j = 0; j < g.size(); ++j) g[j] = inv_n * one.grads(0, j);
  }
  r.value *= inv_n;
  return r;
}

/// msc + lambda * batch-mean angular center loss.
inline LossResult combined_loss(const Matrix& batch, const Center& c, const LossConfig& cfg) {
  LossResult r = msc_loss(batch, c, cfg);
  if (cfg.lambda == 0.0) return r;
  const LossResult ang =
      mean_over_rows(batch, [&](std::span<const double> z) { return angular_center_loss(z, c); });
  r.value += cfg.lambda * ang.value;
  for (std::size_t k = 0; k < r.grads.data().size(); ++k) r.grads.data()[k] += cfg.lambda * ang.grads.data()[k];
  return r;
}

/// Evaluates the configured objective on a 2B-row batch.
inline LossResult batch_loss(const Matrix& batch, const Center& c, const LossConfig& cfg) {
  cfg.validate();
  switch (cfg.objective) {
    case Objective::Center:
      return mean_over_rows(batch, [&](std::span<const double> z) { return center_loss(z, c); });
    case Objective::AngularCenter:
      return mean_over_rows(batch, [&](std::span<const double> z) { return angular_center_loss(z, c); });
    case Objective::Contrastive: return contrastive_loss(batch, cfg);
    case Objective::Msc: return msc_loss(batch, c, cfg);
    case Objective::MscPlusAngular: return combined_loss(batch, c, cfg);
  }
  fail(ErrorKind::InvalidArgument, "unknown objective");
}

}  // namespace msc
