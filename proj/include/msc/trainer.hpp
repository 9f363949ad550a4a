#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>

#include "msc/adapter.hpp"
#include "msc/data_io.hpp"
#include "msc/diagnostics.hpp"
#include "msc/error.hpp"
#include "msc/geometry.hpp"
#include "msc/history.hpp"
#include "msc/losses.hpp"
#include "msc/random.hpp"
#include "msc/scoring.hpp"

namespace msc {

struct TrainConfig {
  LossConfig loss;
  std::size_t epochs = 25;
  std::size_t batch_size = 64;
  double learning_rate = 1e-2;
  double weight_decay = 5e-5;
  std::size_t hidden = 0;  // 0: same as the feature dimension
  std::uint64_t seed = 0;
  std::size_t snapshot_every = 5;
  AugmentationPolicy augmentation;
  std::size_t diag_pairs = kDefaultSamplePairs;
  std::size_t val_k = 2;
  std::size_t threads = 1;

  void validate() const {
    loss.validate();
    require(epochs >= 1, ErrorKind::InvalidArgument, "epochs must be >= 1");
    require(batch_size >= 1, ErrorKind::InvalidArgument, "batch size must be >= 1");
    require(std::isfinite(learning_rate) && learning_rate >= 0.0, ErrorKind::InvalidArgument,
            "learning rate must be finite and >= 0");
    require(std::isfinite(weight_decay) && weight_decay >= 0.0, ErrorKind::InvalidArgument,
            "weight decay must be finite and >= 0");
    require(val_k >= 1, ErrorKind::InvalidArgument, "validation k must be >= 1");
  }
};

struct TrainResult {
  AdapterParams params;
  TrainHistory history;
  Center center;
};

namespace detail {

struct EpochProbe {
  const Matrix& train;
  const Center& center;
  Matrix view_first;
  Matrix view_second;
  std::optional<Matrix> val;
  std::optional<std::vector<Label>> val_labels;
  const TrainConfig& cfg;
  std::uint64_t pair_seed;

  EpochRecord measure(const AdapterParams& params, std::size_t epoch, double loss_mean) const {
    EpochRecord rec;
    rec.epoch = epoch;
    rec.loss_mean = loss_mean;
    const Matrix adapted = adapter_forward(train, params);
    rec.uniformity_origin = uniformity(adapted, Frame::Origin, center, cfg.diag_pairs, pair_seed);
    const Matrix a = adapter_forward(view_first, params);
    const Matrix b = adapter_forward(view_second, params);
    rec.aug_similarity_origin = augmentation_similarity(a, b, Frame::Origin, center);
    try {
      rec.uniformity_shifted = uniformity(adapted, Frame::MeanShifted, center, cfg.diag_pairs, pair_seed);
      rec.aug_similarity_shifted = augmentation_similarity(a, b, Frame::MeanShifted, center);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::DegenerateVector) throw;
    }
    if (val) {
      const Gallery gallery = Gallery::from_features(adapted);
      const auto scores =
          score_features(adapter_forward(*val, params), gallery, std::min(cfg.val_k, gallery.size()), cfg.threads);
      rec.val_auc = roc_auc(scores, *val_labels);
    }
    return rec;
  }
};

}  // namespace detail

/// Fine-tunes the residual adapter on an all-normal training set. The center
/// is computed once from the raw features and stays frozen.
inline TrainResult train(const FeatureSet& train_fs, const std::optional<FeatureSet>& val_fs, const TrainConfig& cfg,
                         const std::function<void(const EpochRecord&)>& on_epoch = {}) {
  cfg.validate();
  train_fs.validate();
  require(train_fs.all_normal(), ErrorKind::InvariantViolation, "training split contains anomalous rows");
  const Matrix raw = train_fs.to_matrix();
  const Center center = compute_center(raw);
  const std::size_t hidden = cfg.hidden == 0 ? train_fs.d : cfg.hidden;
  AdapterParams params = AdapterParams::identity_init(train_fs.d, hidden, derive_seed(cfg.seed, 1));

  // Fixed two-view sample for augmentation-similarity curves.
  Matrix first;
  Matrix second;
  {
    const auto probe_batches =
        make_batches(train_fs, cfg.augmentation, std::max<std::size_t>(train_fs.n, 2), derive_seed(cfg.seed, 2));
    require(!probe_batches.empty(), ErrorKind::InvalidArgument, "training set too small to form a view pair");
    const Batch& b = probe_batches.front();
    first = Matrix(b.pairs(), train_fs.d);
    second = Matrix(b.pairs(), train_fs.d);
    for (std::size_t i = 0; i < b.pairs(); ++i) {
      std::copy(b.rows.row(i).begin(), b.rows.row(i).end(), first.row(i).begin());
      std::copy(b.rows.row(i + b.pairs()).begin(), b.rows.row(i + b.pairs()).end(), second.row(i).begin());
    }
  }
  detail::EpochProbe probe{raw, center, std::move(first), std::move(second), std::nullopt, std::nullopt,
                           cfg, derive_seed(cfg.seed, 3)};
  if (val_fs) {
    val_fs->validate();
    require(val_fs->d == train_fs.d, ErrorKind::DimensionMismatch, "validation and training dimensions differ");
    require(val_fs->labels.has_value(), ErrorKind::InvalidArgument, "validation set needs labels");
    probe.val = val_fs->to_matrix();
    probe.val_labels = val_fs->labels;
  }

  TrainResult result{params, {}, center};
  TrainHistory& history = result.history;
  history.initial = probe.measure(params, 0, 0.0);
  if (on_epoch) on_epoch(history.initial);

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto batches = make_batches(train_fs, cfg.augmentation, cfg.batch_size, derive_seed(cfg.seed, 100 + epoch));
    require(!batches.empty(), ErrorKind::InvalidArgument, "training set yields no batches at this batch size");
    double loss_sum = 0.0;
    for (const Batch& batch : batches) {
      const Matrix out = adapter_forward(batch.rows, params);
      const LossResult loss = batch_loss(out, center, cfg.loss);
      const AdapterGrads grads = adapter_backward(batch.rows, params, loss.grads);
      params = sgd_step(params, grads, cfg.learning_rate, cfg.weight_decay);
      loss_sum += loss.value;
    }
    EpochRecord rec = probe.measure(params, epoch, loss_sum / static_cast<double>(batches.size()));
    if (!history.collapsed && rec.uniformity_origin > kCollapseUniformity) {
      history.collapsed = true;
      history.collapse_epoch = epoch;
    }
    if (on_epoch) on_epoch(rec);
    history.records.push_back(std::move(rec));
    if ((cfg.snapshot_every > 0 && epoch % cfg.snapshot_every == 0) || epoch == cfg.epochs)
      history.snapshots.push_back({epoch, params});
  }
  result.params = std::move(params);
  return result;
}

// ---------------------------------------------------------------------------
// Gradient checking of loss(adapter(batch)) w.r.t. adapter parameters

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t trials = 0;
  double tolerance = 0.0;
  bool passed = false;
};

/// Random (params, batch, center) instance used by grad_check; d in {3, 8},
/// 2B in {2, 4, 8}, cycling so every combination appears.
struct GradCheckCase {
  AdapterParams params;
  Matrix batch;
  Center center;
};

inline GradCheckCase make_grad_check_case(std::size_t trial, std::uint64_t seed) {
  static constexpr std::size_t dims[] = {3, 8};
  static constexpr std::size_t batch_rows[] = {2, 4, 8};
  const std::size_t d = dims[trial % 2];
  const std::size_t n = batch_rows[(trial / 2) % 3];
  Rng rng(derive_seed(seed, trial));
  AdapterParams p = AdapterParams::zeros(d, d);
  const double w1_std = 1.0 / std::sqrt(static_cast<double>(d));
  for (double& v : p.w1.data()) v = w1_std * rng.normal();
  for (double& v : p.b1) v = 0.1 * rng.normal();
  for (double& v : p.w2.data()) v = 0.3 * rng.normal();
  for (double& v : p.b2) v = 0.1 * rng.normal();

  // Samples share a common direction so the center is well inside the ball.
  Vector offset(d);
  for (double& v : offset) v = rng.normal();
  auto draw = [&](Matrix& m) {
    for (std::size_t r = 0; r < m.rows(); ++r)
      for (std::size_t j = 0; j < d; ++j) m(r, j) = offset[j] + 0.7 * rng.normal();
  };
  Matrix reference(16, d);
  draw(reference);
  Matrix batch(n, d);
  draw(batch);
  return {std::move(p), std::move(batch), compute_center(reference)};
}

/// Norm-wise relative error ||a - b|| / max(||a||, ||b||); 0 when both vanish.
inline double relative_error(std::span<const double> a, std::span<const double> b) {
  double diff = 0.0;
  double na = 0.0;
  double nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double scale = std::sqrt(std::max(na, nb));
  if (scale < 1e-10) return std::sqrt(diff);
  return std::sqrt(diff) / scale;
}

inline GradCheckReport grad_check(const LossConfig& cfg, std::size_t trials, double tolerance, std::uint64_t seed = 0,
                                  double step = 1e-6) {
  cfg.validate();
  GradCheckReport report;
  report.trials = trials;
  report.tolerance = tolerance;
  for (std::size_t t = 0; t < trials; ++t) {
    GradCheckCase gc = make_grad_check_case(t, seed);
    auto value_at = [&](const AdapterParams& p) { return batch_loss(adapter_forward(gc.batch, p), gc.center, cfg).value; };
    const LossResult loss = batch_loss(adapter_forward(gc.batch, gc.params), gc.center, cfg);
    const Vector analytic = adapter_backward(gc.batch, gc.params, loss.grads).flatten();

    Vector numeric;
    numeric.reserve(analytic.size());
    AdapterParams probe = gc.params;
    probe.for_each([&](double& v) {
      const double saved = v;
      v = saved + step;
      const double up = value_at(probe);
      v = saved - step;
      const double down = value_at(probe);
      v = saved;
      numeric.push_back((up - down) / (2.0 * step));
    });
    report.max_rel_error = std::max(report.max_rel_error, relative_error(analytic, numeric));
  }
  report.passed = report.max_rel_error < tolerance;
  return report;
}

}  // namespace msc
