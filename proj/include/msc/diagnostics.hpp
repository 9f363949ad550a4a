#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "msc/data_io.hpp"
#include "msc/error.hpp"
#include "msc/geometry.hpp"
#include "msc/history.hpp"
#include "msc/matrix.hpp"
#include "msc/random.hpp"

namespace msc {

enum class Frame { Origin, MeanShifted };

constexpr std::string_view frame_name(Frame f) noexcept { return f == Frame::Origin ? "origin" : "mean_shifted"; }

inline constexpr std::size_t kDefaultSamplePairs = 10'000;
inline constexpr std::size_t kDefaultBins = 50;
inline constexpr double kCollapseUniformity = 1.0 - 1e-3;

namespace detail {

/// Unit direction of each row in the requested frame: normalize(x) around the
/// origin, or normalize(normalize(x) - c) around the center.
inline Matrix frame_directions(const Matrix& features, Frame frame, const Center& c) {
  Matrix out(features.rows(), features.cols());
  for (std::size_t i = 0; i < features.rows(); ++i) {
    const Vector v = frame == Frame::Origin ? l2_normalize(features.row(i))
                                            : l2_normalize(normalize_and_shift(features.row(i), c));
    std::copy(v.begin(), v.end(), out.row(i).begin());
  }
  return out;
}

}  // namespace detail

/// Mean cosine similarity between pairs of distinct training features.
/// Exhaustive when sample_pairs covers all N(N-1)/2 pairs, otherwise a
/// seeded sample of pairs (with replacement).
inline double uniformity(const Matrix& features, Frame frame, const Center& c,
                         std::size_t sample_pairs = kDefaultSamplePairs, std::uint64_t seed = 0) {
  const std::size_t n = features.rows();
  require(n >= 2, ErrorKind::InvalidArgument, "uniformity needs at least two features");
  const Matrix dirs = detail::frame_directions(features, frame, c);
  detail::CompensatedSum sum;
  const std::size_t all_pairs = n * (n - 1) / 2;
  if (sample_pairs >= all_pairs) {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) sum.add(std::clamp(dot(dirs.row(i), dirs.row(j)), -1.0, 1.0));
    return sum.value() / static_cast<double>(all_pairs);
  }
  require(sample_pairs >= 1, ErrorKind::InvalidArgument, "sample_pairs must be >= 1");
  Rng rng(seed);
  for (std::size_t s = 0; s < sample_pairs; ++s) {
    const auto i = static_cast<std::size_t>(rng.below(n));
    auto j = static_cast<std::size_t>(rng.below(n - 1));
    if (j >= i) ++j;
    sum.add(std::clamp(dot(dirs.row(i), dirs.row(j)), -1.0, 1.0));
  }
  return sum.value() / static_cast<double>(sample_pairs);
}

/// Mean cosine similarity between the two views of each sample; row i of
/// `first` pairs with row i of `second`.
inline double augmentation_similarity(const Matrix& first, const Matrix& second, Frame frame, const Center& c) {
  require(first.rows() >= 1, ErrorKind::InvalidArgument, "augmentation similarity needs at least one pair");
  require(first.rows() == second.rows() && first.cols() == second.cols(), ErrorKind::DimensionMismatch,
          "view matrices differ in shape");
  const Matrix a = detail::frame_directions(first, frame, c);
  const Matrix b = detail::frame_directions(second, frame, c);
  detail::CompensatedSum sum;
  for (std::size_t i = 0; i < a.rows(); ++i) sum.add(std::clamp(dot(a.row(i), b.row(i)), -1.0, 1.0));
  return sum.value() / static_cast<double>(a.rows());
}

// ---------------------------------------------------------------------------
// Histograms

struct Histogram {
  std::string quantity;  // e.g. "confidence", "angle"
  std::string unit;      // "norm" or "radians"
  std::vector<double> bin_edges;
  std::vector<std::size_t> normal_counts;
  std::vector<std::size_t> anomalous_counts;

  std::size_t bins() const { return normal_counts.size(); }

  /// Half-open bins except the last, which is closed.
  void add(double value, Label label) {
    const std::size_t n = bins();
    std::size_t b = static_cast<std::size_t>(
        std::upper_bound(bin_edges.begin(), bin_edges.end(), value) - bin_edges.begin());
    b = b == 0 ? 0 : std::min(b - 1, n - 1);
    (label == Label::Normal ? normal_counts : anomalous_counts)[b] += 1;
  }
};

namespace detail {

inline Histogram make_histogram(std::string quantity, std::string unit, double lo, double hi, std::size_t bins) {
  require(bins >= 1, ErrorKind::InvalidArgument, "histogram needs at least one bin");
  Histogram h{std::move(quantity), std::move(unit), std::vector<double>(bins + 1), std::vector<std::size_t>(bins, 0),
              std::vector<std::size_t>(bins, 0)};
  for (std::size_t b = 0; b <= bins; ++b)
    h.bin_edges[b] = lo + (hi - lo) * static_cast<double>(b) / static_cast<double>(bins);
  h.bin_edges.back() = hi;
  return h;
}

}  // namespace detail

/// Per-class histogram of raw feature norms, equal-width bins over the
/// observed range. A single observed value gets a unit-width range.
inline Histogram confidence_stats(const Matrix& raw_features, std::span<const Label> labels,
                                  std::size_t bins = kDefaultBins) {
  require(raw_features.rows() >= 1, ErrorKind::InvalidArgument, "confidence histogram needs features");
  require(labels.size() == raw_features.rows(), ErrorKind::DimensionMismatch, "labels do not cover all rows");
  std::vector<double> norms(raw_features.rows());
  for (std::size_t i = 0; i < norms.size(); ++i) norms[i] = norm(raw_features.row(i));
  const auto [lo_it, hi_it] = std::minmax_element(norms.begin(), norms.end());
  double lo = *lo_it;
  double hi = *hi_it;
  if (hi <= lo) hi = lo + 1.0;
  Histogram h = detail::make_histogram("confidence", "norm", lo, hi, bins);
  for (std::size_t i = 0; i < norms.size(); ++i) h.add(norms[i], labels[i]);
  return h;
}

/// Per-class histogram of angles in [0, pi].
///
/// Origin frame: angle between normalize(x) and c.
/// Mean-shifted frame: angle between normalize(x) - c and -c, i.e. 0 when the
/// shifted feature points back toward the origin.
inline Histogram angular_histogram(const Matrix& features, const Center& c, Frame frame,
                                   std::span<const Label> labels, std::size_t bins = kDefaultBins) {
  require(labels.size() == features.rows(), ErrorKind::DimensionMismatch, "labels do not cover all rows");
  require(norm(c.values()) > kDegenerateNorm, ErrorKind::DegenerateVector, "angular histogram needs a non-zero center");
  Vector reference = c.vector();
  if (frame == Frame::MeanShifted)
    for (double& v : reference) v = -v;
  Histogram h = detail::make_histogram("angle", "radians", 0.0, std::numbers::pi, bins);
  for (std::size_t i = 0; i < features.rows(); ++i) {
    const Vector v = frame == Frame::Origin ? l2_normalize(features.row(i)) : normalize_and_shift(features.row(i), c);
    h.add(std::acos(cosine_sim(v, reference)), labels[i]);
  }
  return h;
}

// ---------------------------------------------------------------------------
// Collapse monitoring

struct CollapseReport {
  std::optional<std::size_t> collapse_epoch;
  std::string reason;  // "uniformity", "auc_drop" or empty
  double uniformity_threshold = kCollapseUniformity;
  double auc_drop = 0.1;
};

/// Earliest epoch whose origin-frame uniformity exceeds the threshold or
/// whose validation AUC falls more than `auc_drop` below the running max.
/// `auc_by_epoch`, when given, overrides the recorded AUCs and is indexed by
/// position in history.records.
inline CollapseReport collapse_monitor(const TrainHistory& history,
                                       std::optional<std::vector<double>> auc_by_epoch = std::nullopt,
                                       double auc_drop = 0.1) {
  require(!history.records.empty(), ErrorKind::InvalidArgument, "collapse monitor needs a non-empty history");
  CollapseReport report;
  report.auc_drop = auc_drop;
  std::optional<double> best_auc = auc_by_epoch ? std::nullopt : history.initial.val_auc;
  for (std::size_t i = 0; i < history.records.size(); ++i) {
    const EpochRecord& rec = history.records[i];
    if (rec.uniformity_origin > report.uniformity_threshold) {
      report.collapse_epoch = rec.epoch;
      report.reason = "uniformity";
      return report;
    }
    std::optional<double> auc = rec.val_auc;
    if (auc_by_epoch && i < auc_by_epoch->size()) auc = (*auc_by_epoch)[i];
    if (auc) {
      if (best_auc && *auc < *best_auc - auc_drop) {
        report.collapse_epoch = rec.epoch;
        report.reason = "auc_drop";
        return report;
      }
      best_auc = best_auc ? std::max(*best_auc, *auc) : *auc;
    }
  }
  return report;
}

// ---------------------------------------------------------------------------
// CSV export: diag_<metric>_<frame>.csv with columns epoch,metric,frame,value

struct MetricPoint {
  std::size_t epoch = 0;
  double value = 0.0;
};

inline std::filesystem::path write_metric_csv(const std::filesystem::path& dir, std::string_view metric, Frame frame,
                                              std::span<const MetricPoint> points) {
  const auto path = dir / ("diag_" + std::string(metric) + "_" + std::string(frame_name(frame)) + ".csv");
  std::ofstream out(path, std::ios::trunc);
  require(static_cast<bool>(out), ErrorKind::IoError, "cannot write " + path.string());
  out << std::setprecision(17) << "epoch,metric,frame,value\n";
  for (const auto& p : points) out << p.epoch << ',' << metric << ',' << frame_name(frame) << ',' << p.value << '\n';
  require(static_cast<bool>(out), ErrorKind::IoError, "write failed for " + path.string());
  return path;
}

/// Writes per-epoch curves (including epoch 0) for every statistic in the
/// history; returns the written paths.
inline std::vector<std::filesystem::path> write_history_curves(const std::filesystem::path& dir,
                                                               const TrainHistory& history) {
  std::vector<const EpochRecord*> all{&history.initial};
  for (const auto& r : history.records) all.push_back(&r);
  std::vector<MetricPoint> loss, uni_o, uni_s, aug_o, aug_s, auc;
  for (const EpochRecord* r : all) {
    if (r->epoch > 0) loss.push_back({r->epoch, r->loss_mean});
    uni_o.push_back({r->epoch, r->uniformity_origin});
    if (r->uniformity_shifted) uni_s.push_back({r->epoch, *r->uniformity_shifted});
    aug_o.push_back({r->epoch, r->aug_similarity_origin});
    if (r->aug_similarity_shifted) aug_s.push_back({r->epoch, *r->aug_similarity_shifted});
    if (r->val_auc) auc.push_back({r->epoch, *r->val_auc});
  }
  std::vector<std::filesystem::path> paths;
  paths.push_back(write_metric_csv(dir, "loss", Frame::Origin, loss));
  paths.push_back(write_metric_csv(dir, "uniformity", Frame::Origin, uni_o));
  paths.push_back(write_metric_csv(dir, "uniformity", Frame::MeanShifted, uni_s));
  paths.push_back(write_metric_csv(dir, "aug_similarity", Frame::Origin, aug_o));
  paths.push_back(write_metric_csv(dir, "aug_similarity", Frame::MeanShifted, aug_s));
  if (!auc.empty()) paths.push_back(write_metric_csv(dir, "val_auc", Frame::Origin, auc));
  return paths;
}

}  // namespace msc
