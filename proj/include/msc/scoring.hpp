#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "msc/adapter.hpp"
#include "msc/data_io.hpp"
#include "msc/error.hpp"
#include "msc/geometry.hpp"
#include "msc/matrix.hpp"
#include "msc/parallel.hpp"
#include "msc/random.hpp"

namespace msc {

enum class GalleryKind { FullTrain, KMeansCentroids };

constexpr std::string_view gallery_kind_name(GalleryKind k) noexcept {
  return k == GalleryKind::FullTrain ? "full_train" : "kmeans_centroids";
}

/// Unit-norm exemplars that queries are scored against.
class Gallery {
 public:
  /// Normalizes every row of `features`.
  static Gallery from_features(const Matrix& features, GalleryKind kind = GalleryKind::FullTrain,
                               std::optional<std::size_t> kmeans_k = std::nullopt) {
    require(features.rows() >= 1, ErrorKind::InvalidArgument, "gallery needs at least one exemplar");
    Gallery g;
    g.exemplars_ = Matrix(features.rows(), features.cols());
    for (std::size_t r = 0; r < features.rows(); ++r) {
      const Vector u = l2_normalize(features.row(r));
      std::copy(u.begin(), u.end(), g.exemplars_.row(r).begin());
    }
    g.kind_ = kind;
    g.kmeans_k_ = kmeans_k;
    return g;
  }

  const Matrix& exemplars() const noexcept { return exemplars_; }
  std::size_t size() const noexcept { return exemplars_.rows(); }
  std::size_t dim() const noexcept { return exemplars_.cols(); }
  GalleryKind kind() const noexcept { return kind_; }
  std::optional<std::size_t> kmeans_k() const noexcept { return kmeans_k_; }

 private:
  Matrix exemplars_;
  GalleryKind kind_ = GalleryKind::FullTrain;
  std::optional<std::size_t> kmeans_k_;
};

/// Sum of (1 - cos) over the k most similar exemplars. Equal similarities
/// rank by lower exemplar index.
inline double knn_score(std::span<const double> query, const Gallery& gallery, std::size_t k) {
  require(k >= 1 && k <= gallery.size(), ErrorKind::KOutOfRange,
          "k = " + std::to_string(k) + " outside [1, " + std::to_string(gallery.size()) + "]");
  require(query.size() == gallery.dim(), ErrorKind::DimensionMismatch, "query and gallery dimensions differ");
  const Vector q = l2_normalize(query);
  std::vector<double> sims(gallery.size());
  for (std::size_t m = 0; m < gallery.size(); ++m)
    sims[m] = std::clamp(dot(q, gallery.exemplars().row(m)), -1.0, 1.0);
  std::vector<std::size_t> order(gallery.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                    [&](std::size_t a, std::size_t b) { return sims[a] > sims[b] || (sims[a] == sims[b] && a < b); });
  double score = 0.0;
  for (std::size_t i = 0; i < k; ++i) score += 1.0 - sims[order[i]];
  return score;
}

// ---------------------------------------------------------------------------
// k-means gallery compression

struct KMeansResult {
  Gallery gallery;
  /// Centroids before re-normalization (cluster means).
  Matrix means;
  std::vector<std::size_t> assignment;
  /// Sum of squared distances to the assigned mean, recorded after every
  /// assignment step; the last entry is the final objective.
  std::vector<double> objective_trace;
  std::size_t iterations = 0;

  double objective() const { return objective_trace.back(); }
};

namespace detail {

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    const double diff = a[j] - b[j];
    s += diff * diff;
  }
  return s;
}

/// k-means++ seeding: first center uniform, then D^2-weighted draws.
inline Matrix kmeans_plus_plus(const Matrix& x, std::size_t k, Rng& rng) {
  const std::size_t n = x.rows();
  Matrix centers(k, x.cols());
  std::vector<bool> chosen(n, false);
  std::size_t first = static_cast<std::size_t>(rng.below(n));
  chosen[first] = true;
  std::copy(x.row(first).begin(), x.row(first).end(), centers.row(0).begin());
  std::vector<double> d2(n);
  for (std::size_t i = 0; i < n; ++i) d2[i] = squared_distance(x.row(i), centers.row(0));
  for (std::size_t c = 1; c < k; ++c) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      if (!chosen[i]) total += d2[i];
    std::size_t pick = n;
    if (total > 0.0) {
      double target = rng.uniform() * total;
      for (std::size_t i = 0; i < n; ++i) {
        if (chosen[i] || d2[i] == 0.0) continue;
        pick = i;
        target -= d2[i];
        if (target < 0.0) break;
      }
    } else {
      // All remaining points coincide with a center; take the lowest unchosen.
      for (std::size_t i = 0; i < n && pick == n; ++i)
        if (!chosen[i]) pick = i;
    }
    chosen[pick] = true;
    std::copy(x.row(pick).begin(), x.row(pick).end(), centers.row(c).begin());
    for (std::size_t i = 0; i < n; ++i) d2[i] = std::min(d2[i], squared_distance(x.row(i), centers.row(c)));
  }
  return centers;
}

}  // namespace detail

/// Lloyd's algorithm with k-means++ seeding on normalized features; the
/// returned gallery holds the re-normalized centroids.
inline KMeansResult kmeans_compress(const Matrix& features, std::size_t k, std::uint64_t seed,
                                    std::size_t max_iters = 100) {
  const std::size_t n = features.rows();
  require(n >= 1, ErrorKind::EmptyTrainingSet, "k-means needs at least one feature");
  require(k >= 1 && k <= n, ErrorKind::KOutOfRange,
          "k-means k = " + std::to_string(k) + " outside [1, " + std::to_string(n) + "]");
  const std::size_t d = features.cols();
  Rng rng(seed);
  Matrix centers = detail::kmeans_plus_plus(features, k, rng);

  KMeansResult result{Gallery{}, {}, std::vector<std::size_t>(n, k), {}, 0};
  for (std::size_t iter = 0; iter < std::max<std::size_t>(max_iters, 1); ++iter) {
    bool changed = false;
    double objective = 0.0;
    std::vector<double> cost(n);
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t best = 0;
      double best_d2 = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < k; ++c) {
        const double d2 = detail::squared_distance(features.row(i), centers.row(c));
        if (d2 < best_d2) {
          best_d2 = d2;
          best = c;
        }
      }
      changed = changed || result.assignment[i] != best;
      result.assignment[i] = best;
      cost[i] = best_d2;
      objective += best_d2;
    }
    result.objective_trace.push_back(objective);
    result.iterations = iter + 1;
    if (!changed && iter > 0) break;

    Matrix sums(k, d);
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      auto s = sums.row(result.assignment[i]);
      const auto xi = features.row(i);
      for (std::size_t j = 0; j < d; ++j) s[j] += xi[j];
      ++counts[result.assignment[i]];
    }
    std::vector<bool> taken(n, false);
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] > 0) {
        for (std::size_t j = 0; j < d; ++j) centers(c, j) = sums(c, j) / static_cast<double>(counts[c]);
        continue;
      }
      // Empty cluster: move it onto the worst-served point.
      std::size_t far = 0;
      double far_cost = -1.0;
      for (std::size_t i = 0; i < n; ++i)
        if (!taken[i] && cost[i] > far_cost) {
          far_cost = cost[i];
          far = i;
        }
      taken[far] = true;
      std::copy(features.row(far).begin(), features.row(far).end(), centers.row(c).begin());
    }
    if (!changed) break;
  }

  // Final objective against the means of the final assignment.
  Matrix means(k, d);
  std::vector<std::size_t> counts(k, 0);
  for (std::size_t i = 0; i < n; ++i) {
    auto s = means.row(result.assignment[i]);
    for (std::size_t j = 0; j < d; ++j) s[j] += features(i, j);
    ++counts[result.assignment[i]];
  }
  for (std::size_t c = 0; c < k; ++c) {
    if (counts[c] == 0) {
      std::copy(centers.row(c).begin(), centers.row(c).end(), means.row(c).begin());
      continue;
    }
    for (std::size_t j = 0; j < d; ++j) means(c, j) /= static_cast<double>(counts[c]);
  }
  double objective = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    objective += detail::squared_distance(features.row(i), means.row(result.assignment[i]));
  if (objective <= result.objective_trace.back()) result.objective_trace.push_back(objective);

  result.means = means;
  result.gallery = Gallery::from_features(means, GalleryKind::KMeansCentroids, k);
  return result;
}

// ---------------------------------------------------------------------------
// ROC-AUC and classification

/// P(score of an anomaly > score of a normal), ties counted 1/2 (midranks).
inline double roc_auc(std::span<const double> scores, std::span<const Label> labels) {
  require(scores.size() == labels.size(), ErrorKind::DimensionMismatch, "scores and labels differ in length");
  const std::size_t n = scores.size();
  std::size_t positives = 0;
  for (Label l : labels) positives += l == Label::Anomalous ? 1 : 0;
  const std::size_t negatives = n - positives;
  require(positives > 0 && negatives > 0, ErrorKind::SingleClassLabels, "ROC-AUC needs both normal and anomalous labels");
  for (double s : scores) require(!std::isnan(s), ErrorKind::InvalidArgument, "NaN score");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Twice the rank sum keeps midranks integral.
  std::uint64_t twice_rank_sum = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const std::uint64_t twice_midrank = (i + 1) + (j + 1);
    for (std::size_t t = i; t <= j; ++t)
      if (labels[order[t]] == Label::Anomalous) twice_rank_sum += twice_midrank;
    i = j + 1;
  }
  const auto p = static_cast<std::uint64_t>(positives);
  // 2U = 2R - p(p+1); AUC = U / (p * q).
  const std::uint64_t twice_u = twice_rank_sum - p * (p + 1);
  return static_cast<double>(twice_u) / (2.0 * static_cast<double>(p) * static_cast<double>(negatives));
}

inline Label classify(double score, double threshold) noexcept {
  return score > threshold ? Label::Anomalous : Label::Normal;
}

struct ScoreReport {
  std::vector<double> scores;
  std::optional<std::vector<Label>> labels;
  std::optional<double> roc_auc;
  std::size_t k = 0;
  GalleryKind gallery_kind = GalleryKind::FullTrain;
  std::size_t gallery_size = 0;
};

/// Scores raw (adapted) features against the gallery.
inline std::vector<double> score_features(const Matrix& adapted, const Gallery& gallery, std::size_t k,
                                          std::size_t threads = 1) {
  std::vector<double> scores(adapted.rows());
  parallel_for(adapted.rows(), threads, [&](std::size_t i) { scores[i] = knn_score(adapted.row(i), gallery, k); });
  return scores;
}

/// Maps every test row through the adapter, scores it, and computes
/// ROC-AUC when labels are present.
inline ScoreReport evaluate(const FeatureSet& test, const AdapterParams& params, const Gallery& gallery,
                            std::size_t k, std::size_t threads = 1) {
  require(test.d == params.d && gallery.dim() == params.d, ErrorKind::DimensionMismatch,
          "test, adapter and gallery dimensions differ");
  const Matrix adapted = adapter_forward(test.to_matrix(), params);
  ScoreReport report;
  report.scores = score_features(adapted, gallery, k, threads);
  report.k = k;
  report.gallery_kind = gallery.kind();
  report.gallery_size = gallery.size();
  if (test.labels) {
    report.labels = test.labels;
    report.roc_auc = roc_auc(report.scores, *test.labels);
  }
  return report;
}

}  // namespace msc
