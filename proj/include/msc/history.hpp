#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "msc/adapter.hpp"

namespace msc {

/// Statistics for one epoch boundary. Epoch 0 is the untrained adapter.
struct EpochRecord {
  std::size_t epoch = 0;
  double loss_mean = 0.0;
  double uniformity_origin = 0.0;
  std::optional<double> uniformity_shifted;  // absent when a feature sits on the center
  double aug_similarity_origin = 0.0;
  std::optional<double> aug_similarity_shifted;
  std::optional<double> val_auc;
};

struct Snapshot {
  std::size_t epoch = 0;
  AdapterParams params;
};

struct TrainHistory {
  EpochRecord initial;
  std::vector<EpochRecord> records;  // one per completed epoch, epochs 1..E
  std::vector<Snapshot> snapshots;
  bool collapsed = false;
  std::optional<std::size_t> collapse_epoch;
};

}  // namespace msc
