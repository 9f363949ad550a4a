#pragma once

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <string>

#include "json.hpp"
#include "msc/diagnostics.hpp"
#include "msc/error.hpp"
#include "msc/scoring.hpp"

namespace msc {

/// query_id,score,label (label empty when unknown).
inline void write_scores_csv(const ScoreReport& report, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  require(static_cast<bool>(out), ErrorKind::IoError, "cannot write " + path.string());
  out << std::setprecision(17) << "query_id,score,label\n";
  for (std::size_t i = 0; i < report.scores.size(); ++i) {
    out << i << ',' << report.scores[i] << ',';
    if (report.labels) out << static_cast<int>((*report.labels)[i]);
    out << '\n';
  }
  require(static_cast<bool>(out), ErrorKind::IoError, "write failed for " + path.string());
}

inline nlohmann::json summary_json(const ScoreReport& report) {
  nlohmann::json j;
  j["auc"] = report.roc_auc ? nlohmann::json(*report.roc_auc) : nlohmann::json(nullptr);
  j["k"] = report.k;
  j["gallery_kind"] = gallery_kind_name(report.gallery_kind);
  j["gallery_size"] = report.gallery_size;
  j["queries"] = report.scores.size();
  return j;
}

inline nlohmann::json histogram_json(const Histogram& h) {
  return {{"quantity", h.quantity},
          {"unit", h.unit},
          {"bin_edges", h.bin_edges},
          {"counts", {{"normal", h.normal_counts}, {"anomalous", h.anomalous_counts}}}};
}

inline void write_json(const nlohmann::json& j, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  require(static_cast<bool>(out), ErrorKind::IoError, "cannot write " + path.string());
  out << j.dump(2) << '\n';
  require(static_cast<bool>(out), ErrorKind::IoError, "write failed for " + path.string());
}

}  // namespace msc
