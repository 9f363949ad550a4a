#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "msc/error.hpp"
#include "msc/geometry.hpp"
#include "msc/matrix.hpp"
#include "msc/random.hpp"

namespace msc {

enum class Label : std::uint8_t { Normal = 0, Anomalous = 1 };

/// Raw embeddings as extracted (32-bit), with optional evaluation labels and
/// an optional two-view pairing.
struct FeatureSet {
  std::size_t n = 0;
  std::size_t d = 0;
  std::vector<float> values;  // n * d, row-major
  std::optional<std::vector<Label>> labels;
  std::optional<std::vector<std::uint64_t>> view_of;

  std::span<const float> row(std::size_t i) const { return {values.data() + i * d, d}; }

  Matrix to_matrix() const {
    Matrix m(n, d);
    for (std::size_t i = 0; i < values.size(); ++i) m.data()[i] = values[i];
    return m;
  }

  static FeatureSet from_matrix(const Matrix& m) {
    FeatureSet fs;
    fs.n = m.rows();
    fs.d = m.cols();
    fs.values.resize(m.data().size());
    for (std::size_t i = 0; i < fs.values.size(); ++i) fs.values[i] = static_cast<float>(m.data()[i]);
    return fs;
  }

  bool all_normal() const {
    if (!labels) return true;
    return std::all_of(labels->begin(), labels->end(), [](Label l) { return l == Label::Normal; });
  }

  /// Throws InvariantViolation naming the first broken invariant.
  void validate() const {
    require(n >= 1, ErrorKind::InvariantViolation, "feature set has no rows");
    require(d >= 2, ErrorKind::InvariantViolation, "feature dimension must be >= 2");
    require(values.size() == n * d, ErrorKind::InvariantViolation, "value count does not equal n*d");
    for (std::size_t i = 0; i < values.size(); ++i)
      require(std::isfinite(values[i]), ErrorKind::InvariantViolation,
              "non-finite value at row " + std::to_string(i / d));
    if (labels) require(labels->size() == n, ErrorKind::InvariantViolation, "labels do not cover all rows");
    if (view_of) {
      const auto& v = *view_of;
      require(v.size() == n, ErrorKind::InvariantViolation, "view_of does not cover all rows");
      for (std::size_t i = 0; i < n; ++i) {
        require(v[i] < n, ErrorKind::InvariantViolation, "view_of index out of range at row " + std::to_string(i));
        require(v[i] != i, ErrorKind::InvariantViolation, "row " + std::to_string(i) + " is paired with itself");
        require(v[v[i]] == i, ErrorKind::InvariantViolation,
                "view_of is not an involution at row " + std::to_string(i));
      }
    }
  }

  friend bool operator==(const FeatureSet&, const FeatureSet&) = default;
};

enum class FileFormat { Binary, Csv };

namespace detail {

inline constexpr char kFeatureMagic[4] = {'M', 'S', 'C', 'F'};
inline constexpr std::uint32_t kFeatureVersion = 1;

template <typename T>
void put_le(std::string& out, T value) {
  using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
  auto bits = std::bit_cast<U>(value);
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    out.push_back(static_cast<char>(bits & 0xFF));
    bits >>= 8;
  }
}

/// Little-endian cursor over a byte buffer; reports the byte offset on underrun.
class ByteReader {
 public:
  explicit ByteReader(const std::string& buf) : buf_(buf) {}

  template <typename T>
  T get(const char* what) {
    using U = std::conditional_t<sizeof(T) == 1, std::uint8_t,
                                 std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>>;
    require(pos_ + sizeof(U) <= buf_.size(), ErrorKind::ParseError,
            std::string("truncated file reading ") + what + " at byte " + std::to_string(pos_));
    U bits = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i)
      bits |= static_cast<U>(static_cast<std::uint8_t>(buf_[pos_ + i])) << (8 * i);
    pos_ += sizeof(U);
    return std::bit_cast<T>(bits);
  }

  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return buf_.size() - pos_; }

 private:
  const std::string& buf_;
  std::size_t pos_ = 0;
};

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::IoError, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), ErrorKind::IoError, "cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  out.flush();
  require(static_cast<bool>(out), ErrorKind::IoError, "write failed for " + path.string());
}

inline FeatureSet parse_binary(const std::string& buf) {
  require(!buf.empty(), ErrorKind::ParseError, "empty file at byte 0");
  require(buf.size() >= 4 && std::memcmp(buf.data(), kFeatureMagic, 4) == 0, ErrorKind::ParseError,
          "bad magic at byte 0 (expected MSCF)");
  ByteReader r(buf);
  r.get<std::uint32_t>("magic");
  const auto version = r.get<std::uint32_t>("version");
  require(version == kFeatureVersion, ErrorKind::ParseError,
          "unsupported version " + std::to_string(version) + " at byte 4");
  FeatureSet fs;
  fs.n = r.get<std::uint64_t>("N");
  fs.d = r.get<std::uint64_t>("d");
  const auto flags = r.get<std::uint32_t>("flags");
  require((flags & ~0x3u) == 0, ErrorKind::ParseError, "unknown flag bits at byte 24");
  // Guard the allocation against a corrupt header.
  require(fs.d != 0 && fs.n <= r.remaining() / 4 / fs.d, ErrorKind::ParseError,
          "header declares more data than the file holds (byte " + std::to_string(r.pos()) + ")");
  fs.values.resize(fs.n * fs.d);
  for (auto& v : fs.values) v = r.get<float>("feature values");
  if (flags & 0x1u) {
    std::vector<Label> labels(fs.n);
    for (auto& l : labels) {
      const std::size_t at = r.pos();
      const auto b = r.get<std::uint8_t>("labels");
      require(b <= 1, ErrorKind::ParseError, "label byte " + std::to_string(b) + " at byte " + std::to_string(at));
      l = static_cast<Label>(b);
    }
    fs.labels = std::move(labels);
  }
  if (flags & 0x2u) {
    std::vector<std::uint64_t> views(fs.n);
    for (auto& v : views) v = r.get<std::uint64_t>("view indices");
    fs.view_of = std::move(views);
  }
  require(r.remaining() == 0, ErrorKind::ParseError, "trailing bytes after byte " + std::to_string(r.pos()));
  return fs;
}

inline std::string encode_binary(const FeatureSet& fs) {
  std::string out(kFeatureMagic, 4);
  put_le(out, kFeatureVersion);
  put_le(out, static_cast<std::uint64_t>(fs.n));
  put_le(out, static_cast<std::uint64_t>(fs.d));
  put_le(out, static_cast<std::uint32_t>((fs.labels ? 0x1u : 0u) | (fs.view_of ? 0x2u : 0u)));
  for (float v : fs.values) put_le(out, v);
  if (fs.labels)
    for (Label l : *fs.labels) out.push_back(static_cast<char>(l));
  if (fs.view_of)
    for (auto v : *fs.view_of) put_le(out, v);
  return out;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

inline std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

inline FeatureSet parse_csv(const std::string& buf) {
  std::istringstream in(buf);
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    if (!trim(line).empty()) {
      header = split_csv_line(line);
      break;
    }
  }
  require(!header.empty(), ErrorKind::ParseError, "missing header line (line " + std::to_string(line_no) + ")");
  const bool has_label = trim(header.back()) == "label";
  const std::size_t d = header.size() - (has_label ? 1 : 0);

  FeatureSet fs;
  fs.d = d;
  std::vector<Label> labels;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto cells = split_csv_line(line);
    require(cells.size() == header.size(), ErrorKind::ParseError,
            "line " + std::to_string(line_no) + " has " + std::to_string(cells.size()) + " columns, expected " +
                std::to_string(header.size()));
    for (std::size_t j = 0; j < d; ++j) {
      const std::string cell = trim(cells[j]);
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(cell, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      require(used == cell.size() && used > 0, ErrorKind::ParseError,
              "line " + std::to_string(line_no) + " column " + std::to_string(j + 1) + ": not a number");
      fs.values.push_back(static_cast<float>(v));
    }
    if (has_label) {
      const std::string cell = trim(cells.back());
      if (cell == "0" || cell == "normal")
        labels.push_back(Label::Normal);
      else if (cell == "1" || cell == "anomalous")
        labels.push_back(Label::Anomalous);
      else
        fail(ErrorKind::ParseError, "line " + std::to_string(line_no) + ": bad label '" + cell + "'");
    }
    ++fs.n;
  }
  require(fs.n > 0, ErrorKind::ParseError, "no data rows after header (line " + std::to_string(line_no) + ")");
  if (has_label) fs.labels = std::move(labels);
  return fs;
}

inline std::string encode_csv(const FeatureSet& fs) {
  std::ostringstream out;
  out << std::setprecision(17);
  for (std::size_t j = 0; j < fs.d; ++j) out << (j ? "," : "") << 'f' << j;
  if (fs.labels) out << ",label";
  out << '\n';
  for (std::size_t i = 0; i < fs.n; ++i) {
    for (std::size_t j = 0; j < fs.d; ++j) out << (j ? "," : "") << static_cast<double>(fs.values[i * fs.d + j]);
    if (fs.labels) out << ',' << static_cast<int>((*fs.labels)[i]);
    out << '\n';
  }
  return out.str();
}

}  // namespace detail

inline FeatureSet load_feature_set(const std::filesystem::path& path, FileFormat format) {
  const std::string buf = detail::read_file(path);
  FeatureSet fs = format == FileFormat::Binary ? detail::parse_binary(buf) : detail::parse_csv(buf);
  fs.validate();
  return fs;
}

/// CSV drops view_of; binary preserves everything bit-exactly.
inline void save_feature_set(const FeatureSet& fs, const std::filesystem::path& path, FileFormat format) {
  fs.validate();
  detail::write_file(path, format == FileFormat::Binary ? detail::encode_binary(fs) : detail::encode_csv(fs));
}

inline FileFormat format_for_path(const std::filesystem::path& path) {
  return path.extension() == ".csv" ? FileFormat::Csv : FileFormat::Binary;
}

// ---------------------------------------------------------------------------
// Two-view batches

enum class AugmentationMode { PairedViews, GaussianJitter };

struct AugmentationPolicy {
  AugmentationMode mode = AugmentationMode::GaussianJitter;
  /// Per-coordinate noise std; scaled by the mean raw feature norm when
  /// relative_to_mean_norm is set.
  double sigma = 0.01;
  bool relative_to_mean_norm = true;
  std::uint64_t seed = 0;
};

/// 2B rows; rows i and i + B are two views of the same source sample.
struct Batch {
  Matrix rows;
  std::vector<std::size_t> source_ids;

  std::size_t pairs() const noexcept { return rows.rows() / 2; }
};

inline double mean_row_norm(const FeatureSet& fs) {
  detail::CompensatedSum s;
  for (std::size_t i = 0; i < fs.n; ++i) {
    double sq = 0.0;
    for (float v : fs.row(i)) sq += static_cast<double>(v) * v;
    s.add(std::sqrt(sq));
  }
  return s.value() / static_cast<double>(fs.n);
}

/// One epoch of batches over a seeded permutation of the source samples.
/// A trailing batch that consumes fewer than two feature rows is dropped
/// (a lone jittered row; a stored view pair always consumes two).
inline std::vector<Batch> make_batches(const FeatureSet& fs, const AugmentationPolicy& policy,
                                       std::size_t batch_size, std::uint64_t seed) {
  require(batch_size >= 1, ErrorKind::InvalidArgument, "batch size must be >= 1");
  require(fs.all_normal(), ErrorKind::InvariantViolation, "training split contains anomalous rows");
  require(std::isfinite(policy.sigma) && policy.sigma >= 0.0, ErrorKind::InvalidArgument,
          "jitter sigma must be finite and >= 0");

  // Sources: rows (jitter) or the lower index of each stored pair (paired views).
  std::vector<std::size_t> sources;
  if (policy.mode == AugmentationMode::PairedViews) {
    require(fs.view_of.has_value(), ErrorKind::PolicyMismatch, "paired_views requires view_of in the feature set");
    for (std::size_t i = 0; i < fs.n; ++i)
      if (i < (*fs.view_of)[i]) sources.push_back(i);
  } else {
    sources.resize(fs.n);
    std::iota(sources.begin(), sources.end(), std::size_t{0});
  }

  Rng perm_rng(seed);
  perm_rng.shuffle(std::span(sources));
  Rng noise_rng(derive_seed(policy.seed, seed));
  const double noise_std =
      policy.mode == AugmentationMode::GaussianJitter
          ? policy.sigma * (policy.relative_to_mean_norm ? mean_row_norm(fs) : 1.0)
          : 0.0;

  std::vector<Batch> batches;
  for (std::size_t start = 0; start < sources.size(); start += batch_size) {
    const std::size_t b = std::min(batch_size, sources.size() - start);
    const std::size_t consumed = policy.mode == AugmentationMode::PairedViews ? 2 * b : b;
    if (consumed < 2) break;
    Batch batch{Matrix(2 * b, fs.d), std::vector<std::size_t>(2 * b)};
    for (std::size_t i = 0; i < b; ++i) {
      const std::size_t src = sources[start + i];
      const std::size_t second = policy.mode == AugmentationMode::PairedViews ? (*fs.view_of)[src] : src;
      batch.source_ids[i] = src;
      batch.source_ids[i + b] = second;
      auto first_row = batch.rows.row(i);
      auto second_row = batch.rows.row(i + b);
      const auto x1 = fs.row(src);
      const auto x2 = fs.row(second);
      for (std::size_t j = 0; j < fs.d; ++j) {
        first_row[j] = x1[j];
        second_row[j] = x2[j];
      }
      if (noise_std > 0.0) {
        for (auto& v : first_row) v += noise_std * noise_rng.normal();
        for (auto& v : second_row) v += noise_std * noise_rng.normal();
      }
    }
    batches.push_back(std::move(batch));
  }
  return batches;
}

}  // namespace msc
