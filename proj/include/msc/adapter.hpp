#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "msc/data_io.hpp"
#include "msc/error.hpp"
#include "msc/matrix.hpp"
#include "msc/random.hpp"

namespace msc {

/// Residual head y = x + W2 relu(W1 x + b1) + b2, standing in for the
/// fine-tuned backbone blocks.
struct AdapterParams {
  std::size_t d = 0;
  std::size_t h = 0;
  Matrix w1;  // h x d
  Vector b1;  // h
  Matrix w2;  // d x h
  Vector b2;  // d

  static AdapterParams zeros(std::size_t d, std::size_t h) {
    return {d, h, Matrix(h, d), Vector(h, 0.0), Matrix(d, h), Vector(d, 0.0)};
  }

  /// W1 ~ N(0, 1/d), everything else zero: the initial map is the identity.
  static AdapterParams identity_init(std::size_t d, std::size_t h, std::uint64_t seed) {
    AdapterParams p = zeros(d, h);
    Rng rng(seed);
    const double std_dev = 1.0 / std::sqrt(static_cast<double>(d));
    for (double& w : p.w1.data()) w = std_dev * rng.normal();
    return p;
  }

  std::size_t size() const { return 2 * d * h + h + d; }

  /// Visits every scalar in checkpoint order: W1, b1, W2, b2.
  template <typename F>
  void for_each(F&& f) {
    for (double& v : w1.data()) f(v);
    for (double& v : b1) f(v);
    for (double& v : w2.data()) f(v);
    for (double& v : b2) f(v);
  }
  template <typename F>
  void for_each(F&& f) const {
    for (double v : w1.data()) f(v);
    for (double v : b1) f(v);
    for (double v : w2.data()) f(v);
    for (double v : b2) f(v);
  }

  Vector flatten() const {
    Vector out;
    out.reserve(size());
    for_each([&](double v) { out.push_back(v); });
    return out;
  }

  bool all_finite() const {
    bool ok = true;
    for_each([&](double v) { ok = ok && std::isfinite(v); });
    return ok;
  }

  friend bool operator==(const AdapterParams&, const AdapterParams&) = default;
};

/// Same shapes as the parameters they differentiate.
using AdapterGrads = AdapterParams;

inline Vector adapter_forward(std::span<const double> x, const AdapterParams& p) {
  require(x.size() == p.d, ErrorKind::DimensionMismatch,
          "adapter expects dimension " + std::to_string(p.d) + ", got " + std::to_string(x.size()));
  Vector hidden(p.h);
  for (std::size_t k = 0; k < p.h; ++k) {
    double a = p.b1[k];
    const auto wk = p.w1.row(k);
    for (std::size_t j = 0; j < p.d; ++j) a += wk[j] * x[j];
    hidden[k] = a > 0.0 ? a : 0.0;
  }
  Vector y(p.d);
  for (std::size_t i = 0; i < p.d; ++i) {
    double v = x[i] + p.b2[i];
    const auto wi = p.w2.row(i);
    for (std::size_t k = 0; k < p.h; ++k) v += wi[k] * hidden[k];
    y[i] = v;
  }
  return y;
}

inline Matrix adapter_forward(const Matrix& batch, const AdapterParams& p) {
  Matrix out(batch.rows(), batch.cols());
  for (std::size_t r = 0; r < batch.rows(); ++r) {
    const Vector y = adapter_forward(batch.row(r), p);
    std::copy(y.begin(), y.end(), out.row(r).begin());
  }
  return out;
}

/// Reverse-mode gradients of sum_r upstream_r . y_r w.r.t. every parameter.
/// relu'(0) is taken as 0.
inline AdapterGrads adapter_backward(const Matrix& batch, const AdapterParams& p, const Matrix& upstream) {
  require(batch.cols() == p.d && upstream.cols() == p.d && upstream.rows() == batch.rows(),
          ErrorKind::DimensionMismatch, "adapter_backward shape mismatch");
  AdapterGrads g = AdapterGrads::zeros(p.d, p.h);
  Vector pre(p.h);
  Vector dhidden(p.h);
  for (std::size_t r = 0; r < batch.rows(); ++r) {
    const auto x = batch.row(r);
    const auto gy = upstream.row(r);
    for (std::size_t k = 0; k < p.h; ++k) {
      double a = p.b1[k];
      const auto wk = p.w1.row(k);
      for (std::size_t j = 0; j < p.d; ++j) a += wk[j] * x[j];
      pre[k] = a;
    }
    for (std::size_t i = 0; i < p.d; ++i) {
      g.b2[i] += gy[i];
      auto gw2 = g.w2.row(i);
      for (std::size_t k = 0; k < p.h; ++k)
        if (pre[k] > 0.0) gw2[k] += gy[i] * pre[k];
    }
    for (std::size_t k = 0; k < p.h; ++k) {
      double s = 0.0;
      if (pre[k] > 0.0)
        for (std::size_t i = 0; i < p.d; ++i) s += p.w2(i, k) * gy[i];
      dhidden[k] = s;
    }
    for (std::size_t k = 0; k < p.h; ++k) {
      if (dhidden[k] == 0.0) continue;
      g.b1[k] += dhidden[k];
      auto gw1 = g.w1.row(k);
      for (std::size_t j = 0; j < p.d; ++j) gw1[j] += dhidden[k] * x[j];
    }
  }
  return g;
}

/// p <- p - lr * (grad + weight_decay * p), no momentum.
inline AdapterParams sgd_step(const AdapterParams& params, const AdapterGrads& grads, double lr, double weight_decay) {
  require(params.d == grads.d && params.h == grads.h, ErrorKind::DimensionMismatch, "sgd_step shape mismatch");
  AdapterParams next = params;
  const Vector g = grads.flatten();
  std::size_t idx = 0;
  next.for_each([&](double& v) {
    v -= lr * (g[idx++] + weight_decay * v);
    require(std::isfinite(v), ErrorKind::NonFiniteUpdate,
            "parameter " + std::to_string(idx - 1) + " became non-finite");
  });
  return next;
}

// ---------------------------------------------------------------------------
// Checkpoints: "MSCA", version u32, d u64, h u64, then W1 b1 W2 b2 as f64.

inline constexpr std::uint32_t kCheckpointVersion = 1;

inline void save_checkpoint(const AdapterParams& p, const std::filesystem::path& path) {
  std::string out = "MSCA";
  detail::put_le(out, kCheckpointVersion);
  detail::put_le(out, static_cast<std::uint64_t>(p.d));
  detail::put_le(out, static_cast<std::uint64_t>(p.h));
  p.for_each([&](double v) { detail::put_le(out, v); });
  detail::write_file(path, out);
}

inline AdapterParams load_checkpoint(const std::filesystem::path& path) {
  const std::string buf = detail::read_file(path);
  require(buf.size() >= 4 && std::memcmp(buf.data(), "MSCA", 4) == 0, ErrorKind::ParseError,
          "bad checkpoint magic at byte 0 (expected MSCA)");
  detail::ByteReader r(buf);
  r.get<std::uint32_t>("magic");
  const auto version = r.get<std::uint32_t>("version");
  require(version == kCheckpointVersion, ErrorKind::ParseError, "unsupported checkpoint version at byte 4");
  const auto d = r.get<std::uint64_t>("d");
  const auto h = r.get<std::uint64_t>("h");
  require(d >= 1 && h >= 1 && (2 * d * h + d + h) * 8 == r.remaining(), ErrorKind::ParseError,
          "checkpoint payload size does not match d, h (byte " + std::to_string(r.pos()) + ")");
  AdapterParams p = AdapterParams::zeros(d, h);
  p.for_each([&](double& v) { v = r.get<double>("parameters"); });
  require(p.all_finite(), ErrorKind::InvariantViolation, "checkpoint holds non-finite parameters");
  return p;
}

}  // namespace msc
