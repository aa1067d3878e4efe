// Copyright 2026 The CuteMaxVar Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// =============================================================================

// Stochastic multi-level quantizer used on both links.
//
// Each entry x of a block D is mapped to max|D| * sgn(x) * h/S where h is
// either floor(|x|/max|D| * S) or one level above, picked at random so that
// E[h/S] = |x|/max|D|. Scaled mode additionally divides the decoded block by
//   u = 1 + (J K / 4 S^2) * max|D~|^2 / ||D~||_F^2,
// computed from the decoded block D~ itself so both link endpoints agree on
// u without transmitting it.
//
// Wire layout (little-endian):
//   quantized: u64 rows | u64 cols | f64 max_abs | packed entries, row-major,
//              each one sign bit then (q-1) level bits, MSB-first, last byte
//              zero padded
//   identity:  u64 rows | u64 cols | rows*cols f64

#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cutemaxvar/error.hpp"
#include "cutemaxvar/matcore.hpp"
#include "cutemaxvar/matrix_io.hpp"
#include "cutemaxvar/rng.hpp"

namespace cmv {

enum class QuantMode : std::uint8_t { Unscaled, Scaled, Identity };

inline const char* to_string(QuantMode m) {
  switch (m) {
    case QuantMode::Unscaled: return "unscaled";
    case QuantMode::Scaled: return "scaled";
    case QuantMode::Identity: return "identity";
  }
  return "?";
}

struct QuantizerConfig {
  std::uint32_t S = 3;
  QuantMode mode = QuantMode::Unscaled;
  std::uint64_t seed = 0;

  // q bits per entry: one sign bit plus (q-1) level bits, S = 2^(q-1) - 1.
  static QuantizerConfig from_bits(unsigned q, QuantMode mode = QuantMode::Unscaled,
                                   std::uint64_t seed = 0) {
    require(q >= 2 && q <= 32, ErrorKind::InvalidConfig,
            "bits per entry must lie in [2, 32]");
    return {static_cast<std::uint32_t>((1ULL << (q - 1)) - 1), mode, seed};
  }

  static QuantizerConfig identity(std::uint64_t seed = 0) {
    return {1, QuantMode::Identity, seed};
  }

  unsigned level_bits() const {
    unsigned b = 0;
    while ((1ULL << b) < static_cast<std::uint64_t>(S) + 1) ++b;
    return b;
  }

  unsigned bits_per_entry() const {
    return mode == QuantMode::Identity ? 64U : 1U + level_bits();
  }

  void validate() const {
    require(S >= 1, ErrorKind::InvalidConfig, "quantizer needs S >= 1");
  }
};

struct QuantizedBlock {
  std::uint64_t rows = 0;
  std::uint64_t cols = 0;
  QuantMode mode = QuantMode::Unscaled;
  std::uint32_t S = 1;
  double max_abs = 0.0;
  std::vector<std::uint8_t> codes;  // packed entry body exactly as on the wire

  unsigned bits_per_entry() const {
    return QuantizerConfig{S, mode, 0}.bits_per_entry();
  }

  // Exact number of information bits in the message (padding excluded).
  std::uint64_t payload_bits() const {
    const std::uint64_t entries = rows * cols;
    if (mode == QuantMode::Identity) return 64 * entries + 128;
    return entries * bits_per_entry() + 192;
  }

  bool operator==(const QuantizedBlock&) const = default;
};

namespace detail {

class BitWriter {
 public:
  explicit BitWriter(std::size_t total_bits) : buf_((total_bits + 7) / 8, 0) {}

  void put(std::uint64_t value, unsigned width) {
    for (unsigned i = width; i-- > 0;) {
      if ((value >> i) & 1ULL) buf_[pos_ >> 3] |= static_cast<std::uint8_t>(0x80U >> (pos_ & 7));
      ++pos_;
    }
  }

  std::vector<std::uint8_t> take() { return std::move(buf_); }

 private:
  std::vector<std::uint8_t> buf_;
  std::size_t pos_ = 0;
};

class BitReader {
 public:
  explicit BitReader(std::span<const std::uint8_t> buf) : buf_(buf) {}

  std::uint64_t get(unsigned width) {
    std::uint64_t v = 0;
    for (unsigned i = 0; i < width; ++i) {
      v = (v << 1) | ((buf_[pos_ >> 3] >> (7 - (pos_ & 7))) & 1U);
      ++pos_;
    }
    return v;
  }

 private:
  std::span<const std::uint8_t> buf_;
  std::size_t pos_ = 0;
};

inline std::size_t packed_bytes(std::uint64_t entries, unsigned bits) {
  return static_cast<std::size_t>((entries * bits + 7) / 8);
}

}  // namespace detail

// Compresses `delta`; the i-th entry (row-major) consumes rng.uniform(i).
inline QuantizedBlock quantize(const DenseMat& delta, const QuantizerConfig& cfg,
                               const CounterRng& rng) {
  cfg.validate();
  require_finite(delta, "quantizer input");
  QuantizedBlock b;
  b.rows = static_cast<std::uint64_t>(delta.rows());
  b.cols = static_cast<std::uint64_t>(delta.cols());
  b.mode = cfg.mode;
  b.S = cfg.S;
  const std::uint64_t n = b.rows * b.cols;

  if (cfg.mode == QuantMode::Identity) {
    b.codes.reserve(n * 8);
    for (Eigen::Index r = 0; r < delta.rows(); ++r)
      for (Eigen::Index c = 0; c < delta.cols(); ++c) bytes::put_f64(b.codes, delta(r, c));
    return b;
  }

  const unsigned lbits = cfg.level_bits();
  detail::BitWriter w(n * (1 + lbits));
  b.max_abs = n > 0 ? delta.cwiseAbs().maxCoeff() : 0.0;
  if (b.max_abs == 0.0) {
    b.codes = w.take();  // all-zero block
    return b;
  }
  const double S = static_cast<double>(cfg.S);
  std::uint64_t i = 0;
  for (Eigen::Index r = 0; r < delta.rows(); ++r) {
    for (Eigen::Index c = 0; c < delta.cols(); ++c, ++i) {
      const double x = delta(r, c);
      const double scaled = std::abs(x) / b.max_abs * S;
      double p = std::floor(scaled);
      if (p > S - 1) p = S - 1;
      const double frac = scaled - p;
      std::uint64_t level = static_cast<std::uint64_t>(p);
      if (rng.uniform(i) < frac) ++level;
      const std::uint64_t sign = x < 0 ? 1 : 0;
      w.put(sign, 1);
      w.put(level, lbits);
    }
  }
  b.codes = w.take();
  return b;
}

// Decoded entries before any Scaled-mode division.
inline DenseMat decode_unscaled(const QuantizedBlock& b) {
  DenseMat out(static_cast<Eigen::Index>(b.rows), static_cast<Eigen::Index>(b.cols));
  const std::uint64_t n = b.rows * b.cols;
  if (b.mode == QuantMode::Identity) {
    require(b.codes.size() == n * 8, ErrorKind::DecodeError,
            "identity payload length mismatch");
    bytes::Reader rd(b.codes, ErrorKind::DecodeError);
    for (Eigen::Index r = 0; r < out.rows(); ++r)
      for (Eigen::Index c = 0; c < out.cols(); ++c) out(r, c) = rd.f64();
    return out;
  }
  const unsigned lbits = QuantizerConfig{b.S, b.mode, 0}.level_bits();
  require(b.codes.size() == detail::packed_bytes(n, 1 + lbits), ErrorKind::DecodeError,
          "quantized payload length mismatch");
  require(std::isfinite(b.max_abs) && b.max_abs >= 0.0, ErrorKind::DecodeError,
          "invalid max_abs");
  detail::BitReader rd(b.codes);
  const double S = static_cast<double>(b.S);
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    for (Eigen::Index c = 0; c < out.cols(); ++c) {
      const bool negative = rd.get(1) != 0;
      const std::uint64_t level = rd.get(lbits);
      if (level > b.S) {
        fail(ErrorKind::DecodeError, "level " + std::to_string(level) +
                                         " exceeds S=" + std::to_string(b.S));
      }
      const double mag = b.max_abs * (static_cast<double>(level) / S);
      out(r, c) = negative ? -mag : mag;
    }
  }
  return out;
}

inline DenseMat decode(const QuantizedBlock& b, const QuantizerConfig& cfg) {
  require(b.mode == cfg.mode && (b.mode == QuantMode::Identity || b.S == cfg.S),
          ErrorKind::DecodeError, "block does not match quantizer config");
  DenseMat out = decode_unscaled(b);
  if (b.mode != QuantMode::Scaled) return out;
  const double energy = out.squaredNorm();
  if (energy == 0.0) return out;
  const double S = static_cast<double>(b.S);
  const double jk = static_cast<double>(b.rows * b.cols);
  const double u = 1.0 + jk / (4.0 * S * S) * (b.max_abs * b.max_abs / energy);
  return out / u;
}

inline std::vector<std::uint8_t> encode_block(const QuantizedBlock& b) {
  std::vector<std::uint8_t> out;
  out.reserve(24 + b.codes.size());
  bytes::put_u64(out, b.rows);
  bytes::put_u64(out, b.cols);
  if (b.mode != QuantMode::Identity) bytes::put_f64(out, b.max_abs);
  out.insert(out.end(), b.codes.begin(), b.codes.end());
  return out;
}

// Parses a wire message; the mode and S come from the receiver's config.
inline QuantizedBlock decode_block(std::span<const std::uint8_t> wire,
                                   const QuantizerConfig& cfg) {
  bytes::Reader rd(wire, ErrorKind::DecodeError);
  QuantizedBlock b;
  b.mode = cfg.mode;
  b.S = cfg.S;
  b.rows = rd.u64();
  b.cols = rd.u64();
  require(b.cols == 0 || b.rows <= (std::uint64_t{1} << 48) / b.cols, ErrorKind::DecodeError,
          "block dimensions too large");
  const std::uint64_t n = b.rows * b.cols;
  std::size_t body = 0;
  if (cfg.mode == QuantMode::Identity) {
    body = static_cast<std::size_t>(n * 8);
  } else {
    b.max_abs = rd.f64();
    body = detail::packed_bytes(n, cfg.bits_per_entry());
  }
  require(rd.remaining() == body, ErrorKind::DecodeError, "payload length mismatch");
  auto s = rd.take(body);
  b.codes.assign(s.begin(), s.end());
  decode_unscaled(b);  // validates levels
  return b;
}

// (J K / 4 S^2) ||D||_max^2: the per-sample bound on E||C~(D) - D||_F^2.
inline double variance_bound(const DenseMat& delta, std::uint32_t S) {
  const double m = delta.size() > 0 ? delta.cwiseAbs().maxCoeff() : 0.0;
  const double s = static_cast<double>(S);
  return static_cast<double>(delta.size()) / (4.0 * s * s) * m * m;
}

// Empirical 1 - delta: the largest, over `trials` Gaussian blocks of the given
// shape, Monte-Carlo estimate of E||C(D) - D||_F^2 / ||D||_F^2.
inline double empirical_delta(const QuantizerConfig& cfg, Eigen::Index rows,
                              Eigen::Index cols, std::size_t trials,
                              std::uint64_t seed, std::size_t inner_draws = 64) {
  require(trials >= 100, ErrorKind::InvalidInput, "empirical_delta needs >= 100 trials");
  if (cfg.mode == QuantMode::Identity) return 0.0;
  CounterRng gen(seed, Domain::Test, 0, 0);
  double worst = 0.0;
  for (std::size_t t = 0; t < trials; ++t) {
    DenseMat d(rows, cols);
    for (Eigen::Index i = 0; i < d.size(); ++i) d.data()[i] = gen.next_normal();
    const double energy = d.squaredNorm();
    double acc = 0.0;
    for (std::size_t m = 0; m < inner_draws; ++m) {
      const CounterRng rng(cfg.seed, Domain::Quantizer, t * inner_draws + m, 0);
      acc += (decode(quantize(d, cfg, rng), cfg) - d).squaredNorm();
    }
    worst = std::max(worst, acc / static_cast<double>(inner_draws) / energy);
  }
  return worst;
}

}  // namespace cmv
