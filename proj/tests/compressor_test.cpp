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

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "cutemaxvar/compressor.hpp"
#include "cutemaxvar/message.hpp"
#include "oracles.hpp"

namespace cmv {
namespace {

const std::filesystem::path kGolden = CMV_GOLDEN_DIR;

CounterRng stream(std::uint64_t round, std::uint64_t channel = 0) {
  return CounterRng(7, Domain::Quantizer, round, channel);
}

TEST(QuantizerConfig, BitsToLevels) {
  EXPECT_EQ(QuantizerConfig::from_bits(2).S, 1U);
  EXPECT_EQ(QuantizerConfig::from_bits(3).S, 3U);
  EXPECT_EQ(QuantizerConfig::from_bits(4).S, 7U);
  EXPECT_EQ(QuantizerConfig::from_bits(5).S, 15U);
  EXPECT_EQ(QuantizerConfig::from_bits(16).S, 32767U);
  for (unsigned q = 2; q <= 16; ++q) EXPECT_EQ(QuantizerConfig::from_bits(q).bits_per_entry(), q);
  EXPECT_EQ((QuantizerConfig{5, QuantMode::Unscaled, 0}.bits_per_entry()), 4U);  // 1 + ceil(log2 6)
  EXPECT_THROW(QuantizerConfig::from_bits(1), Error);
}

TEST(Quantize, ZeroBlock) {
  const auto cfg = QuantizerConfig::from_bits(3);
  const auto b = quantize(DenseMat::Zero(4, 3), cfg, stream(0));
  EXPECT_EQ(b.max_abs, 0.0);
  EXPECT_EQ(decode(b, cfg), DenseMat::Zero(4, 3));
  for (auto c : b.codes) EXPECT_EQ(c, 0);
}

TEST(Quantize, EndpointsExact) {
  DenseMat d(1, 2);
  d << 1.0, -1.0;
  for (unsigned q = 2; q <= 8; ++q) {
    const auto cfg = QuantizerConfig::from_bits(q);
    for (std::uint64_t r = 0; r < 20; ++r) EXPECT_EQ(decode(quantize(d, cfg, stream(r)), cfg), d);
  }
}

TEST(Quantize, HalfwayEntryIsFairCoin) {
  DenseMat d(1, 2);
  d << 0.5, -1.0;
  const auto cfg = QuantizerConfig::from_bits(2);  // S = 1
  const int draws = 100000;
  double sum = 0.0;
  for (int t = 0; t < draws; ++t) {
    const double v = decode(quantize(d, cfg, stream(static_cast<std::uint64_t>(t))), cfg)(0, 0);
    ASSERT_TRUE(v == 0.0 || v == 1.0);
    sum += v;
  }
  const double mean = sum / draws;
  EXPECT_NEAR(mean, 0.5, 4.0 * 0.5 / std::sqrt(static_cast<double>(draws)));
}

TEST(Quantize, GoldenBitstream) {
  DenseMat d(2, 2);
  d << 3, -2, 1, 0;
  const auto cfg = QuantizerConfig::from_bits(3);
  // Every entry sits on a level boundary, so the codes do not depend on the stream.
  const auto b = quantize(d, cfg, stream(123));
  const auto golden = bytes::read_file(kGolden / "quant_q3_2x2.bin");
  EXPECT_EQ(encode_block(b), golden);
  EXPECT_EQ(b.payload_bits(), 4U * 3U + 192U);
  EXPECT_EQ(decode(decode_block(golden, cfg), cfg), d);
}

TEST(Quantize, IdentityGoldenAndExact) {
  DenseMat d(1, 2);
  d << 0.5, -0.25;
  const auto cfg = QuantizerConfig::identity();
  const auto b = quantize(d, cfg, stream(0));
  EXPECT_EQ(encode_block(b), bytes::read_file(kGolden / "identity_1x2.bin"));
  EXPECT_EQ(b.payload_bits(), 64U * 2U + 128U);
  const DenseMat g = oracle::gaussian_dense(13, 4, 5);
  EXPECT_EQ(decode(quantize(g, cfg, stream(1)), cfg), g);
  EXPECT_EQ(quantize(g, cfg, stream(1)).payload_bits(), 64U * 52U + 128U);
}

TEST(Quantize, MessageGoldenFile) {
  DenseMat d(2, 2);
  d << 3, -2, 1, 0;
  const auto cfg = QuantizerConfig::from_bits(3);
  RoundMessage m;
  m.round = 3;
  m.node = 1;
  m.payload = quantize(d, cfg, stream(3, 1));
  const auto golden = bytes::read_file(kGolden / "uplink_r3_n1_q3.bin");
  EXPECT_EQ(encode_message(m), golden);
  const RoundMessage back = decode_message(golden, cfg);
  EXPECT_EQ(back.round, 3U);
  EXPECT_EQ(back.node, 1U);
  EXPECT_EQ(back.direction, Direction::Uplink);
  EXPECT_FALSE(back.replace);
  EXPECT_EQ(back.payload, m.payload);
}

TEST(Quantize, RoundTripRandomBlocks) {
  for (std::uint64_t t = 0; t < 1000; ++t) {
    const auto cfg = QuantizerConfig::from_bits(2 + static_cast<unsigned>(t % 7),
                                                t % 2 ? QuantMode::Scaled : QuantMode::Unscaled, t);
    const DenseMat d = oracle::gaussian_dense(1 + t % 9, 1 + t % 4, t + 1);
    const auto b = quantize(d, cfg, stream(t));
    const auto wire = encode_block(b);
    EXPECT_EQ(wire.size() * 8, b.payload_bits() + (8 - b.payload_bits() % 8) % 8);
    const auto back = decode_block(wire, cfg);
    ASSERT_EQ(back, b);
    EXPECT_EQ(decode(back, cfg), decode(b, cfg));
  }
}

TEST(Quantize, DeterministicForSameStream) {
  const DenseMat d = oracle::gaussian_dense(20, 5, 6);
  const auto cfg = QuantizerConfig::from_bits(3);
  EXPECT_EQ(encode_block(quantize(d, cfg, stream(4, 2))), encode_block(quantize(d, cfg, stream(4, 2))));
  EXPECT_NE(encode_block(quantize(d, cfg, stream(4, 2))), encode_block(quantize(d, cfg, stream(4, 3))));
}

TEST(Quantize, PayloadBitsMatchWireArithmetic) {
  for (unsigned q = 2; q <= 16; ++q) {
    for (Eigen::Index rows : {1, 3, 17}) {
      for (Eigen::Index cols : {1, 2, 5}) {
        const auto cfg = QuantizerConfig::from_bits(q);
        const auto b = quantize(oracle::gaussian_dense(static_cast<std::size_t>(rows), static_cast<std::size_t>(cols), q), cfg, stream(q));
        const std::uint64_t n = static_cast<std::uint64_t>(rows * cols);
        EXPECT_EQ(b.payload_bits(), n * q + 192);
        EXPECT_EQ(encode_block(b).size(), 24 + (n * q + 7) / 8);
      }
    }
  }
}

TEST(Quantize, RejectsNonFinite) {
  DenseMat d = DenseMat::Ones(2, 2);
  d(0, 1) = INFINITY;
  try {
    quantize(d, QuantizerConfig::from_bits(3), stream(0));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InvalidInput);
  }
}

TEST(Decode, ScaledModeHandValue) {
  DenseMat d(1, 2);
  d << 1, -1;
  const QuantizerConfig cfg{1, QuantMode::Scaled, 0};
  const DenseMat out = decode(quantize(d, cfg, stream(0)), cfg);
  // u = 1 + (2 / 4) * (1 / 2) = 1.25
  EXPECT_NEAR(out(0, 0), 0.8, 1e-15);
  EXPECT_NEAR(out(0, 1), -0.8, 1e-15);
}

TEST(Decode, CorruptLevelIsDecodeError) {
  const QuantizerConfig cfg{5, QuantMode::Unscaled, 0};  // 3 level bits; codes 6, 7 invalid
  DenseMat d(1, 1);
  d << 1.0;
  auto wire = encode_block(quantize(d, cfg, stream(0)));
  wire.back() = 0x70;  // sign 0, level 7
  try {
    decode_block(wire, cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::DecodeError);
  }
  auto shortw = wire;
  shortw.pop_back();
  EXPECT_THROW(decode_block(shortw, cfg), Error);
}

TEST(Compressor, UnbiasedEntrywise) {
  DenseMat d(2, 2);
  d << 0.3, -0.71, 1.0, 0.05;
  const auto cfg = QuantizerConfig::from_bits(3);
  const int draws = 100000;
  DenseMat sum = DenseMat::Zero(2, 2), sq = DenseMat::Zero(2, 2);
  for (int t = 0; t < draws; ++t) {
    const DenseMat v = decode(quantize(d, cfg, stream(static_cast<std::uint64_t>(t))), cfg);
    sum += v;
    sq += v.cwiseProduct(v);
  }
  for (Eigen::Index i = 0; i < 4; ++i) {
    const double mean = sum.data()[i] / draws;
    const double var = sq.data()[i] / draws - mean * mean;
    const double se = std::sqrt(std::max(var, 1e-30) / draws);
    EXPECT_LE(std::abs(mean - d.data()[i]), 4.0 * se + 1e-15);
  }
}

TEST(Compressor, VarianceBoundPerSample) {
  const auto cfg = QuantizerConfig::from_bits(3);
  for (std::uint64_t s = 0; s < 50; ++s) {
    const DenseMat d = oracle::gaussian_dense(100, 5, 1000 + s);
    const int draws = 200;
    std::vector<double> err(draws);
    for (int t = 0; t < draws; ++t)
      err[static_cast<std::size_t>(t)] =
          (decode(quantize(d, cfg, stream(s * draws + static_cast<std::uint64_t>(t))), cfg) - d).squaredNorm();
    double mean = 0, var = 0;
    for (double e : err) mean += e;
    mean /= draws;
    for (double e : err) var += (e - mean) * (e - mean);
    var /= draws - 1;
    EXPECT_LE(mean, variance_bound(d, cfg.S) + 3.0 * std::sqrt(var / draws));
  }
}

TEST(EmpiricalDelta, IdentityIsZero) {
  EXPECT_EQ(empirical_delta(QuantizerConfig::identity(), 4, 4, 100, 1), 0.0);
}

TEST(EmpiricalDelta, FineQuantizationLimit) {
  const auto cfg = QuantizerConfig::from_bits(16);
  EXPECT_LT(empirical_delta(cfg, 10, 5, 100, 2, 4), 1e-6);
}

TEST(EmpiricalDelta, BoundedByWorstCaseRatio) {
  const auto cfg = QuantizerConfig::from_bits(3);
  // Oracle: (JK / 4 S^2) max ||D||_max^2 / ||D||_F^2 over the same samples.
  CounterRng gen(3, Domain::Test, 0, 0);
  double ratio = 0.0;
  for (int t = 0; t < 100; ++t) {
    DenseMat d(100, 5);
    for (Eigen::Index i = 0; i < d.size(); ++i) d.data()[i] = gen.next_normal();
    ratio = std::max(ratio, variance_bound(d, cfg.S) / d.squaredNorm());
  }
  const double est = empirical_delta(cfg, 100, 5, 100, 3, 16);
  EXPECT_LE(est, ratio);
  EXPECT_LT(est, 1.0);
}

}  // namespace
}  // namespace cmv
