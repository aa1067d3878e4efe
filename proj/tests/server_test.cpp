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

#include "cutemaxvar/server.hpp"
#include "oracles.hpp"

namespace cmv {
namespace {

DenseMat orthonormal(std::size_t j, std::size_t k, std::uint64_t seed) {
  return oracle::to(oracle::orthonormalize(oracle::gaussian(j, k, seed)));
}

double orthogonality_error(const DenseMat& g) {
  return (g.transpose() * g - DenseMat::Identity(g.cols(), g.cols())).cwiseAbs().maxCoeff();
}

// (1/2) sum_i ||C(M_i) - G||^2 + (1/(2 alpha)) ||G - G_prev||^2
double prox_objective(const std::vector<DenseMat>& m, const DenseMat& g, const DenseMat& g_prev,
                      double alpha, bool zero_mean) {
  double f = 0.0;
  for (const auto& mi : m) f += 0.5 * ((zero_mean ? center_rows(mi) : mi) - g).squaredNorm();
  return f + 0.5 / alpha * (g - g_prev).squaredNorm();
}

TEST(ServerUplink, UnknownNodeIsProtocolError) {
  ServerState s = make_server(2, 4, 1, false);
  RoundMessage m;
  m.node = 2;
  m.payload = quantize(DenseMat::Zero(4, 1), QuantizerConfig::from_bits(3), CounterRng{});
  try {
    apply_uplink(s, m, QuantizerConfig::from_bits(3));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ProtocolError);
  }
  m.node = 1;
  m.direction = Direction::Downlink;
  EXPECT_THROW(apply_uplink(s, m, QuantizerConfig::from_bits(3)), Error);
}

TEST(ServerUplink, ZeroBlockAndIdentity) {
  ServerState s = make_server(1, 5, 2, false);
  s.m_hat[0] = oracle::gaussian_dense(5, 2, 1);
  const DenseMat before = s.m_hat[0];
  RoundMessage m;
  const auto cfg = QuantizerConfig::from_bits(4);
  m.payload = quantize(DenseMat::Zero(5, 2), cfg, CounterRng{});
  apply_uplink(s, m, cfg);
  EXPECT_EQ(s.m_hat[0], before);
  const DenseMat target = oracle::gaussian_dense(5, 2, 2);
  m.payload = quantize(target - s.m_hat[0], QuantizerConfig::identity(), CounterRng{});
  apply_uplink(s, m, QuantizerConfig::identity());
  EXPECT_LT((s.m_hat[0] - target).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(UpdateG, CenteredFixedPoint) {
  DenseMat g = orthonormal(12, 3, 3);
  g = center_rows(g);
  g = oracle::to(oracle::orthonormalize(oracle::from(g)));
  for (double alpha : {0.1, 1.0, 10.0}) {
    ServerState s = make_server(1, 12, 3, true);
    s.g = g;
    s.m_hat[0] = g;
    update_g(s, alpha, true);
    EXPECT_LT((s.g - g).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(UpdateG, HandBuiltPolarFactor) {
  // Y = [[2, 1], [1, 2], [0, 0], [0, 0]]; the top block is positive definite so U V^T = [I; 0].
  DenseMat y = DenseMat::Zero(4, 2);
  y << 2, 1, 1, 2, 0, 0, 0, 0;
  const auto up = solve_g({y}, nullptr, 0.0, false);
  DenseMat expect = DenseMat::Zero(4, 2);
  expect(0, 0) = expect(1, 1) = 1.0;
  EXPECT_LT((up.g - expect).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_FALSE(up.degenerate);
}

TEST(UpdateG, MatchesJacobiSvdOracle) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const DenseMat y = oracle::gaussian_dense(4, 2, seed);
    const auto svd = oracle::jacobi_svd(oracle::from(y));
    const DenseMat expect = oracle::to(oracle::mul(svd.u, oracle::transpose(svd.v)));
    EXPECT_LT((solve_g({y}, nullptr, 0.0, false).g - expect).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(UpdateG, SumsViewsAndProxTerm) {
  const DenseMat a = oracle::gaussian_dense(9, 2, 4), b = oracle::gaussian_dense(9, 2, 5);
  const DenseMat prev = orthonormal(9, 2, 6);
  const double alpha = 0.5;
  const auto svd = oracle::jacobi_svd(oracle::from(DenseMat(a + b + prev / alpha)));
  const DenseMat expect = oracle::to(oracle::mul(svd.u, oracle::transpose(svd.v)));
  EXPECT_LT((solve_g({a, b}, &prev, alpha, false).g - expect).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(UpdateG, ConstraintsHoldEveryUpdate) {
  for (bool zero_mean : {false, true}) {
    ServerState s = make_server(3, 40, 4, zero_mean);
    s.g = orthonormal(40, 4, 7);
    for (std::uint64_t r = 1; r <= 20; ++r) {
      for (std::size_t i = 0; i < 3; ++i)
        s.m_hat[i] = oracle::gaussian_dense(40, 4, 100 * r + i) + DenseMat::Constant(40, 4, 2.0);
      update_g(s, 1.0, r % 2 == 0);
      EXPECT_LE(orthogonality_error(s.g), 1e-8);
      if (zero_mean) {
        EXPECT_LE(s.g.colwise().mean().cwiseAbs().maxCoeff(), 1e-8);
      }
    }
  }
}

TEST(UpdateG, RankDeficientIsCompletedAndFlagged) {
  DenseMat y = DenseMat::Zero(6, 3);
  y(0, 0) = 2.0;
  y(1, 1) = 1.0;
  for (bool zero_mean : {false, true}) {
    const auto up = solve_g({y}, nullptr, 0.0, zero_mean);
    EXPECT_TRUE(up.degenerate);
    EXPECT_LE(orthogonality_error(up.g), 1e-12);
    if (zero_mean) {
      EXPECT_LE(up.g.colwise().mean().cwiseAbs().maxCoeff(), 1e-12);
    }
  }
  const auto zero = solve_g({DenseMat::Zero(5, 2)}, nullptr, 0.0, false);
  EXPECT_TRUE(zero.degenerate);
  EXPECT_LE(orthogonality_error(zero.g), 1e-12);
}

TEST(UpdateG, ProxObjectiveNonIncreasing) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const std::vector<DenseMat> m{oracle::gaussian_dense(15, 3, seed), oracle::gaussian_dense(15, 3, seed + 50)};
    const DenseMat prev = orthonormal(15, 3, seed + 100);
    for (double alpha : {0.05, 1.0, 20.0}) {
      const DenseMat next = solve_g(m, &prev, alpha, seed % 2 == 0).g;
      EXPECT_LE(prox_objective(m, next, prev, alpha, seed % 2 == 0),
                prox_objective(m, prev, prev, alpha, seed % 2 == 0) + 1e-12);
    }
  }
}

TEST(Downlink, IdentityReplicaEqualsG) {
  ServerState s = make_server(2, 7, 2, false);
  s.g = orthonormal(7, 2, 8);
  const auto msg = make_downlink(s, QuantizerConfig::identity());
  EXPECT_EQ(s.g_hat, s.g);
  EXPECT_EQ(msg.direction, Direction::Downlink);
}

TEST(Downlink, ErrorFeedbackShrinksOnFixedTarget) {
  ServerState s = make_server(2, 10, 2, false);
  s.g = orthonormal(10, 2, 9);
  const auto cfg = QuantizerConfig::from_bits(3, QuantMode::Unscaled, 3);
  double first = 0.0, last = 0.0;
  for (std::uint64_t r = 1; r <= 60; ++r) {
    s.round = r;
    const DenseMat delta = s.g - s.g_hat;
    const DenseMat prev_hat = s.g_hat;
    const auto msg = make_downlink(s, cfg);
    const DenseMat error = decode(msg.payload, cfg) - delta;
    // The next delta is exactly the negated compression error.
    EXPECT_LT(((s.g - s.g_hat) + error).cwiseAbs().maxCoeff(), 1e-14);
    EXPECT_EQ(s.g_hat, prev_hat + decode(msg.payload, cfg));
    if (r == 1) first = delta.norm();
    last = (s.g - s.g_hat).norm();
  }
  EXPECT_LT(last, 1e-4 * first);
}

TEST(Downlink, InitIsFullPrecision) {
  ServerState s = make_server(2, 6, 2, false);
  s.g = orthonormal(6, 2, 10);
  const auto msg = make_init_downlink(s);
  EXPECT_TRUE(msg.replace);
  EXPECT_EQ(decode_unscaled(msg.payload), s.g);
  EXPECT_EQ(s.g_hat, s.g);
}

TEST(Server, InvalidShapes) {
  EXPECT_THROW(make_server(0, 5, 2, false), Error);
  EXPECT_THROW(make_server(2, 5, 6, false), Error);
  EXPECT_THROW(make_server(2, 5, 5, true), Error);
}

}  // namespace
}  // namespace cmv
