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

#include <sstream>

#include "cutemaxvar/datagen.hpp"
#include "cutemaxvar/protocol.hpp"
#include "oracles.hpp"

namespace cmv {
namespace {

std::vector<View> small_views(std::size_t J = 120, std::size_t D = 6, std::uint64_t seed = 3) {
  LinearGenSpec spec;
  spec.J = J;
  spec.D = D;
  spec.N = {10};
  spec.seed = seed;
  return gen_linear(spec).views;
}

RunConfig base_config() {
  RunConfig cfg;
  cfg.k = 3;
  cfg.inner_steps = 5;
  cfg.max_rounds = 10;
  cfg.timing = false;
  return cfg;
}

std::string csv(const std::vector<MetricsRecord>& records) {
  std::ostringstream out;
  write_csv(out, records);
  return out.str();
}

TEST(Initialize, ReplicasEqualAndFullPrecisionBits) {
  const auto views = small_views();
  for (bool mlp : {false, true}) {
    RunConfig cfg = base_config();
    if (mlp) {
      cfg.arch = Arch::Mlp;
      cfg.hidden = {8};
      cfg.step_theta = {ScheduleKind::Constant, 1e-3};
    }
    const Session s = initialize(cfg, views);
    EXPECT_TRUE(s.replicas_consistent());
    ASSERT_EQ(s.records.size(), 1U);
    EXPECT_EQ(s.records[0].round, 0U);
    EXPECT_EQ(s.records[0].bpv, 32.0);
    const std::uint64_t full = 3 * (64ULL * 120 * 3 + 128);
    EXPECT_EQ(s.uplink_bits, full);
    EXPECT_EQ(s.downlink_bits, full);
    EXPECT_LE(s.records[0].orthogonality_error, 1e-12);
  }
}

TEST(Initialize, InconsistentRowsRejected) {
  std::vector<View> views{View{oracle::gaussian_dense(10, 3, 1)}, View{oracle::gaussian_dense(11, 3, 2)}};
  try {
    initialize(base_config(), views);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InvalidConfig);
  }
}

TEST(Initialize, ObjectiveFactorWithMlpIsConfigError) {
  RunConfig cfg = base_config();
  cfg.arch = Arch::Mlp;
  cfg.stop = StopKind::ObjectiveFactor;
  cfg.stop_value = 1.5;
  cfg.step_theta = {ScheduleKind::Constant, 1e-3};
  try {
    cfg.validate();
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ConfigError);
  }
}

TEST(Mvlsa, FullRankMatchesOracle) {
  const auto views = small_views(60, 4, 5);
  RunConfig cfg = base_config();
  cfg.init = InitKind::Mvlsa;
  cfg.ktilde = 10;  // = N_i, full rank
  const auto warm = mvlsa_init(cfg, views);
  const auto o = build_oracle(views, cfg.k);
  EXPECT_LE(subspace_dist(warm.g0, o.u1), 1e-6);
  EXPECT_EQ(warm.uplink_bits, 3 * (64ULL * 60 * 10 + 128));
  EXPECT_EQ(warm.downlink_bits, 3 * (64ULL * 60 * 3 + 128));
  const Session s = initialize(cfg, views);
  EXPECT_LE(subspace_dist(s.server.g, o.u1), 1e-6);
  EXPECT_NEAR(s.records[0].objective, o.v_star, 1e-6);
}

TEST(Mvlsa, SingleViewGivesTopSingularVectors) {
  const DenseMat x = oracle::gaussian_dense(30, 6, 7);
  const std::vector<View> views{View{x}};
  RunConfig cfg = base_config();
  cfg.k = 2;
  cfg.ktilde = 2;
  const auto warm = mvlsa_init(cfg, views);
  const auto svd = oracle::jacobi_svd(oracle::from(x));
  std::vector<std::size_t> order(svd.s.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return svd.s[a] > svd.s[b]; });
  DenseMat top(30, 2);
  for (Eigen::Index c = 0; c < 2; ++c)
    for (Eigen::Index r = 0; r < 30; ++r) top(r, c) = svd.u(static_cast<std::size_t>(r), order[static_cast<std::size_t>(c)]);
  EXPECT_LE(subspace_dist(warm.g0, top), 1e-10);
}

TEST(Mvlsa, OversizedKtildeRejected) {
  RunConfig cfg = base_config();
  cfg.ktilde = 11;
  EXPECT_THROW(mvlsa_init(cfg, small_views()), Error);
  cfg.init = InitKind::Mvlsa;
  cfg.ktilde = 2;
  EXPECT_THROW(cfg.validate(), Error);
}

TEST(Mvlsa, WarmStartNeedsNoMoreRoundsThanRandom) {
  LinearGenSpec spec;  // J=500, D=20, N=25, I=3, nu=0.01
  const auto views = gen_linear(spec).views;
  RunConfig cfg;
  cfg.k = 5;
  cfg.batch = 150;
  cfg.stop = StopKind::ObjectiveFactor;
  cfg.stop_value = 1.5;
  cfg.max_rounds = 150;
  cfg.timing = false;
  RunConfig warm_cfg = cfg;
  warm_cfg.init = InitKind::Mvlsa;
  const RunResult cold = run(cfg, views), warm = run(warm_cfg, views);
  ASSERT_TRUE(warm.converged());
  if (cold.converged()) {
    EXPECT_LE(warm.rounds(), cold.rounds());
  } else {
    EXPECT_LE(warm.rounds(), cfg.max_rounds);
  }
}

TEST(Run, IdentityExactObjectiveNonIncreasing) {
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const auto views = small_views(100, 6, seed);
    RunConfig cfg = base_config();
    cfg.identity = true;
    cfg.exact = true;
    cfg.prox = false;
    cfg.max_rounds = 40;
    cfg.seed = seed;
    const auto res = run(cfg, views);
    for (std::size_t r = 1; r < res.records.size(); ++r)
      EXPECT_LE(res.records[r].objective, res.records[r - 1].objective * (1 + 1e-12) + 1e-15) << "round " << r;
  }
}

TEST(Run, BitAccountingIdentity) {
  const auto views = small_views();
  for (bool identity : {false, true}) {
    RunConfig cfg = base_config();
    cfg.identity = identity;
    cfg.q = 4;
    const auto res = run(cfg, views);
    const std::uint64_t I = 3, J = 120, K = 3;
    const std::uint64_t full = I * (64 * J * K + 128);
    const std::uint64_t per_round = identity ? full : I * (4 * J * K + 192);
    for (const auto& rec : res.records) {
      EXPECT_EQ(rec.uplink_bits, full + rec.round * per_round);
      EXPECT_EQ(rec.downlink_bits, full + rec.round * per_round);
      EXPECT_EQ(rec.bpv, 32.0 + static_cast<double>(rec.round) * (identity ? 32.0 : 4.0));
    }
  }
}

TEST(Run, ThreadCountDoesNotChangeTrajectory) {
  const auto views = small_views();
  RunConfig cfg = base_config();
  cfg.batch = 30;
  cfg.max_rounds = 15;
  const auto one = run(cfg, views);
  cfg.threads = 4;
  const auto four = run(cfg, views);
  EXPECT_EQ(csv(one.records), csv(four.records));
  EXPECT_EQ(one.g, four.g);
}

TEST(Run, ReplicasStayConsistent) {
  const auto views = small_views();
  RunConfig cfg = base_config();
  cfg.batch = 20;
  cfg.max_rounds = 30;
  const auto res = run(cfg, views);
  EXPECT_EQ(res.replica_violations, 0U);
  for (const auto& rec : res.records) {
    EXPECT_LE(rec.orthogonality_error, 1e-8);
    EXPECT_GE(rec.subspace_dist, 0.0);
    EXPECT_LE(rec.subspace_dist, 1.0);
  }
}

TEST(Run, ZeroMeanConstraintHolds) {
  RunConfig cfg = base_config();
  cfg.arch = Arch::Mlp;
  cfg.hidden = {6};
  cfg.optimizer = OptimizerKind::Adam;
  cfg.step_theta = {ScheduleKind::Constant, 1e-2};
  cfg.max_rounds = 10;
  const auto res = run(cfg, small_views());
  for (const auto& rec : res.records) {
    EXPECT_LE(rec.mean_error, 1e-8);
    EXPECT_LE(rec.orthogonality_error, 1e-8);
    EXPECT_TRUE(std::isnan(rec.subspace_dist));
  }
}

TEST(Run, ObjectiveFactorStopsAtTarget) {
  const auto views = small_views(80, 4, 9);
  RunConfig cfg = base_config();
  cfg.identity = true;
  cfg.exact = true;
  cfg.init = InitKind::Mvlsa;
  cfg.ktilde = 10;
  cfg.stop = StopKind::ObjectiveFactor;
  cfg.stop_value = 1.5;
  const auto res = run(cfg, views);
  EXPECT_TRUE(res.converged());
  ASSERT_TRUE(res.v_star.has_value());
  EXPECT_LE(res.records.back().objective, 1.5 * *res.v_star);
}

TEST(Run, RelChangeStops) {
  RunConfig cfg = base_config();
  cfg.exact = true;
  cfg.identity = true;
  cfg.stop = StopKind::RelChange;
  cfg.stop_value = 1e-5;
  cfg.max_rounds = 500;
  const auto res = run(cfg, small_views());
  EXPECT_TRUE(res.converged());
  EXPECT_LT(res.rounds(), 500U);
}

TEST(Run, MaxRoundsIsNotConvergenceForTargets) {
  RunConfig cfg = base_config();
  cfg.stop = StopKind::ObjectiveFactor;
  cfg.stop_value = 1.0 + 1e-12;
  cfg.max_rounds = 2;
  const auto res = run(cfg, small_views());
  EXPECT_EQ(res.reason, StopReason::MaxRounds);
  EXPECT_EQ(res.rounds(), 2U);
}

TEST(Run, SinkSeesEveryRecord) {
  std::vector<std::uint64_t> seen;
  RunConfig cfg = base_config();
  run(cfg, small_views(), [&](const MetricsRecord& m) { seen.push_back(m.round); });
  ASSERT_EQ(seen.size(), 11U);
  for (std::uint64_t r = 0; r <= 10; ++r) EXPECT_EQ(seen[r], r);
}

TEST(ParallelFor, CoversEveryIndexOnceAndRethrows) {
  std::vector<int> hits(37, 0);
  parallel_for(37, 4, [&](std::size_t i) { hits[i] += 1; });
  for (int h : hits) EXPECT_EQ(h, 1);
  EXPECT_THROW(parallel_for(8, 3, [](std::size_t i) {
                 if (i == 5) fail(ErrorKind::InvalidInput, "boom");
               }),
               Error);
}

}  // namespace
}  // namespace cmv
