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

// Lockstep simulation of the quantized protocol over an in-process bus.
//
// Round 0 is the full-precision initialization. Each later round r runs
//   nodes:   local_update, make_uplink                  (concurrently)
//   server:  apply_uplink (by node id), update_g, make_downlink
//   nodes:   apply_downlink
// and appends one MetricsRecord.

#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "cutemaxvar/metrics.hpp"
#include "cutemaxvar/node.hpp"
#include "cutemaxvar/oracle.hpp"
#include "cutemaxvar/schedule.hpp"
#include "cutemaxvar/server.hpp"

namespace cmv {

enum class Arch : std::uint8_t { Linear, Mlp };
enum class InitKind : std::uint8_t { Random, Mvlsa };
enum class StopKind : std::uint8_t { Rounds, ObjectiveFactor, RelChange };
enum class OracleUse : std::uint8_t { Auto, On, Off };
enum class StopReason : std::uint8_t { Criterion, MaxRounds, Degenerate, ProtocolFault };

inline constexpr unsigned kFullPrecisionBits = 32;  // q_full in CR and BPV

struct RunConfig {
  std::size_t k = 5;
  unsigned q = 3;
  bool identity = false;  // lossless baseline instead of the q-bit quantizer
  QuantMode quant_mode = QuantMode::Unscaled;
  std::size_t inner_steps = 20;  // T
  std::size_t batch = 0;         // B; 0 means full view
  OptimizerKind optimizer = OptimizerKind::Sgd;
  bool exact = false;
  Schedule step_theta{ScheduleKind::InvLipschitz};
  Schedule step_g{ScheduleKind::Constant, 1.0};
  std::optional<bool> zero_mean;  // default: on for MLP, off for linear
  bool prox = true;
  InitKind init = InitKind::Random;
  std::size_t ktilde = 10;
  std::size_t max_rounds = 100;
  StopKind stop = StopKind::Rounds;
  double stop_value = 0.0;
  std::uint64_t seed = 1;
  Arch arch = Arch::Linear;
  std::vector<std::size_t> hidden{128, 64};
  Activation activation = Activation::ReLU;
  double lipschitz = 0.0;  // 0: estimate from the views (linear only)
  OracleUse oracle = OracleUse::Auto;
  std::size_t threads = 1;
  bool timing = true;
  bool check_replicas = true;
  bool track_potential = false;

  bool centered() const { return zero_mean.value_or(arch == Arch::Mlp); }

  QuantizerConfig quantizer() const {
    return identity ? QuantizerConfig::identity(seed) : QuantizerConfig::from_bits(q, quant_mode, seed);
  }

  // Bits per exchanged variable charged by CR/BPV.
  unsigned wire_q() const { return identity ? kFullPrecisionBits : q; }

  void validate() const {
    require(k >= 1, ErrorKind::InvalidConfig, "K must be positive");
    require(identity || (q >= 2 && q <= 16), ErrorKind::InvalidConfig, "q must lie in [2, 16]");
    require(!identity || quant_mode != QuantMode::Scaled, ErrorKind::InvalidConfig,
            "scaled mode needs a finite q");
    require(!exact || arch == Arch::Linear, ErrorKind::InvalidConfig,
            "exact local solves need a linear transform");
    require(init != InitKind::Mvlsa || arch == Arch::Linear, ErrorKind::InvalidConfig,
            "warm start is defined for linear transforms only");
    require(init != InitKind::Mvlsa || ktilde >= k, ErrorKind::InvalidConfig, "K~ must be >= K");
    require(max_rounds >= 1, ErrorKind::InvalidConfig, "max_rounds must be positive");
    require(threads >= 1, ErrorKind::InvalidConfig, "threads must be positive");
    require(stop != StopKind::ObjectiveFactor || arch == Arch::Linear, ErrorKind::ConfigError,
            "objective-factor stopping needs the linear eigen-oracle");
    require(stop != StopKind::ObjectiveFactor || oracle != OracleUse::Off, ErrorKind::ConfigError,
            "objective-factor stopping needs the oracle");
    require(stop == StopKind::Rounds || stop_value > 0.0, ErrorKind::ConfigError,
            "stop value must be positive");
    require(arch == Arch::Linear || step_theta.kind != ScheduleKind::InvLipschitz ||
                lipschitz > 0.0,
            ErrorKind::ConfigError, "inverse-Lipschitz steps need a Lipschitz constant for MLPs");
  }
};

inline const char* to_string(StopReason r) {
  switch (r) {
    case StopReason::Criterion: return "criterion";
    case StopReason::MaxRounds: return "max_rounds";
    case StopReason::Degenerate: return "degenerate";
    case StopReason::ProtocolFault: return "protocol_fault";
  }
  return "?";
}

// Runs f(i) for i in [0, n) on up to `threads` workers. Each index is handled
// by exactly one worker, so results never depend on the thread count.
inline void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& f) {
  if (threads <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) f(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr err;
  std::atomic<bool> failed{false};
  std::vector<std::jthread> pool;
  const std::size_t workers = std::min(threads, n);
  std::mutex mu;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n && !failed; i = next++) {
        try {
          f(i);
        } catch (...) {
          std::lock_guard lock(mu);
          if (!err) err = std::current_exception();
          failed = true;
        }
      }
    });
  }
  pool.clear();
  if (err) std::rethrow_exception(err);
}

namespace detail {

// sigma_max(X)^2 by power iteration on X^T X.
inline double sigma_max_sq(const View& x) {
  const auto n = static_cast<Eigen::Index>(cols(x));
  DenseMat v = DenseMat::Constant(n, 1, 1.0 / std::sqrt(static_cast<double>(n)));
  double lambda = 0.0;
  for (int it = 0; it < 1000; ++it) {
    DenseMat w = transpose_multiply(x, multiply(x, v));
    const double next = w.norm();
    if (next == 0.0) return 0.0;
    v = w / next;
    if (std::abs(next - lambda) <= 1e-13 * next) {
      lambda = next;
      break;
    }
    lambda = next;
  }
  return lambda;
}

inline std::size_t common_rows(const std::vector<View>& views) {
  require(!views.empty(), ErrorKind::InvalidConfig, "need at least one view");
  const std::size_t J = rows(views[0]);
  for (const auto& v : views)
    require(rows(v) == J, ErrorKind::InvalidConfig, "views disagree on the number of rows");
  return J;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Warm start

struct MvlsaInit {
  DenseMat g0;
  std::vector<DenseMat> q0;
  std::uint64_t uplink_bits = 0;
  std::uint64_t downlink_bits = 0;
};

namespace detail {

struct TruncatedSvd {
  DenseMat U;
  Vec S;
  DenseMat V;
};

inline TruncatedSvd truncated_svd(const View& x, std::size_t rank) {
  const auto r = static_cast<Eigen::Index>(rank);
  if (const auto* d = std::get_if<DenseMat>(&x)) {
    const ThinSvd s = thin_svd(*d);
    return {s.U.leftCols(r), s.S.head(r), s.V.leftCols(r)};
  }
  const SymEig e = sym_eig_topk(gram_matrix(x), rank);
  TruncatedSvd t;
  t.S = e.values.cwiseMax(0.0).cwiseSqrt();
  t.V = e.vectors;
  t.U = multiply(x, t.V);
  for (Eigen::Index c = 0; c < r; ++c)
    if (t.S(c) > 0.0) t.U.col(c) /= t.S(c);
  return t;
}

}  // namespace detail

inline MvlsaInit mvlsa_init(const RunConfig& cfg, const std::vector<View>& views) {
  const std::size_t J = detail::common_rows(views);
  for (const auto& v : views)
    require(cfg.ktilde >= cfg.k && cfg.ktilde <= std::min(J, cols(v)), ErrorKind::InvalidConfig,
            "K~ must lie in [K, min(J, N_i)]");
  const auto kt = static_cast<Eigen::Index>(cfg.ktilde);
  const auto K = static_cast<Eigen::Index>(cfg.k);
  std::vector<detail::TruncatedSvd> parts(views.size());
  parallel_for(views.size(), cfg.threads,
               [&](std::size_t i) { parts[i] = detail::truncated_svd(views[i], cfg.ktilde); });

  MvlsaInit out;
  DenseMat w(static_cast<Eigen::Index>(J), kt * static_cast<Eigen::Index>(views.size()));
  for (std::size_t i = 0; i < views.size(); ++i) {
    w.middleCols(kt * static_cast<Eigen::Index>(i), kt) = parts[i].U;
    out.uplink_bits += 64ULL * J * cfg.ktilde + 128;
  }
  // Top-K eigenvectors of sum_i U_i U_i^T = W W^T are the top left singular vectors of W.
  out.g0 = thin_svd(w).U.leftCols(K);
  out.downlink_bits = views.size() * (64ULL * J * cfg.k + 128);
  for (const auto& p : parts) {
    const double rho = 1e-8 * p.S.squaredNorm() / static_cast<double>(p.V.rows());
    const Vec gain = p.S.array() / (p.S.array().square() + rho);
    out.q0.push_back(p.V * gain.asDiagonal() * (p.U.transpose() * out.g0));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Session

struct Session {
  RunConfig cfg;
  const std::vector<View>* views = nullptr;
  std::vector<NodeState> nodes;
  ServerState server;
  QuantizerConfig qcfg;
  std::optional<EigenOracle> oracle;
  std::vector<double> node_lipschitz;
  double lipschitz = 1.0;
  std::uint64_t uplink_bits = 0;
  std::uint64_t downlink_bits = 0;
  std::size_t replica_violations = 0;
  std::vector<MetricsRecord> records;

  std::uint64_t round() const { return server.round; }
  std::vector<TransformParams> params() const {
    std::vector<TransformParams> p;
    for (const auto& n : nodes) p.push_back(n.params);
    return p;
  }
  bool replicas_consistent() const {
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      if (nodes[i].m_hat != server.m_hat[i] || nodes[i].g_hat != server.g_hat) return false;
    }
    return true;
  }
};

namespace detail {

inline MetricsRecord measure(Session& s, double wall_ms) {
  MetricsRecord m;
  m.round = s.server.round;
  std::vector<DenseMat> outputs;
  for (const auto& n : s.nodes) outputs.push_back(n.output);
  m.objective = objective_from_outputs(outputs, s.server.g);
  m.g_change = (s.server.g - s.server.g_prev).norm();
  if (s.oracle) m.subspace_dist = subspace_dist(s.server.g, s.oracle->u1);
  m.kkt_residual = kkt_residual(*s.views, s.params(), s.server.g_prev, s.server.g,
                                s.cfg.centered(), &outputs);
  m.potential = m.kkt_residual * m.kkt_residual;
  for (const auto& n : s.nodes) m.potential += n.inner_grad_sq;
  m.uplink_bits = s.uplink_bits;
  m.downlink_bits = s.downlink_bits;
  m.bpv = static_cast<double>(kFullPrecisionBits) +
          static_cast<double>(s.server.round) * static_cast<double>(s.cfg.wire_q());
  m.wall_ms = s.cfg.timing ? wall_ms : 0.0;
  const auto K = s.server.g.cols();
  m.orthogonality_error =
      (s.server.g.transpose() * s.server.g - DenseMat::Identity(K, K)).cwiseAbs().maxCoeff();
  m.mean_error = s.server.g.colwise().mean().cwiseAbs().maxCoeff();
  m.degenerate = s.server.degenerate;
  if (s.cfg.check_replicas && !s.replicas_consistent()) ++s.replica_violations;
  return m;
}

inline std::uint64_t broadcast_bits(const Session& s, const RoundMessage& msg) {
  return msg.payload_bits() * s.nodes.size();
}

}  // namespace detail

inline Session initialize(const RunConfig& cfg, const std::vector<View>& views) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const std::size_t J = detail::common_rows(views);
  require(cfg.k <= J, ErrorKind::InvalidConfig, "K must not exceed J");
  Session s;
  s.cfg = cfg;
  s.views = &views;
  s.qcfg = cfg.quantizer();
  s.server = make_server(views.size(), J, cfg.k, cfg.centered());

  const bool want_oracle = cfg.arch == Arch::Linear &&
                           (cfg.oracle == OracleUse::On || cfg.stop == StopKind::ObjectiveFactor ||
                            (cfg.oracle == OracleUse::Auto && J <= kOracleMaxRows));
  if (want_oracle) s.oracle = build_oracle(views, cfg.k);

  s.node_lipschitz.resize(views.size());
  if (cfg.arch == Arch::Linear) {
    parallel_for(views.size(), cfg.threads,
                 [&](std::size_t i) { s.node_lipschitz[i] = detail::sigma_max_sq(views[i]); });
  }
  if (cfg.lipschitz > 0.0) {
    std::fill(s.node_lipschitz.begin(), s.node_lipschitz.end(), cfg.lipschitz);
  }
  s.lipschitz = *std::max_element(s.node_lipschitz.begin(), s.node_lipschitz.end());
  if (s.lipschitz <= 0.0) s.lipschitz = 1.0;

  std::optional<MvlsaInit> warm;
  if (cfg.init == InitKind::Mvlsa) warm = mvlsa_init(cfg, views);

  NodeOptions opts;
  opts.inner_steps = cfg.inner_steps;
  opts.batch = cfg.batch;
  opts.optimizer = cfg.optimizer;
  opts.exact = cfg.exact;
  opts.track_gradients = cfg.track_potential;
  opts.seed = cfg.seed;
  for (std::size_t i = 0; i < views.size(); ++i) {
    CounterRng rng(cfg.seed, Domain::Init, 0, i);
    TransformParams p;
    if (cfg.arch == Arch::Linear) {
      p = warm ? LinearParams{warm->q0[i]} : init_linear(cols(views[i]), cfg.k, rng);
    } else {
      std::vector<std::size_t> dims{cols(views[i])};
      dims.insert(dims.end(), cfg.hidden.begin(), cfg.hidden.end());
      dims.push_back(cfg.k);
      p = init_mlp(dims, cfg.activation, rng);
    }
    s.nodes.push_back(make_node(i, views[i], std::move(p), opts));
  }
  if (warm) {
    s.uplink_bits += warm->uplink_bits;
    s.downlink_bits += warm->downlink_bits;
  }

  std::vector<RoundMessage> up(s.nodes.size());
  parallel_for(s.nodes.size(), cfg.threads,
               [&](std::size_t i) { up[i] = make_init_uplink(s.nodes[i]); });
  for (const auto& msg : up) {
    apply_uplink(s.server, msg, s.qcfg);
    s.uplink_bits += msg.payload_bits();
  }
  update_g(s.server, 0.0, false);
  s.server.g_prev = s.server.g;
  const RoundMessage down = make_init_downlink(s.server);
  for (auto& n : s.nodes) apply_downlink(n, down, s.qcfg);
  s.downlink_bits += detail::broadcast_bits(s, down);

  const double ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  s.records.push_back(detail::measure(s, ms));
  return s;
}

// One round of the protocol; returns the new record.
inline const MetricsRecord& advance(Session& s) {
  const auto t0 = std::chrono::steady_clock::now();
  const std::uint64_t r = s.server.round + 1;
  s.server.round = r;
  ScheduleContext ctx{s.nodes.size(), s.cfg.inner_steps, s.lipschitz, s.cfg.max_rounds};

  std::vector<RoundMessage> up(s.nodes.size());
  parallel_for(s.nodes.size(), s.cfg.threads, [&](std::size_t i) {
    ScheduleContext own = ctx;
    if (s.cfg.step_theta.kind == ScheduleKind::InvLipschitz) own.lipschitz = s.node_lipschitz[i];
    const double alpha =
        s.cfg.exact ? 0.0 : step_size(s.cfg.step_theta, static_cast<std::size_t>(r), own);
    local_update(s.nodes[i], r, alpha);
    up[i] = make_uplink(s.nodes[i], r, s.qcfg);
  });
  for (const auto& msg : up) {
    apply_uplink(s.server, msg, s.qcfg);
    s.uplink_bits += msg.payload_bits();
  }

  const double alpha_g = s.cfg.prox ? step_size(s.cfg.step_g, static_cast<std::size_t>(r), ctx) : 0.0;
  update_g(s.server, alpha_g, s.cfg.prox);
  const RoundMessage down = make_downlink(s.server, s.qcfg);
  for (auto& n : s.nodes) apply_downlink(n, down, s.qcfg);
  s.downlink_bits += detail::broadcast_bits(s, down);

  const double ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  s.records.push_back(detail::measure(s, ms));
  return s.records.back();
}

struct RunResult {
  std::vector<MetricsRecord> records;
  StopReason reason = StopReason::MaxRounds;
  std::string message;
  std::optional<double> v_star;
  std::optional<Vec> eigvals;
  std::vector<TransformParams> params;
  DenseMat g;
  std::size_t replica_violations = 0;

  std::uint64_t rounds() const { return records.empty() ? 0 : records.back().round; }
  bool converged() const { return reason == StopReason::Criterion; }
};

inline bool stop_reached(const Session& s) {
  const auto& rec = s.records;
  const MetricsRecord& last = rec.back();
  switch (s.cfg.stop) {
    case StopKind::Rounds:
      return false;
    case StopKind::ObjectiveFactor:
      return last.objective <= s.cfg.stop_value * s.oracle->v_star;
    case StopKind::RelChange:
      if (rec.size() < 2) return false;
      return std::abs(last.objective - rec[rec.size() - 2].objective) <=
             s.cfg.stop_value * std::max(std::abs(rec[rec.size() - 2].objective), 1e-300);
  }
  return false;
}

using RecordSink = std::function<void(const MetricsRecord&)>;

inline RunResult finish(Session& s, StopReason reason, std::string message = {}) {
  RunResult out;
  out.records = s.records;
  out.reason = reason;
  out.message = std::move(message);
  if (s.oracle) {
    out.v_star = s.oracle->v_star;
    out.eigvals = s.oracle->eigvals;
  }
  out.params = s.params();
  out.g = s.server.g;
  out.replica_violations = s.replica_violations;
  return out;
}

inline RunResult run(const RunConfig& cfg, const std::vector<View>& views,
                     const RecordSink& sink = {}) {
  Session s = initialize(cfg, views);
  if (sink) sink(s.records.back());
  if (s.server.degenerate) return finish(s, StopReason::Degenerate, "degenerate initial update");
  if (stop_reached(s)) return finish(s, StopReason::Criterion);
  while (s.round() < cfg.max_rounds) {
    try {
      advance(s);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::ProtocolError) throw;
      return finish(s, StopReason::ProtocolFault, e.what());
    }
    if (sink) sink(s.records.back());
    if (s.server.degenerate) return finish(s, StopReason::Degenerate, "rank-deficient G update");
    if (stop_reached(s)) return finish(s, StopReason::Criterion);
  }
  return finish(s, cfg.stop == StopKind::Rounds ? StopReason::Criterion : StopReason::MaxRounds);
}

}  // namespace cmv
