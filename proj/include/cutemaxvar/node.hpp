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

// Per-view worker: holds the local data, the local transform, and the shared
// estimates of the server's consensus G and of its own output.

#pragma once

#include <numeric>
#include <optional>
#include <vector>

#include "cutemaxvar/message.hpp"
#include "cutemaxvar/transform.hpp"

namespace cmv {

struct NodeOptions {
  std::size_t inner_steps = 1;  // T
  std::size_t batch = 0;        // B; 0 means the full view
  OptimizerKind optimizer = OptimizerKind::Sgd;
  bool exact = false;           // closed-form least squares (linear only)
  bool track_gradients = false; // accumulate ||grad||^2 over inner steps
  std::uint64_t seed = 0;
};

struct NodeState {
  std::size_t id = 0;
  const View* x = nullptr;
  TransformParams params;
  OptimizerState opt;
  DenseMat g_hat;    // estimate of G shared with the server
  DenseMat m_hat;    // estimate of this node's output shared with the server
  DenseMat output;   // f(theta; X) after the last uplink
  NodeOptions options;
  std::uint64_t round = 0;
  double inner_grad_sq = 0.0;  // sum over the last round's inner steps

  std::vector<std::size_t> perm;   // persistent index pool for minibatches
  std::optional<DenseMat> pinv;    // X^+ for exact solves

  std::size_t rows() const { return cmv::rows(*x); }
};

inline NodeState make_node(std::size_t id, const View& x, TransformParams params,
                           const NodeOptions& options) {
  require(input_dim(params) == cols(x), ErrorKind::InvalidConfig,
          "transform input width does not match the view");
  require(!options.exact || is_linear(params), ErrorKind::InvalidConfig,
          "exact local solves need a linear transform");
  require(options.batch <= rows(x), ErrorKind::InvalidConfig,
          "minibatch larger than the view");
  NodeState n;
  n.id = id;
  n.x = &x;
  n.options = options;
  n.opt = make_optimizer(options.optimizer, 1.0, params);
  n.params = std::move(params);
  n.perm.resize(rows(x));
  std::iota(n.perm.begin(), n.perm.end(), std::size_t{0});
  if (options.exact) n.pinv = pinv(to_dense(x));
  return n;
}

namespace detail {

// Draws B distinct rows. A partial Fisher-Yates pass over a permutation of any
// order yields a uniform B-subset, so the pool is never reset.
inline std::span<const std::size_t> draw_batch(NodeState& n, CounterRng& rng) {
  const std::size_t J = n.perm.size();
  const std::size_t B = n.options.batch;
  for (std::size_t k = 0; k < B; ++k) {
    const std::size_t j = k + static_cast<std::size_t>(rng.next_below(J - k));
    std::swap(n.perm[k], n.perm[j]);
  }
  return {n.perm.data(), B};
}

}  // namespace detail

// Inner loop of round r: T optimizer steps on f_i(theta; G_hat), or the exact
// minimizer when configured.
inline void local_update(NodeState& n, std::uint64_t round, double alpha) {
  require(n.g_hat.rows() == static_cast<Eigen::Index>(n.rows()), ErrorKind::ProtocolError,
          "node has no consensus estimate yet");
  n.round = round;
  n.inner_grad_sq = 0.0;
  if (n.options.exact) {
    std::get<LinearParams>(n.params).Q = *n.pinv * n.g_hat;
    return;
  }
  if (n.options.inner_steps == 0) return;
  require(n.options.batch <= n.rows(), ErrorKind::InvalidConfig, "minibatch larger than the view");
  require(alpha > 0.0 && std::isfinite(alpha), ErrorKind::InvalidConfig,
          "step size must be positive");
  n.opt.alpha = alpha;
  const bool full = n.options.batch == 0 || n.options.batch == n.rows();
  CounterRng rng(n.options.seed, Domain::Minibatch, round, n.id);
  for (std::size_t t = 0; t < n.options.inner_steps; ++t) {
    TransformParams g;
    if (full) {
      g = grad(n.params, *n.x, n.g_hat);
    } else {
      const auto idx = detail::draw_batch(n, rng);
      g = grad(n.params, gather_rows(*n.x, idx), gather_rows(n.g_hat, idx));
    }
    if (n.options.track_gradients) n.inner_grad_sq += squared_norm(g);
    step(n.params, n.opt, g);
  }
  require(all_finite(n.params), ErrorKind::InvalidInput, "local update diverged");
}

// Uplink after the local update: C(f(theta; X) - M_hat), also applied locally.
// The identity quantizer ships the output itself so both copies match it
// exactly; the bit count is the same as for the delta.
inline RoundMessage make_uplink(NodeState& n, std::uint64_t round, const QuantizerConfig& qcfg) {
  n.output = forward(n.params, *n.x);
  RoundMessage msg;
  msg.round = round;
  msg.direction = Direction::Uplink;
  msg.node = n.id;
  if (qcfg.mode == QuantMode::Identity) {
    msg.replace = true;
    msg.payload = quantize(n.output, qcfg, CounterRng{});
    n.m_hat = n.output;
    return msg;
  }
  const DenseMat delta = n.output - n.m_hat;
  msg.payload = quantize(delta, qcfg, CounterRng(qcfg.seed, Domain::Quantizer, round, n.id));
  n.m_hat += decode(msg.payload, qcfg);
  return msg;
}

// Full-precision uplink of the current output; overwrites both copies.
inline RoundMessage make_init_uplink(NodeState& n) {
  n.output = forward(n.params, *n.x);
  n.m_hat = n.output;
  n.round = 0;
  RoundMessage msg;
  msg.round = 0;
  msg.direction = Direction::Uplink;
  msg.node = n.id;
  msg.replace = true;
  msg.payload = quantize(n.output, QuantizerConfig::identity(), CounterRng{});
  return msg;
}

inline void apply_downlink(NodeState& n, const RoundMessage& msg, const QuantizerConfig& qcfg) {
  require(msg.direction == Direction::Downlink, ErrorKind::ProtocolError,
          "node received an uplink message");
  require(msg.round == n.round, ErrorKind::ProtocolError, "downlink round mismatch");
  if (msg.replace) {
    n.g_hat = decode_unscaled(msg.payload);
    return;
  }
  const DenseMat d = decode(msg.payload, qcfg);
  require(d.rows() == n.g_hat.rows() && d.cols() == n.g_hat.cols(), ErrorKind::ProtocolError,
          "downlink shape mismatch");
  n.g_hat += d;
}

}  // namespace cmv
