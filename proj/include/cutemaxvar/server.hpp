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

// Aggregator: keeps the estimates M_hat_i of every node output and the
// consensus G, and computes the orthonormal G update.

#pragma once

#include <vector>

#include "cutemaxvar/message.hpp"
#include "cutemaxvar/rng.hpp"

namespace cmv {

struct ServerState {
  std::size_t views = 0;  // I
  std::size_t rows = 0;   // J
  std::size_t k = 0;      // K
  bool zero_mean = false;
  std::vector<DenseMat> m_hat;
  DenseMat g;
  DenseMat g_prev;
  DenseMat g_hat;
  std::uint64_t round = 0;
  bool degenerate = false;  // last update needed basis completion
};

inline ServerState make_server(std::size_t views, std::size_t rows, std::size_t k,
                               bool zero_mean) {
  require(views >= 1, ErrorKind::InvalidConfig, "need at least one view");
  require(k >= 1 && k <= rows, ErrorKind::InvalidConfig, "K must lie in [1, J]");
  require(!zero_mean || k < rows, ErrorKind::InvalidConfig,
          "zero-mean constraint needs K < J");
  ServerState s;
  s.views = views;
  s.rows = rows;
  s.k = k;
  s.zero_mean = zero_mean;
  const auto J = static_cast<Eigen::Index>(rows);
  const auto K = static_cast<Eigen::Index>(k);
  s.m_hat.assign(views, DenseMat::Zero(J, K));
  s.g = DenseMat::Zero(J, K);
  s.g_prev = s.g;
  s.g_hat = s.g;
  return s;
}

inline void apply_uplink(ServerState& s, const RoundMessage& msg, const QuantizerConfig& qcfg) {
  require(msg.direction == Direction::Uplink, ErrorKind::ProtocolError,
          "server received a downlink message");
  require(msg.node < s.views, ErrorKind::ProtocolError, "uplink from an unknown node");
  require(msg.round == s.round, ErrorKind::ProtocolError, "uplink round mismatch");
  DenseMat& m = s.m_hat[msg.node];
  if (msg.replace) {
    DenseMat full = decode_unscaled(msg.payload);
    require(full.rows() == m.rows() && full.cols() == m.cols(), ErrorKind::ProtocolError,
            "uplink shape mismatch");
    m = std::move(full);
    return;
  }
  const DenseMat d = decode(msg.payload, qcfg);
  require(d.rows() == m.rows() && d.cols() == m.cols(), ErrorKind::ProtocolError,
          "uplink shape mismatch");
  m += d;
}

namespace detail {

// Extends the orthonormal columns of `basis` to K columns with canonical
// directions (made orthogonal to 1 under the zero-mean constraint).
inline DenseMat complete_basis(DenseMat basis, std::size_t k, bool zero_mean) {
  const Eigen::Index J = basis.rows();
  DenseMat out(J, static_cast<Eigen::Index>(k));
  Eigen::Index have = basis.cols();
  out.leftCols(have) = basis;
  for (Eigen::Index j = 0; j < J && have < static_cast<Eigen::Index>(k); ++j) {
    Vec v = Vec::Zero(J);
    v(j) = 1.0;
    if (zero_mean) v.array() -= 1.0 / static_cast<double>(J);
    for (int pass = 0; pass < 2; ++pass) {
      if (have > 0) v -= out.leftCols(have) * (out.leftCols(have).transpose() * v);
    }
    const double nv = v.norm();
    if (nv < 1e-8) continue;
    out.col(have++) = v / nv;
  }
  require(have == static_cast<Eigen::Index>(k), ErrorKind::DegenerateUpdate,
          "could not complete an orthonormal basis");
  return out;
}

}  // namespace detail

struct GUpdate {
  DenseMat g;
  bool degenerate = false;
};

// argmax_{G^T G = I} tr(G^T Y) with Y = sum_i C(M_hat_i) + (1/alpha) G_prev,
// where C centers rows under the zero-mean constraint and the proximal term is
// dropped when alpha <= 0. The maximizer is the polar factor U V^T of Y.
inline GUpdate solve_g(const std::vector<DenseMat>& m_hat, const DenseMat* g_prev,
                       double alpha, bool zero_mean) {
  require(!m_hat.empty(), ErrorKind::InvalidInput, "no node outputs");
  DenseMat y = DenseMat::Zero(m_hat[0].rows(), m_hat[0].cols());
  for (const auto& m : m_hat) y += zero_mean ? center_rows(m) : m;
  if (g_prev != nullptr && alpha > 0.0) y += *g_prev / alpha;
  require_finite(y, "G update input");
  const auto k = static_cast<std::size_t>(y.cols());
  const ThinSvd svd = thin_svd(y);
  const double smax = svd.S.size() > 0 ? svd.S(0) : 0.0;
  const double tol = static_cast<double>(std::max(y.rows(), y.cols())) *
                     std::numeric_limits<double>::epsilon() * smax;
  Eigen::Index rank = 0;
  while (rank < svd.S.size() && svd.S(rank) > tol && smax > 0.0) ++rank;
  GUpdate out;
  if (rank == static_cast<Eigen::Index>(k)) {
    out.g = svd.U * svd.V.transpose();
    return out;
  }
  out.degenerate = true;
  const DenseMat u = detail::complete_basis(svd.U.leftCols(rank), k, zero_mean);
  // The trailing columns of V pair with directions Y does not reach; any
  // orthogonal completion of V maximizes the trace.
  out.g = u * svd.V.transpose();
  return out;
}

inline void update_g(ServerState& s, double alpha, bool prox) {
  GUpdate u = solve_g(s.m_hat, prox ? &s.g : nullptr, alpha, s.zero_mean);
  s.g_prev = s.g;
  s.g = std::move(u.g);
  s.degenerate = u.degenerate;
}

inline RoundMessage make_downlink(ServerState& s, const QuantizerConfig& qcfg) {
  RoundMessage msg;
  msg.round = s.round;
  msg.direction = Direction::Downlink;
  if (qcfg.mode == QuantMode::Identity) {
    msg.replace = true;
    msg.payload = quantize(s.g, qcfg, CounterRng{});
    s.g_hat = s.g;
    return msg;
  }
  const DenseMat delta = s.g - s.g_hat;
  msg.payload = quantize(delta, qcfg,
                         CounterRng(qcfg.seed, Domain::Quantizer, s.round, kDownlinkChannel));
  s.g_hat += decode(msg.payload, qcfg);
  return msg;
}

inline RoundMessage make_init_downlink(ServerState& s) {
  RoundMessage msg;
  msg.round = s.round;
  msg.direction = Direction::Downlink;
  msg.replace = true;
  msg.payload = quantize(s.g, QuantizerConfig::identity(), CounterRng{});
  s.g_hat = s.g;
  return msg;
}

}  // namespace cmv
