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

// Synthetic multiview data.
//
// Linear: X_i = Z A_i + nu_i N_i with standard normal Z (J x D), A_i, N_i. The
// sparse variant keeps each entry of X_i independently with probability rho.
//
// Deep toy: each sample has a cluster label c shared by all views and a ring
// radius c + 1. Every view draws its own angle on that ring, then applies a
// fixed random rotation, a per-coordinate tanh warp and Gaussian noise. Only
// the label is common to the views, and no raw view is linearly separable.

#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "cutemaxvar/matcore.hpp"
#include "cutemaxvar/rng.hpp"

namespace cmv {

struct LinearGenSpec {
  std::size_t J = 500;
  std::size_t D = 20;
  std::size_t I = 3;
  std::vector<std::size_t> N{25};  // one entry, or one per view
  std::vector<double> nu{0.01};    // one entry, or one per view
  bool sparse = false;
  double density = 1.0;  // rho, sparse only
  bool center = true;    // dense only
  std::uint64_t seed = 1;

  std::size_t n(std::size_t i) const { return N.size() == 1 ? N[0] : N.at(i); }
  double noise(std::size_t i) const { return nu.size() == 1 ? nu[0] : nu.at(i); }

  void validate() const {
    require(J >= 1 && D >= 1 && I >= 1, ErrorKind::InvalidConfig, "J, D, I must be positive");
    require(D <= J, ErrorKind::InvalidConfig, "D must not exceed J");
    require(N.size() == 1 || N.size() == I, ErrorKind::InvalidConfig, "need 1 or I view widths");
    require(nu.size() == 1 || nu.size() == I, ErrorKind::InvalidConfig, "need 1 or I noise levels");
    for (auto w : N) require(w >= 1, ErrorKind::InvalidConfig, "view width must be positive");
    for (auto v : nu) require(v >= 0.0, ErrorKind::InvalidConfig, "noise level must be >= 0");
    require(!sparse || (density > 0.0 && density <= 1.0), ErrorKind::InvalidConfig,
            "density must lie in (0, 1]");
  }
};

struct DeepGenSpec {
  std::size_t J = 10000;
  std::size_t I = 3;
  std::size_t clusters = 3;
  double sigma = 0.05;
  std::size_t test = 0;  // extra held-out samples drawn from the same process
  bool warp = true;      // false: no rotation and no tanh warp
  std::uint64_t seed = 1;

  void validate() const {
    require(J >= 1 && I >= 1, ErrorKind::InvalidConfig, "J and I must be positive");
    require(clusters >= 2, ErrorKind::InvalidConfig, "need at least two clusters");
    require(sigma >= 0.0, ErrorKind::InvalidConfig, "noise must be >= 0");
  }
};

struct Dataset {
  std::vector<View> views;
  std::vector<std::uint32_t> labels;
  std::vector<View> test_views;
  std::vector<std::uint32_t> test_labels;
  std::vector<DenseMat> latent;  // deep toy: per-view ring points before the warp (train rows)
};

namespace detail {

inline DenseMat normal_matrix(std::size_t rows, std::size_t cols, CounterRng rng) {
  DenseMat m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = rng.next_normal();
  return m;
}

enum : std::uint64_t {
  kStreamZ = 0, kStreamA = 1, kStreamNoise = 2, kStreamMask = 3,
  kStreamLabels = 10, kStreamAngle = 11, kStreamToyNoise = 12, kStreamWarp = 13,
};

}  // namespace detail

inline Dataset gen_linear(const LinearGenSpec& spec) {
  spec.validate();
  Dataset ds;
  const auto seed = spec.seed;
  if (!spec.sparse) {
    const DenseMat z = detail::normal_matrix(spec.J, spec.D, {seed, Domain::DataGen, detail::kStreamZ, 0});
    for (std::size_t i = 0; i < spec.I; ++i) {
      const DenseMat a = detail::normal_matrix(spec.D, spec.n(i), {seed, Domain::DataGen, detail::kStreamA, i});
      DenseMat x = z * a;
      if (spec.noise(i) > 0.0)
        x += spec.noise(i) *
             detail::normal_matrix(spec.J, spec.n(i), {seed, Domain::DataGen, detail::kStreamNoise, i});
      ds.views.emplace_back(spec.center ? center_rows(x) : x);
    }
    return ds;
  }

  // Sparse views keep each entry of Z A_i + nu N_i independently with
  // probability rho, so nnz is Binomial(J N_i, rho). Only kept entries are
  // evaluated.
  const DenseMat z = detail::normal_matrix(spec.J, spec.D, {seed, Domain::DataGen, detail::kStreamZ, 0});
  for (std::size_t i = 0; i < spec.I; ++i) {
    const std::size_t n = spec.n(i);
    const DenseMat a = detail::normal_matrix(spec.D, n, {seed, Domain::DataGen, detail::kStreamA, i});
    CounterRng mask{seed, Domain::DataGen, detail::kStreamMask, i};
    CounterRng noise{seed, Domain::DataGen, detail::kStreamNoise, i};
    const double nu = spec.noise(i);
    SparseMat x;
    x.rows = spec.J;
    x.cols = n;
    for (std::size_t j = 0; j < spec.J; ++j) {
      const auto r = static_cast<Eigen::Index>(j);
      for (std::size_t c = 0; c < n; ++c) {
        if (mask.next_uniform() >= spec.density) continue;
        double v = z.row(r).dot(a.col(static_cast<Eigen::Index>(c)));
        if (nu > 0.0) v += nu * noise.next_normal();
        if (v == 0.0) continue;
        x.col_idx.push_back(c);
        x.values.push_back(v);
      }
      x.row_ptr.push_back(x.values.size());
    }
    ds.views.emplace_back(std::move(x));
  }
  return ds;
}

inline Dataset gen_deep_toy(const DeepGenSpec& spec) {
  spec.validate();
  const std::size_t total = spec.J + spec.test;
  const auto seed = spec.seed;
  Dataset ds;
  std::vector<std::uint32_t> labels(total);
  CounterRng lrng{seed, Domain::DataGen, detail::kStreamLabels, 0};
  for (auto& y : labels) y = static_cast<std::uint32_t>(lrng.next_below(spec.clusters));

  for (std::size_t i = 0; i < spec.I; ++i) {
    CounterRng angle{seed, Domain::DataGen, detail::kStreamAngle, i};
    CounterRng noise{seed, Domain::DataGen, detail::kStreamToyNoise, i};
    CounterRng warp{seed, Domain::DataGen, detail::kStreamWarp, i};
    const double psi = 2.0 * std::numbers::pi * warp.next_uniform();
    const double gain[2] = {0.2 + 0.3 * warp.next_uniform(), 0.2 + 0.3 * warp.next_uniform()};
    DenseMat latent(static_cast<Eigen::Index>(total), 2);
    DenseMat x(static_cast<Eigen::Index>(total), 2);
    for (std::size_t j = 0; j < total; ++j) {
      const auto r = static_cast<Eigen::Index>(j);
      const double radius = static_cast<double>(labels[j]) + 1.0;
      const double phi = 2.0 * std::numbers::pi * angle.next_uniform();
      latent(r, 0) = radius * std::cos(phi);
      latent(r, 1) = radius * std::sin(phi);
      double p[2] = {latent(r, 0), latent(r, 1)};
      if (spec.warp) {
        const double u = std::cos(psi) * p[0] - std::sin(psi) * p[1];
        const double v = std::sin(psi) * p[0] + std::cos(psi) * p[1];
        p[0] = std::tanh(gain[0] * u) / gain[0];
        p[1] = std::tanh(gain[1] * v) / gain[1];
      }
      for (int d = 0; d < 2; ++d) {
        const double e = spec.sigma > 0.0 ? spec.sigma * noise.next_normal() : 0.0;
        x(r, d) = p[d] + e;
      }
    }
    ds.views.emplace_back(DenseMat(x.topRows(static_cast<Eigen::Index>(spec.J))));
    ds.latent.push_back(latent.topRows(static_cast<Eigen::Index>(spec.J)));
    if (spec.test > 0) ds.test_views.emplace_back(DenseMat(x.bottomRows(static_cast<Eigen::Index>(spec.test))));
  }
  ds.labels.assign(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(spec.J));
  ds.test_labels.assign(labels.begin() + static_cast<std::ptrdiff_t>(spec.J), labels.end());
  return ds;
}

}  // namespace cmv
