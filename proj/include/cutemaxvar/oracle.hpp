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

// Centralized reference solution and per-round diagnostics.
//
// For linear transforms the problem reduces to the top-K eigenspace of
// P = sum_i X_i X_i^+. The oracle stacks orthonormal range bases W = [U_1 ...]
// so that P = W W^T, then reads eigenpairs off the small Gram matrix W^T W.

#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "cutemaxvar/transform.hpp"

namespace cmv {

inline constexpr std::size_t kOracleMaxRows = 20000;

namespace detail {

// X^T X without densifying sparse views.
inline DenseMat gram_matrix(const View& x) {
  const auto n = static_cast<Eigen::Index>(cols(x));
  if (const auto* d = std::get_if<DenseMat>(&x)) return d->transpose() * *d;
  const auto& sp = std::get<SparseMat>(x);
  DenseMat gram = DenseMat::Zero(n, n);
  for (std::size_t r = 0; r < sp.rows; ++r) {
    for (std::size_t a = sp.row_ptr[r]; a < sp.row_ptr[r + 1]; ++a) {
      const auto ca = static_cast<Eigen::Index>(sp.col_idx[a]);
      for (std::size_t b = sp.row_ptr[r]; b < sp.row_ptr[r + 1]; ++b)
        gram(ca, static_cast<Eigen::Index>(sp.col_idx[b])) += sp.values[a] * sp.values[b];
    }
  }
  return gram;
}

// Orthonormal basis of range(X) via the Gram matrix X^T X. Used for sparse
// views, where a dense SVD of X is wasteful.
inline DenseMat gram_range_basis(const View& x) {
  const std::size_t n = cols(x);
  const DenseMat gram = gram_matrix(x);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es{Eigen::MatrixXd(gram)};
  const Vec& ev = es.eigenvalues();
  const double top = ev.size() > 0 ? ev(ev.size() - 1) : 0.0;
  const double tol = static_cast<double>(std::max(rows(x), n)) *
                     std::numeric_limits<double>::epsilon() * top;
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = ev.size(); i-- > 0;)
    if (ev(i) > tol && top > 0.0) keep.push_back(i);
  DenseMat v(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(keep.size()));
  for (std::size_t c = 0; c < keep.size(); ++c)
    v.col(static_cast<Eigen::Index>(c)) = es.eigenvectors().col(keep[c]) / std::sqrt(ev(keep[c]));
  return multiply(x, v);
}

inline DenseMat view_range_basis(const View& x) {
  if (const auto* d = std::get_if<DenseMat>(&x)) return range_basis(*d);
  return gram_range_basis(x);
}

}  // namespace detail

struct EigenOracle {
  std::size_t views = 0;
  std::size_t k = 0;
  Vec eigvals;   // length J, descending, zero padded
  DenseMat u1;   // J x K
  DenseMat basis;  // W, J x sum_i rank(X_i)
  double v_star = 0.0;

  std::size_t rows() const { return static_cast<std::size_t>(u1.rows()); }
  double gap() const {
    return k < static_cast<std::size_t>(eigvals.size())
               ? eigvals(static_cast<Eigen::Index>(k) - 1) - eigvals(static_cast<Eigen::Index>(k))
               : std::numeric_limits<double>::infinity();
  }
  DenseMat projector() const { return basis * basis.transpose(); }

  // Orthonormal basis of the complement eigenspace (J x (J - K)).
  DenseMat minor_basis() const {
    const DenseMat p = projector();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es{Eigen::MatrixXd(p)};
    const Eigen::Index J = p.rows();
    const Eigen::Index K = static_cast<Eigen::Index>(k);
    DenseMat out(J, J - K);
    for (Eigen::Index c = 0; c < J - K; ++c) out.col(c) = es.eigenvectors().col(J - K - 1 - c);
    return out;
  }
};

inline EigenOracle build_oracle(const std::vector<View>& views, std::size_t k) {
  require(!views.empty(), ErrorKind::InvalidInput, "oracle needs at least one view");
  const std::size_t J = rows(views[0]);
  for (const auto& v : views)
    require(rows(v) == J, ErrorKind::InvalidInput, "views disagree on the number of rows");
  require(J <= kOracleMaxRows, ErrorKind::OracleTooLarge, "too many rows for the oracle");
  require(k >= 1 && k <= J, ErrorKind::InvalidInput, "K must lie in [1, J]");

  std::vector<DenseMat> bases;
  Eigen::Index width = 0;
  for (const auto& v : views) {
    bases.push_back(detail::view_range_basis(v));
    width += bases.back().cols();
  }
  EigenOracle o;
  o.views = views.size();
  o.k = k;
  o.basis.resize(static_cast<Eigen::Index>(J), width);
  Eigen::Index at = 0;
  for (const auto& b : bases) {
    o.basis.middleCols(at, b.cols()) = b;
    at += b.cols();
  }

  o.eigvals = Vec::Zero(static_cast<Eigen::Index>(J));
  const auto K = static_cast<Eigen::Index>(k);
  if (width <= static_cast<Eigen::Index>(J)) {
    const DenseMat gram = o.basis.transpose() * o.basis;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es{Eigen::MatrixXd(gram)};
    const Eigen::Index m = gram.rows();
    for (Eigen::Index i = 0; i < m; ++i) o.eigvals(i) = std::max(0.0, es.eigenvalues()(m - 1 - i));
    require(m >= K && o.eigvals(K - 1) > 0.0, ErrorKind::InvalidInput,
            "views span fewer than K directions");
    o.u1.resize(static_cast<Eigen::Index>(J), K);
    for (Eigen::Index c = 0; c < K; ++c)
      o.u1.col(c) = o.basis * es.eigenvectors().col(m - 1 - c) / std::sqrt(o.eigvals(c));
    // One re-orthonormalization pass removes the rounding from the Gram route.
    Eigen::HouseholderQR<Eigen::MatrixXd> qr{Eigen::MatrixXd(o.u1)};
    DenseMat q = qr.householderQ() * Eigen::MatrixXd::Identity(o.u1.rows(), K);
    for (Eigen::Index c = 0; c < K; ++c)
      if (q.col(c).dot(o.u1.col(c)) < 0) q.col(c) *= -1.0;
    o.u1 = std::move(q);
  } else {
    const SymEig e = sym_eig_topk(o.projector(), J);
    for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(J); ++i)
      o.eigvals(i) = std::max(0.0, e.values(i));
    o.u1 = e.vectors.leftCols(K);
  }
  detail::fix_signs(o.u1, nullptr);
  o.v_star = 0.5 * (static_cast<double>(views.size() * k) - o.eigvals.head(K).sum());
  return o;
}

// ---------------------------------------------------------------------------
// Metrics

inline double objective_from_outputs(const std::vector<DenseMat>& outputs, const DenseMat& g) {
  double f = 0.0;
  for (const auto& m : outputs) f += 0.5 * (m - g).squaredNorm();
  return f;
}

inline double objective(const std::vector<View>& views,
                        const std::vector<TransformParams>& params, const DenseMat& g) {
  require(views.size() == params.size(), ErrorKind::InvalidInput, "views/params mismatch");
  double f = 0.0;
  for (std::size_t i = 0; i < views.size(); ++i)
    f += 0.5 * (forward(params[i], views[i]) - g).squaredNorm();
  return f;
}

inline bool is_orthonormal(const DenseMat& g, double tol = 1e-6) {
  const DenseMat gram = g.transpose() * g;
  return (gram - DenseMat::Identity(g.cols(), g.cols())).cwiseAbs().maxCoeff() <= tol;
}

// || G - U1 U1^T G ||_2, the sine of the largest principal angle.
inline double subspace_dist(const DenseMat& g, const DenseMat& u1) {
  require(g.rows() == u1.rows() && g.cols() == u1.cols(), ErrorKind::InvalidInput,
          "subspace_dist shape mismatch");
  require(is_orthonormal(g), ErrorKind::InvalidInput, "G is not orthonormal");
  const DenseMat r = g - u1 * (u1.transpose() * g);
  return std::min(1.0, spectral_norm(r));
}

// Stationarity residual at (theta, G) with the G block projected off the
// normal cone of the constraint set at G_next. Under the zero-mean constraint
// the all-ones direction is part of that cone.
inline double kkt_residual(const std::vector<View>& views,
                           const std::vector<TransformParams>& params, const DenseMat& g,
                           const DenseMat& g_next, bool zero_mean,
                           const std::vector<DenseMat>* outputs = nullptr) {
  require(views.size() == params.size(), ErrorKind::InvalidInput, "views/params mismatch");
  double sq = 0.0;
  DenseMat a = static_cast<double>(views.size()) * g;
  for (std::size_t i = 0; i < views.size(); ++i) {
    sq += squared_norm(grad(params[i], views[i], g));
    a -= outputs != nullptr ? (*outputs)[i] : forward(params[i], views[i]);
  }
  const Eigen::Index J = g_next.rows();
  DenseMat span = g_next;
  if (zero_mean) {
    span.conservativeResize(J, g_next.cols() + 1);
    span.col(g_next.cols()).setConstant(1.0 / std::sqrt(static_cast<double>(J)));
  }
  const DenseMat q = range_basis(span);
  a -= q * (q.transpose() * a);
  sq += a.squaredNorm();
  return std::sqrt(sq);
}

struct Compression {
  double cr = 0.0;   // 1 - q R_C / (q_full R_A)
  double bpv = 0.0;  // bits per variable after r rounds
};

inline Compression cr_bpv(unsigned q, unsigned q_full, std::size_t rounds_c,
                          std::size_t rounds_a, std::size_t r) {
  require(q >= 1 && q_full >= 1 && rounds_a >= 1, ErrorKind::InvalidInput,
          "compression stats need positive bit widths and baseline rounds");
  Compression c;
  c.cr = 1.0 - static_cast<double>(q) * static_cast<double>(rounds_c) /
                   (static_cast<double>(q_full) * static_cast<double>(rounds_a));
  c.bpv = static_cast<double>(q_full) + static_cast<double>(r) * static_cast<double>(q);
  return c;
}

// Fraction of rows whose nearest neighbour (Euclidean, ties to the lowest
// index) in another view's embedding is the same row, averaged over ordered
// view pairs.
inline double nn_freq(const std::vector<DenseMat>& emb) {
  require(emb.size() >= 2, ErrorKind::InvalidInput, "nn_freq needs at least two views");
  const Eigen::Index J = emb[0].rows();
  for (const auto& e : emb)
    require(e.rows() == J && e.cols() == emb[0].cols(), ErrorKind::InvalidInput,
            "embedding shapes differ");
  double hits = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < emb.size(); ++i) {
    for (std::size_t m = 0; m < emb.size(); ++m) {
      if (i == m) continue;
      ++pairs;
      const Vec norms = emb[m].rowwise().squaredNorm();
      for (Eigen::Index a = 0; a < J; ++a) {
        const Vec d = norms - 2.0 * (emb[m] * emb[i].row(a).transpose());
        Eigen::Index best = 0;
        d.minCoeff(&best);
        if (best == a) hits += 1.0;
      }
    }
  }
  return hits / (static_cast<double>(pairs) * static_cast<double>(J));
}

// Nearest class centroid, with centroids taken from the training embedding.
inline double centroid_accuracy(const DenseMat& train, const std::vector<std::uint32_t>& train_y,
                                const DenseMat& test, const std::vector<std::uint32_t>& test_y) {
  require(static_cast<std::size_t>(train.rows()) == train_y.size() &&
              static_cast<std::size_t>(test.rows()) == test_y.size() && !test_y.empty(),
          ErrorKind::InvalidInput, "label count mismatch");
  std::uint32_t classes = 0;
  for (auto y : train_y) classes = std::max(classes, y + 1);
  DenseMat cent = DenseMat::Zero(classes, train.cols());
  std::vector<double> count(classes, 0.0);
  for (Eigen::Index r = 0; r < train.rows(); ++r) {
    cent.row(train_y[static_cast<std::size_t>(r)]) += train.row(r);
    count[train_y[static_cast<std::size_t>(r)]] += 1.0;
  }
  for (std::uint32_t c = 0; c < classes; ++c)
    if (count[c] > 0) cent.row(c) /= count[c];
  std::size_t ok = 0;
  for (Eigen::Index r = 0; r < test.rows(); ++r) {
    Eigen::Index best = 0;
    double bd = std::numeric_limits<double>::infinity();
    for (std::uint32_t c = 0; c < classes; ++c) {
      if (count[c] == 0) continue;
      const double d = (test.row(r) - cent.row(c)).squaredNorm();
      if (d < bd) {
        bd = d;
        best = c;
      }
    }
    if (static_cast<std::uint32_t>(best) == test_y[static_cast<std::size_t>(r)]) ++ok;
  }
  return static_cast<double>(ok) / static_cast<double>(test.rows());
}

// Least-squares one-vs-rest probe with a bias column; argmax decision.
inline double linear_probe_accuracy(const DenseMat& train,
                                    const std::vector<std::uint32_t>& train_y,
                                    const DenseMat& test,
                                    const std::vector<std::uint32_t>& test_y) {
  require(static_cast<std::size_t>(train.rows()) == train_y.size() &&
              static_cast<std::size_t>(test.rows()) == test_y.size() && !test_y.empty(),
          ErrorKind::InvalidInput, "label count mismatch");
  std::uint32_t classes = 0;
  for (auto y : train_y) classes = std::max(classes, y + 1);
  auto with_bias = [](const DenseMat& x) {
    DenseMat out(x.rows(), x.cols() + 1);
    out.leftCols(x.cols()) = x;
    out.col(x.cols()).setOnes();
    return out;
  };
  DenseMat target = DenseMat::Zero(train.rows(), classes);
  for (Eigen::Index r = 0; r < train.rows(); ++r) target(r, train_y[static_cast<std::size_t>(r)]) = 1.0;
  const DenseMat w = lstsq(with_bias(train), target);
  const DenseMat scores = with_bias(test) * w;
  std::size_t ok = 0;
  for (Eigen::Index r = 0; r < scores.rows(); ++r) {
    Eigen::Index best = 0;
    scores.row(r).maxCoeff(&best);
    if (static_cast<std::uint32_t>(best) == test_y[static_cast<std::size_t>(r)]) ++ok;
  }
  return static_cast<double>(ok) / static_cast<double>(scores.rows());
}

}  // namespace cmv
