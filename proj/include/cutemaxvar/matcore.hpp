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

// Dense and CSR matrix kernels plus the handful of factorizations every other
// module leans on: thin SVD, top-k symmetric eigenpairs, ridge/min-norm
// least squares and row centering. Dense matrices are row-major Eigen
// matrices; the factorizations are Eigen's, wrapped to enforce input checks
// and a deterministic sign convention.

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include "cutemaxvar/error.hpp"

namespace cmv {

using DenseMat =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;

inline bool all_finite(const DenseMat& a) { return a.allFinite(); }

inline void require_finite(const DenseMat& a, const char* what) {
  require(all_finite(a), ErrorKind::InvalidInput,
          std::string(what) + " contains non-finite entries");
}

// Compressed sparse row matrix with 64-bit indices.
struct SparseMat {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint64_t> row_ptr{0};
  std::vector<std::uint64_t> col_idx;
  std::vector<double> values;

  std::size_t nnz() const { return values.size(); }

  double density() const {
    const double cells = static_cast<double>(rows) * static_cast<double>(cols);
    return cells > 0 ? static_cast<double>(nnz()) / cells : 0.0;
  }

  // Throws InvalidInput when the CSR structure is inconsistent.
  void validate() const {
    require(row_ptr.size() == rows + 1, ErrorKind::InvalidInput,
            "CSR row pointer length must be rows+1");
    require(row_ptr.front() == 0 && row_ptr.back() == values.size(),
            ErrorKind::InvalidInput, "CSR row pointers do not span values");
    require(col_idx.size() == values.size(), ErrorKind::InvalidInput,
            "CSR column index and value arrays differ in length");
    for (std::size_t r = 0; r < rows; ++r) {
      require(row_ptr[r] <= row_ptr[r + 1], ErrorKind::InvalidInput,
              "CSR row pointers must be nondecreasing");
    }
    for (std::size_t k = 0; k < values.size(); ++k) {
      require(col_idx[k] < cols, ErrorKind::InvalidInput,
              "CSR column index out of range");
      require(std::isfinite(values[k]), ErrorKind::InvalidInput,
              "CSR value is not finite");
    }
  }

  static SparseMat from_dense(const DenseMat& a) {
    SparseMat s;
    s.rows = static_cast<std::size_t>(a.rows());
    s.cols = static_cast<std::size_t>(a.cols());
    s.row_ptr.assign(1, 0);
    for (Eigen::Index r = 0; r < a.rows(); ++r) {
      for (Eigen::Index c = 0; c < a.cols(); ++c) {
        if (a(r, c) != 0.0) {
          s.col_idx.push_back(static_cast<std::uint64_t>(c));
          s.values.push_back(a(r, c));
        }
      }
      s.row_ptr.push_back(s.values.size());
    }
    return s;
  }

  DenseMat to_dense() const {
    DenseMat d = DenseMat::Zero(static_cast<Eigen::Index>(rows),
                                static_cast<Eigen::Index>(cols));
    for (std::size_t r = 0; r < rows; ++r) {
      for (auto k = row_ptr[r]; k < row_ptr[r + 1]; ++k) {
        d(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(col_idx[k])) +=
            values[k];
      }
    }
    return d;
  }
};

// this * b
inline DenseMat multiply(const SparseMat& a, const DenseMat& b) {
  require(static_cast<Eigen::Index>(a.cols) == b.rows(), ErrorKind::InvalidInput,
          "sparse*dense dimension mismatch");
  DenseMat out = DenseMat::Zero(static_cast<Eigen::Index>(a.rows), b.cols());
  for (std::size_t r = 0; r < a.rows; ++r) {
    auto row = out.row(static_cast<Eigen::Index>(r));
    for (auto k = a.row_ptr[r]; k < a.row_ptr[r + 1]; ++k) {
      row.noalias() += a.values[k] * b.row(static_cast<Eigen::Index>(a.col_idx[k]));
    }
  }
  return out;
}

// a^T * b
inline DenseMat transpose_multiply(const SparseMat& a, const DenseMat& b) {
  require(static_cast<Eigen::Index>(a.rows) == b.rows(), ErrorKind::InvalidInput,
          "sparse^T*dense dimension mismatch");
  DenseMat out = DenseMat::Zero(static_cast<Eigen::Index>(a.cols), b.cols());
  for (std::size_t r = 0; r < a.rows; ++r) {
    const auto brow = b.row(static_cast<Eigen::Index>(r));
    for (auto k = a.row_ptr[r]; k < a.row_ptr[r + 1]; ++k) {
      out.row(static_cast<Eigen::Index>(a.col_idx[k])).noalias() +=
          a.values[k] * brow;
    }
  }
  return out;
}

inline SparseMat gather_rows(const SparseMat& a, std::span<const std::size_t> idx) {
  SparseMat s;
  s.rows = idx.size();
  s.cols = a.cols;
  s.row_ptr.assign(1, 0);
  for (std::size_t r : idx) {
    require(r < a.rows, ErrorKind::InvalidInput, "row index out of range");
    for (auto k = a.row_ptr[r]; k < a.row_ptr[r + 1]; ++k) {
      s.col_idx.push_back(a.col_idx[k]);
      s.values.push_back(a.values[k]);
    }
    s.row_ptr.push_back(s.values.size());
  }
  return s;
}

inline DenseMat gather_rows(const DenseMat& a, std::span<const std::size_t> idx) {
  DenseMat out(static_cast<Eigen::Index>(idx.size()), a.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    require(idx[i] < static_cast<std::size_t>(a.rows()), ErrorKind::InvalidInput,
            "row index out of range");
    out.row(static_cast<Eigen::Index>(i)) = a.row(static_cast<Eigen::Index>(idx[i]));
  }
  return out;
}

// A view (one modality's J x N_i feature matrix) is either dense or CSR.
using View = std::variant<DenseMat, SparseMat>;

inline std::size_t rows(const View& v) {
  return std::visit(
      [](const auto& m) -> std::size_t {
        if constexpr (std::is_same_v<std::decay_t<decltype(m)>, DenseMat>) {
          return static_cast<std::size_t>(m.rows());
        } else {
          return m.rows;
        }
      },
      v);
}

inline std::size_t cols(const View& v) {
  return std::visit(
      [](const auto& m) -> std::size_t {
        if constexpr (std::is_same_v<std::decay_t<decltype(m)>, DenseMat>) {
          return static_cast<std::size_t>(m.cols());
        } else {
          return m.cols;
        }
      },
      v);
}

inline bool is_sparse(const View& v) { return std::holds_alternative<SparseMat>(v); }

inline DenseMat to_dense(const View& v) {
  if (const auto* d = std::get_if<DenseMat>(&v)) return *d;
  return std::get<SparseMat>(v).to_dense();
}

inline DenseMat multiply(const View& a, const DenseMat& b) {
  if (const auto* d = std::get_if<DenseMat>(&a)) {
    require(d->cols() == b.rows(), ErrorKind::InvalidInput,
            "dense*dense dimension mismatch");
    return *d * b;
  }
  return multiply(std::get<SparseMat>(a), b);
}

inline DenseMat transpose_multiply(const View& a, const DenseMat& b) {
  if (const auto* d = std::get_if<DenseMat>(&a)) {
    require(d->rows() == b.rows(), ErrorKind::InvalidInput,
            "dense^T*dense dimension mismatch");
    return d->transpose() * b;
  }
  return transpose_multiply(std::get<SparseMat>(a), b);
}

inline View gather_rows(const View& a, std::span<const std::size_t> idx) {
  return std::visit([&](const auto& m) -> View { return gather_rows(m, idx); }, a);
}

// ---------------------------------------------------------------------------
// Factorizations

struct ThinSvd {
  DenseMat U;  // J x m
  Vec S;       // m, descending
  DenseMat V;  // K x m
};

namespace detail {

// Flips column k of `a` (and of `b`, when given) so that the first entry of
// a(:,k) whose magnitude exceeds a small relative threshold is positive.
inline void fix_signs(DenseMat& a, DenseMat* b) {
  for (Eigen::Index k = 0; k < a.cols(); ++k) {
    const double scale = a.col(k).cwiseAbs().maxCoeff();
    if (scale == 0.0) continue;
    const double tol = 1e-10 * scale;
    for (Eigen::Index j = 0; j < a.rows(); ++j) {
      if (std::abs(a(j, k)) > tol) {
        if (a(j, k) < 0) {
          a.col(k) *= -1.0;
          if (b != nullptr) b->col(k) *= -1.0;
        }
        break;
      }
    }
  }
}

}  // namespace detail

inline ThinSvd thin_svd(const DenseMat& a) {
  require(a.rows() >= 1 && a.cols() >= 1, ErrorKind::InvalidInput,
          "thin_svd needs a non-empty matrix");
  require_finite(a, "thin_svd input");
  Eigen::JacobiSVD<DenseMat, Eigen::ColPivHouseholderQRPreconditioner> svd(
      a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  ThinSvd out{svd.matrixU(), svd.singularValues(), svd.matrixV()};
  detail::fix_signs(out.U, &out.V);
  return out;
}

inline double spectral_norm(const DenseMat& a) {
  if (a.size() == 0) return 0.0;
  Eigen::JacobiSVD<DenseMat, Eigen::ColPivHouseholderQRPreconditioner> svd(a);
  return svd.singularValues()(0);
}

struct SymEig {
  Vec values;        // k, descending
  DenseMat vectors;  // J x k
};

inline bool is_symmetric(const DenseMat& a, double tol = 1e-10) {
  if (a.rows() != a.cols()) return false;
  const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
  return (a - a.transpose()).cwiseAbs().maxCoeff() <= tol * scale;
}

inline SymEig sym_eig_topk(const DenseMat& a, std::size_t k) {
  require(a.rows() == a.cols() && a.rows() >= 1, ErrorKind::InvalidInput,
          "sym_eig_topk needs a square matrix");
  require_finite(a, "sym_eig_topk input");
  require(is_symmetric(a), ErrorKind::InvalidInput, "matrix is not symmetric");
  const auto n = static_cast<std::size_t>(a.rows());
  require(k >= 1 && k <= n, ErrorKind::InvalidInput, "k must be in [1, J]");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es{Eigen::MatrixXd(a)};
  SymEig out;
  out.values.resize(static_cast<Eigen::Index>(k));
  out.vectors.resize(a.rows(), static_cast<Eigen::Index>(k));
  for (std::size_t i = 0; i < k; ++i) {
    const auto src = static_cast<Eigen::Index>(n - 1 - i);
    out.values(static_cast<Eigen::Index>(i)) = es.eigenvalues()(src);
    out.vectors.col(static_cast<Eigen::Index>(i)) = es.eigenvectors().col(src);
  }
  detail::fix_signs(out.vectors, nullptr);
  return out;
}

// argmin_Q ||A Q - B||_F^2 + ridge ||Q||_F^2. With ridge == 0 a rank-deficient
// A yields the minimum-norm solution.
inline DenseMat lstsq(const DenseMat& a, const DenseMat& b, double ridge = 0.0) {
  require(a.rows() == b.rows(), ErrorKind::InvalidInput, "lstsq row mismatch");
  require(ridge >= 0.0, ErrorKind::InvalidInput, "ridge must be nonnegative");
  require_finite(a, "lstsq design");
  require_finite(b, "lstsq target");
  const ThinSvd svd = thin_svd(a);
  const double tol = static_cast<double>(std::max(a.rows(), a.cols())) *
                     std::numeric_limits<double>::epsilon() *
                     (svd.S.size() > 0 ? svd.S(0) : 0.0);
  Vec gain(svd.S.size());
  for (Eigen::Index i = 0; i < svd.S.size(); ++i) {
    const double s = svd.S(i);
    if (ridge > 0.0) {
      gain(i) = s / (s * s + ridge);
    } else {
      gain(i) = s > tol ? 1.0 / s : 0.0;
    }
  }
  DenseMat utb = svd.U.transpose() * b;
  return svd.V * (gain.asDiagonal() * utb);
}

// Moore-Penrose pseudo-inverse, same rank cutoff as lstsq.
inline DenseMat pinv(const DenseMat& a) {
  require_finite(a, "pinv input");
  const ThinSvd svd = thin_svd(a);
  const double tol = static_cast<double>(std::max(a.rows(), a.cols())) *
                     std::numeric_limits<double>::epsilon() *
                     (svd.S.size() > 0 ? svd.S(0) : 0.0);
  Vec gain(svd.S.size());
  for (Eigen::Index i = 0; i < svd.S.size(); ++i) gain(i) = svd.S(i) > tol ? 1.0 / svd.S(i) : 0.0;
  return svd.V * gain.asDiagonal() * svd.U.transpose();
}

// A - 1 * mean_row; i.e. (I - 11^T/J) A.
inline DenseMat center_rows(const DenseMat& a) {
  require(a.rows() >= 1, ErrorKind::InvalidInput, "center_rows needs J >= 1");
  const Eigen::RowVectorXd mean = a.colwise().mean();
  DenseMat out = a;
  out.rowwise() -= mean;
  return out;
}

// Orthonormal basis of range(a) via thin SVD, truncated at numerical rank.
inline DenseMat range_basis(const DenseMat& a) {
  const ThinSvd svd = thin_svd(a);
  const double tol = static_cast<double>(std::max(a.rows(), a.cols())) *
                     std::numeric_limits<double>::epsilon() *
                     (svd.S.size() > 0 ? svd.S(0) : 0.0);
  Eigen::Index rank = 0;
  while (rank < svd.S.size() && svd.S(rank) > tol) ++rank;
  return svd.U.leftCols(rank);
}

}  // namespace cmv
