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

// View-specific operators Q(X; theta): a linear map Z = X Q, or a fully
// connected network with hidden activations and a linear output layer.
// Gradients are of (1/2)||Q(X; theta) - G||_F^2 (a sum over rows, not a mean).

#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "cutemaxvar/error.hpp"
#include "cutemaxvar/matcore.hpp"
#include "cutemaxvar/matrix_io.hpp"
#include "cutemaxvar/rng.hpp"

namespace cmv {

struct LinearParams {
  DenseMat Q;  // N x K
};

enum class Activation : std::uint8_t { ReLU, Sigmoid };

struct Layer {
  DenseMat W;  // out x in
  Vec b;       // out
};

struct MlpParams {
  std::vector<Layer> layers;
  Activation activation = Activation::ReLU;
};

using TransformParams = std::variant<LinearParams, MlpParams>;

inline bool is_linear(const TransformParams& p) {
  return std::holds_alternative<LinearParams>(p);
}

inline std::size_t input_dim(const TransformParams& p) {
  if (const auto* l = std::get_if<LinearParams>(&p)) return static_cast<std::size_t>(l->Q.rows());
  return static_cast<std::size_t>(std::get<MlpParams>(p).layers.front().W.cols());
}

inline std::size_t output_dim(const TransformParams& p) {
  if (const auto* l = std::get_if<LinearParams>(&p)) return static_cast<std::size_t>(l->Q.cols());
  return static_cast<std::size_t>(std::get<MlpParams>(p).layers.back().W.rows());
}

// Calls f(dst, src, n) for every parameter tensor of `a`, paired with the
// matching tensor of `b`. Throws when the two are not shaped alike.
template <class A, class B, class F>
void zip_tensors(A& a, B& b, F&& f) {
  if (a.index() != b.index()) fail(ErrorKind::InvalidInput, "parameter kinds differ");
  if (auto* la = std::get_if<LinearParams>(&a)) {
    auto& lb = std::get<LinearParams>(b);
    require(la->Q.rows() == lb.Q.rows() && la->Q.cols() == lb.Q.cols(),
            ErrorKind::InvalidInput, "parameter shapes differ");
    f(la->Q.data(), lb.Q.data(), static_cast<std::size_t>(la->Q.size()));
    return;
  }
  auto& ma = std::get<MlpParams>(a);
  auto& mb = std::get<MlpParams>(b);
  require(ma.layers.size() == mb.layers.size(), ErrorKind::InvalidInput,
          "layer counts differ");
  for (std::size_t l = 0; l < ma.layers.size(); ++l) {
    auto& x = ma.layers[l];
    auto& y = mb.layers[l];
    require(x.W.rows() == y.W.rows() && x.W.cols() == y.W.cols() && x.b.size() == y.b.size(),
            ErrorKind::InvalidInput, "layer shapes differ");
    f(x.W.data(), y.W.data(), static_cast<std::size_t>(x.W.size()));
    f(x.b.data(), y.b.data(), static_cast<std::size_t>(x.b.size()));
  }
}

inline TransformParams zeros_like(const TransformParams& p) {
  if (const auto* l = std::get_if<LinearParams>(&p)) {
    return LinearParams{DenseMat::Zero(l->Q.rows(), l->Q.cols())};
  }
  const auto& m = std::get<MlpParams>(p);
  MlpParams z;
  z.activation = m.activation;
  for (const auto& layer : m.layers) {
    z.layers.push_back({DenseMat::Zero(layer.W.rows(), layer.W.cols()),
                        Vec::Zero(layer.b.size())});
  }
  return z;
}

inline double squared_norm(const TransformParams& p) {
  double acc = 0.0;
  TransformParams copy = p;
  zip_tensors(copy, p, [&](double* x, const double*, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) acc += x[i] * x[i];
  });
  return acc;
}

inline bool all_finite(const TransformParams& p) {
  if (const auto* l = std::get_if<LinearParams>(&p)) return l->Q.allFinite();
  for (const auto& layer : std::get<MlpParams>(p).layers) {
    if (!layer.W.allFinite() || !layer.b.allFinite()) return false;
  }
  return true;
}

// Q init: i.i.d. N(0, 1/N).
inline LinearParams init_linear(std::size_t n, std::size_t k, CounterRng& rng) {
  LinearParams p{DenseMat(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(k))};
  const double scale = 1.0 / std::sqrt(static_cast<double>(n));
  for (Eigen::Index i = 0; i < p.Q.size(); ++i) p.Q.data()[i] = scale * rng.next_normal();
  return p;
}

// dims = {in, hidden..., out}; weights uniform in +-sqrt(6/(in+out)), zero bias.
inline MlpParams init_mlp(const std::vector<std::size_t>& dims, Activation act,
                          CounterRng& rng) {
  require(dims.size() >= 2, ErrorKind::InvalidConfig, "an MLP needs at least in/out dims");
  MlpParams p;
  p.activation = act;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const auto in = static_cast<Eigen::Index>(dims[l]);
    const auto out = static_cast<Eigen::Index>(dims[l + 1]);
    require(in > 0 && out > 0, ErrorKind::InvalidConfig, "layer dims must be positive");
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    Layer layer{DenseMat(out, in), Vec::Zero(out)};
    for (Eigen::Index i = 0; i < layer.W.size(); ++i) {
      layer.W.data()[i] = limit * (2.0 * rng.next_uniform() - 1.0);
    }
    p.layers.push_back(std::move(layer));
  }
  return p;
}

namespace detail {

inline void activate(DenseMat& z, Activation act) {
  if (act == Activation::ReLU) {
    z = z.cwiseMax(0.0);
  } else {
    z = (1.0 + (-z.array()).exp()).inverse().matrix();
  }
}

// Derivative of the activation expressed through its output a = act(z).
inline DenseMat activation_slope(const DenseMat& a, Activation act) {
  if (act == Activation::ReLU) return (a.array() > 0.0).cast<double>().matrix();
  return (a.array() * (1.0 - a.array())).matrix();
}

inline void check_input(const TransformParams& p, const View& x) {
  require(cols(x) == input_dim(p), ErrorKind::InvalidInput,
          "input has " + std::to_string(cols(x)) + " columns, transform expects " +
              std::to_string(input_dim(p)));
}

// Layer outputs a_0 = X, a_1, ..., a_L for an MLP.
inline std::vector<DenseMat> mlp_activations(const MlpParams& m, const View& x) {
  std::vector<DenseMat> acts;
  acts.reserve(m.layers.size() + 1);
  acts.push_back(to_dense(x));
  for (std::size_t l = 0; l < m.layers.size(); ++l) {
    const auto& layer = m.layers[l];
    DenseMat z = acts.back() * layer.W.transpose();
    z.rowwise() += layer.b.transpose();
    if (l + 1 < m.layers.size()) activate(z, m.activation);
    acts.push_back(std::move(z));
  }
  return acts;
}

}  // namespace detail

inline DenseMat forward(const TransformParams& p, const View& x) {
  detail::check_input(p, x);
  if (const auto* l = std::get_if<LinearParams>(&p)) return multiply(x, l->Q);
  auto acts = detail::mlp_activations(std::get<MlpParams>(p), x);
  return std::move(acts.back());
}

// Gradient of (1/2)||forward(p, x) - target||_F^2 w.r.t. every parameter.
inline TransformParams grad(const TransformParams& p, const View& x, const DenseMat& target) {
  detail::check_input(p, x);
  require(target.rows() == static_cast<Eigen::Index>(rows(x)) &&
              target.cols() == static_cast<Eigen::Index>(output_dim(p)),
          ErrorKind::InvalidInput, "target shape does not match transform output");
  if (const auto* l = std::get_if<LinearParams>(&p)) {
    const DenseMat residual = multiply(x, l->Q) - target;
    return LinearParams{transpose_multiply(x, residual)};
  }
  const auto& m = std::get<MlpParams>(p);
  const auto acts = detail::mlp_activations(m, x);
  MlpParams g;
  g.activation = m.activation;
  g.layers.resize(m.layers.size());
  DenseMat delta = acts.back() - target;
  for (std::size_t l = m.layers.size(); l-- > 0;) {
    g.layers[l].W = delta.transpose() * acts[l];
    g.layers[l].b = delta.colwise().sum().transpose();
    if (l > 0) {
      DenseMat back = delta * m.layers[l].W;
      delta = back.cwiseProduct(detail::activation_slope(acts[l], m.activation));
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// Optimizers

enum class OptimizerKind : std::uint8_t { Sgd, Adam };

struct OptimizerState {
  OptimizerKind kind = OptimizerKind::Sgd;
  double alpha = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  TransformParams m;
  TransformParams v;
  std::uint64_t t = 0;
};

inline OptimizerState make_optimizer(OptimizerKind kind, double alpha,
                                     const TransformParams& like) {
  require(alpha > 0.0, ErrorKind::InvalidConfig, "step size must be positive");
  OptimizerState s;
  s.kind = kind;
  s.alpha = alpha;
  if (kind == OptimizerKind::Adam) {
    s.m = zeros_like(like);
    s.v = zeros_like(like);
  }
  return s;
}

inline void step(TransformParams& params, OptimizerState& opt, const TransformParams& g) {
  ++opt.t;
  if (opt.kind == OptimizerKind::Sgd) {
    zip_tensors(params, g, [&](double* x, const double* d, std::size_t n) {
      for (std::size_t i = 0; i < n; ++i) x[i] -= opt.alpha * d[i];
    });
    return;
  }
  const double b1 = opt.beta1;
  const double b2 = opt.beta2;
  zip_tensors(opt.m, g, [&](double* m, const double* d, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) m[i] = b1 * m[i] + (1.0 - b1) * d[i];
  });
  zip_tensors(opt.v, g, [&](double* v, const double* d, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) v[i] = b2 * v[i] + (1.0 - b2) * d[i] * d[i];
  });
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(opt.t));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(opt.t));
  // params -= alpha * mhat / (sqrt(vhat) + eps), walking m and v in lockstep.
  TransformParams update = opt.m;
  zip_tensors(update, opt.v, [&](double* u, const double* v, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
      u[i] = opt.alpha * (u[i] / c1) / (std::sqrt(v[i] / c2) + opt.eps);
    }
  });
  zip_tensors(params, update, [](double* x, const double* u, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) x[i] -= u[i];
  });
}

// ---------------------------------------------------------------------------
// Checkpoints: magic "CMVP" | u8 arch (0 linear, 1 MLP+ReLU, 2 MLP+sigmoid) |
// u64 layer count | (layers+1) u64 dims | f64 payload. Linear payload is Q
// row-major (N x K); MLP payload is W (out x in, row-major) then b per layer.

inline constexpr char kParamsMagic[4] = {'C', 'M', 'V', 'P'};

inline std::vector<std::uint8_t> encode_params(const TransformParams& p) {
  std::vector<std::uint8_t> out(std::begin(kParamsMagic), std::end(kParamsMagic));
  if (const auto* l = std::get_if<LinearParams>(&p)) {
    bytes::put_u8(out, 0);
    bytes::put_u64(out, 1);
    bytes::put_u64(out, static_cast<std::uint64_t>(l->Q.rows()));
    bytes::put_u64(out, static_cast<std::uint64_t>(l->Q.cols()));
    for (Eigen::Index i = 0; i < l->Q.size(); ++i) bytes::put_f64(out, l->Q.data()[i]);
    return out;
  }
  const auto& m = std::get<MlpParams>(p);
  bytes::put_u8(out, m.activation == Activation::ReLU ? 1 : 2);
  bytes::put_u64(out, m.layers.size());
  bytes::put_u64(out, static_cast<std::uint64_t>(m.layers.front().W.cols()));
  for (const auto& layer : m.layers) bytes::put_u64(out, static_cast<std::uint64_t>(layer.W.rows()));
  for (const auto& layer : m.layers) {
    for (Eigen::Index i = 0; i < layer.W.size(); ++i) bytes::put_f64(out, layer.W.data()[i]);
    for (Eigen::Index i = 0; i < layer.b.size(); ++i) bytes::put_f64(out, layer.b(i));
  }
  return out;
}

inline TransformParams decode_params(std::span<const std::uint8_t> data) {
  bytes::Reader rd(data, ErrorKind::IOError);
  auto magic = rd.take(4);
  require(std::memcmp(magic.data(), kParamsMagic, 4) == 0, ErrorKind::IOError,
          "bad checkpoint magic");
  const auto arch = rd.u8();
  const auto count = rd.u64();
  require(count >= 1 && count < 1024, ErrorKind::IOError, "bad layer count");
  std::vector<std::uint64_t> dims(count + 1);
  for (auto& d : dims) d = rd.u64();
  // Check the declared payload against the bytes present before allocating.
  std::uint64_t doubles = 0;
  for (std::uint64_t l = 0; l < count; ++l) {
    require(dims[l] <= rd.remaining() && dims[l + 1] <= rd.remaining(), ErrorKind::IOError,
            "checkpoint dimensions exceed payload");
    doubles += dims[l] * dims[l + 1] + (arch == 0 ? 0 : dims[l + 1]);
  }
  require(doubles == rd.remaining() / 8 && rd.remaining() % 8 == 0, ErrorKind::IOError,
          "checkpoint payload length mismatch");
  if (arch == 0) {
    require(count == 1, ErrorKind::IOError, "linear checkpoint must have one layer");
    LinearParams l{DenseMat(static_cast<Eigen::Index>(dims[0]), static_cast<Eigen::Index>(dims[1]))};
    for (Eigen::Index i = 0; i < l.Q.size(); ++i) l.Q.data()[i] = rd.f64();
    require(rd.remaining() == 0, ErrorKind::IOError, "trailing checkpoint bytes");
    return l;
  }
  require(arch == 1 || arch == 2, ErrorKind::IOError, "unknown checkpoint arch");
  MlpParams m;
  m.activation = arch == 1 ? Activation::ReLU : Activation::Sigmoid;
  for (std::uint64_t l = 0; l < count; ++l) {
    Layer layer{DenseMat(static_cast<Eigen::Index>(dims[l + 1]), static_cast<Eigen::Index>(dims[l])),
                Vec(static_cast<Eigen::Index>(dims[l + 1]))};
    for (Eigen::Index i = 0; i < layer.W.size(); ++i) layer.W.data()[i] = rd.f64();
    for (Eigen::Index i = 0; i < layer.b.size(); ++i) layer.b(i) = rd.f64();
    m.layers.push_back(std::move(layer));
  }
  require(rd.remaining() == 0, ErrorKind::IOError, "trailing checkpoint bytes");
  return m;
}

}  // namespace cmv
