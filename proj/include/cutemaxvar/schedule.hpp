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

// Step-size schedules for the node (alpha_theta) and server (alpha_G) updates.
//
// The theory-driven schedules scale a base sequence by
//   tau * min(1/L, 1),  c = 4 T I L^2 (1 - delta) / delta^2,
// with two forms of tau:
//   linear:    (I/c) (sqrt(1 + c/I^2) - 1)
//   quadratic: (I/c) (sqrt(c^2/I^2 + 1) - 1)

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>

#include "cutemaxvar/error.hpp"

namespace cmv {

enum class ScheduleKind : std::uint8_t {
  Constant,      // value
  InvLipschitz,  // 1 / L (per node for alpha_theta)
  SqrtHorizon,   // tau min(1/L,1) / sqrt(R+1)
  RobbinsMonro,  // tau min(1/L,1) * a / (r + b)
};

enum class TauVariant : std::uint8_t { Linear, Quadratic };

struct Schedule {
  ScheduleKind kind = ScheduleKind::Constant;
  double value = 1.0;
  double a = 1.0;
  double b = 1.0;
  TauVariant tau = TauVariant::Linear;
  double delta = 0.5;  // compressor quality assumed by the theory schedules
};

struct ScheduleContext {
  std::size_t views = 1;       // I
  std::size_t inner_steps = 1; // T
  double lipschitz = 1.0;      // L
  std::size_t horizon = 0;     // R
};

inline double tau_factor(TauVariant variant, const ScheduleContext& ctx, double delta) {
  require(delta > 0.0 && delta <= 1.0, ErrorKind::InvalidConfig, "delta must lie in (0, 1]");
  const double I = static_cast<double>(ctx.views);
  const double L = ctx.lipschitz;
  const double c = 4.0 * static_cast<double>(ctx.inner_steps) * I * L * L * (1.0 - delta) /
                   (delta * delta);
  if (variant == TauVariant::Linear) {
    if (c == 0.0) return 1.0 / (2.0 * I);  // limit c -> 0
    return (I / c) * (std::sqrt(1.0 + c / (I * I)) - 1.0);
  }
  require(c > 0.0, ErrorKind::InvalidConfig,
          "quadratic tau vanishes for a lossless compressor (delta = 1)");
  return (I / c) * (std::sqrt(c * c / (I * I) + 1.0) - 1.0);
}

// Step size for outer round r (r >= 1). `lipschitz` in ctx is the constant the
// caller wants used: the node's own for InvLipschitz, the global L otherwise.
inline double step_size(const Schedule& s, std::size_t r, const ScheduleContext& ctx) {
  switch (s.kind) {
    case ScheduleKind::Constant:
      require(s.value > 0.0, ErrorKind::InvalidConfig, "constant step must be positive");
      return s.value;
    case ScheduleKind::InvLipschitz:
      require(ctx.lipschitz > 0.0, ErrorKind::InvalidConfig, "Lipschitz constant must be positive");
      return 1.0 / ctx.lipschitz;
    case ScheduleKind::SqrtHorizon: {
      const double scale = tau_factor(s.tau, ctx, s.delta) * std::min(1.0 / ctx.lipschitz, 1.0);
      return scale / std::sqrt(static_cast<double>(ctx.horizon) + 1.0);
    }
    case ScheduleKind::RobbinsMonro: {
      const double scale = tau_factor(s.tau, ctx, s.delta) * std::min(1.0 / ctx.lipschitz, 1.0);
      return scale * s.a / (static_cast<double>(r) + s.b);
    }
  }
  fail(ErrorKind::InvalidConfig, "unknown schedule");
}

inline const char* to_string(ScheduleKind k) {
  switch (k) {
    case ScheduleKind::Constant: return "constant";
    case ScheduleKind::InvLipschitz: return "inv_lipschitz";
    case ScheduleKind::SqrtHorizon: return "sqrt_horizon";
    case ScheduleKind::RobbinsMonro: return "robbins_monro";
  }
  return "?";
}

inline ScheduleKind parse_schedule_kind(const std::string& s) {
  if (s == "constant") return ScheduleKind::Constant;
  if (s == "inv_lipschitz") return ScheduleKind::InvLipschitz;
  if (s == "sqrt_horizon") return ScheduleKind::SqrtHorizon;
  if (s == "robbins_monro") return ScheduleKind::RobbinsMonro;
  fail(ErrorKind::ConfigError, "unknown schedule kind '" + s + "'");
}

}  // namespace cmv
