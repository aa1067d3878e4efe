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

// RunConfig <-> JSON. Every RunConfig field has exactly one key; unknown keys
// are rejected so typos do not silently fall back to defaults.

#pragma once

#include <string>

#include <json.hpp>

#include "cutemaxvar/protocol.hpp"

namespace cmv {

using Json = nlohmann::json;

namespace detail {

template <class E>
struct EnumName {
  E value;
  const char* name;
};

template <class E, std::size_t N>
E parse_enum(const std::string& s, const EnumName<E> (&table)[N], const char* what) {
  for (const auto& e : table)
    if (s == e.name) return e.value;
  fail(ErrorKind::ConfigError, std::string("unknown ") + what + " '" + s + "'");
}

template <class E, std::size_t N>
const char* enum_name(E v, const EnumName<E> (&table)[N]) {
  for (const auto& e : table)
    if (v == e.value) return e.name;
  return "?";
}

inline constexpr EnumName<QuantMode> kQuantModes[] = {{QuantMode::Unscaled, "unscaled"},
                                                      {QuantMode::Scaled, "scaled"}};
inline constexpr EnumName<OptimizerKind> kOptimizers[] = {{OptimizerKind::Sgd, "sgd"},
                                                          {OptimizerKind::Adam, "adam"}};
inline constexpr EnumName<InitKind> kInits[] = {{InitKind::Random, "random"},
                                                {InitKind::Mvlsa, "mvlsa"}};
inline constexpr EnumName<StopKind> kStops[] = {{StopKind::Rounds, "rounds"},
                                                {StopKind::ObjectiveFactor, "objective_factor"},
                                                {StopKind::RelChange, "rel_change"}};
inline constexpr EnumName<Arch> kArchs[] = {{Arch::Linear, "linear"}, {Arch::Mlp, "mlp"}};
inline constexpr EnumName<Activation> kActivations[] = {{Activation::ReLU, "relu"},
                                                        {Activation::Sigmoid, "sigmoid"}};
inline constexpr EnumName<OracleUse> kOracleUses[] = {
    {OracleUse::Auto, "auto"}, {OracleUse::On, "on"}, {OracleUse::Off, "off"}};
inline constexpr EnumName<ScheduleKind> kSchedules[] = {
    {ScheduleKind::Constant, "constant"},
    {ScheduleKind::InvLipschitz, "inv_lipschitz"},
    {ScheduleKind::SqrtHorizon, "sqrt_horizon"},
    {ScheduleKind::RobbinsMonro, "robbins_monro"}};
inline constexpr EnumName<TauVariant> kTaus[] = {{TauVariant::Linear, "linear"},
                                                 {TauVariant::Quadratic, "quadratic"}};

template <class T>
T get_as(const Json& j, const char* key) {
  try {
    return j.get<T>();
  } catch (const Json::exception&) {
    fail(ErrorKind::ConfigError, std::string("bad value for '") + key + "'");
  }
}

inline Json schedule_to_json(const Schedule& s) {
  return {{"kind", enum_name(s.kind, kSchedules)},
          {"value", s.value},
          {"a", s.a},
          {"b", s.b},
          {"tau", enum_name(s.tau, kTaus)},
          {"delta", s.delta}};
}

inline Schedule schedule_from_json(const Json& j, Schedule s) {
  require(j.is_object(), ErrorKind::ConfigError, "schedule must be an object");
  for (const auto& [key, v] : j.items()) {
    if (key == "kind") s.kind = parse_enum(get_as<std::string>(v, "kind"), kSchedules, "schedule");
    else if (key == "value") s.value = get_as<double>(v, "value");
    else if (key == "a") s.a = get_as<double>(v, "a");
    else if (key == "b") s.b = get_as<double>(v, "b");
    else if (key == "tau") s.tau = parse_enum(get_as<std::string>(v, "tau"), kTaus, "tau variant");
    else if (key == "delta") s.delta = get_as<double>(v, "delta");
    else fail(ErrorKind::ConfigError, "unknown schedule key '" + key + "'");
  }
  return s;
}

}  // namespace detail

inline Json to_json(const RunConfig& c) {
  using namespace detail;
  Json j;
  j["k"] = c.k;
  j["q"] = c.identity ? Json("identity") : Json(c.q);
  j["quant_mode"] = enum_name(c.quant_mode, kQuantModes);
  j["T"] = c.inner_steps;
  j["batch"] = c.batch;
  j["optimizer"] = enum_name(c.optimizer, kOptimizers);
  j["exact"] = c.exact;
  j["step_theta"] = schedule_to_json(c.step_theta);
  j["step_g"] = schedule_to_json(c.step_g);
  j["zero_mean"] = c.zero_mean ? Json(*c.zero_mean) : Json(nullptr);
  j["prox"] = c.prox;
  j["init"] = enum_name(c.init, kInits);
  j["ktilde"] = c.ktilde;
  j["max_rounds"] = c.max_rounds;
  j["stop"] = enum_name(c.stop, kStops);
  j["stop_value"] = c.stop_value;
  j["seed"] = c.seed;
  j["arch"] = enum_name(c.arch, kArchs);
  j["hidden"] = c.hidden;
  j["activation"] = enum_name(c.activation, kActivations);
  j["lipschitz"] = c.lipschitz;
  j["oracle"] = enum_name(c.oracle, kOracleUses);
  j["threads"] = c.threads;
  j["timing"] = c.timing;
  j["check_replicas"] = c.check_replicas;
  j["track_potential"] = c.track_potential;
  return j;
}

// Applies the keys present in `j` on top of `base`.
inline RunConfig merge_config(RunConfig c, const Json& j) {
  using namespace detail;
  require(j.is_object(), ErrorKind::ConfigError, "run config must be a JSON object");
  for (const auto& [key, v] : j.items()) {
    if (key == "k") c.k = get_as<std::size_t>(v, "k");
    else if (key == "q") {
      if (v.is_string()) {
        require(v.get<std::string>() == "identity", ErrorKind::ConfigError,
                "q must be an integer or \"identity\"");
        c.identity = true;
      } else {
        c.q = get_as<unsigned>(v, "q");
        c.identity = false;
      }
    }
    else if (key == "quant_mode") c.quant_mode = parse_enum(get_as<std::string>(v, "quant_mode"), kQuantModes, "quant_mode");
    else if (key == "T") c.inner_steps = get_as<std::size_t>(v, "T");
    else if (key == "batch") c.batch = get_as<std::size_t>(v, "batch");
    else if (key == "optimizer") c.optimizer = parse_enum(get_as<std::string>(v, "optimizer"), kOptimizers, "optimizer");
    else if (key == "exact") c.exact = get_as<bool>(v, "exact");
    else if (key == "step_theta") c.step_theta = schedule_from_json(v, c.step_theta);
    else if (key == "step_g") c.step_g = schedule_from_json(v, c.step_g);
    else if (key == "zero_mean") c.zero_mean = v.is_null() ? std::optional<bool>{} : std::optional<bool>{get_as<bool>(v, "zero_mean")};
    else if (key == "prox") c.prox = get_as<bool>(v, "prox");
    else if (key == "init") c.init = parse_enum(get_as<std::string>(v, "init"), kInits, "init");
    else if (key == "ktilde") c.ktilde = get_as<std::size_t>(v, "ktilde");
    else if (key == "max_rounds") c.max_rounds = get_as<std::size_t>(v, "max_rounds");
    else if (key == "stop") c.stop = parse_enum(get_as<std::string>(v, "stop"), kStops, "stop");
    else if (key == "stop_value") c.stop_value = get_as<double>(v, "stop_value");
    else if (key == "seed") c.seed = get_as<std::uint64_t>(v, "seed");
    else if (key == "arch") c.arch = parse_enum(get_as<std::string>(v, "arch"), kArchs, "arch");
    else if (key == "hidden") c.hidden = get_as<std::vector<std::size_t>>(v, "hidden");
    else if (key == "activation") c.activation = parse_enum(get_as<std::string>(v, "activation"), kActivations, "activation");
    else if (key == "lipschitz") c.lipschitz = get_as<double>(v, "lipschitz");
    else if (key == "oracle") c.oracle = parse_enum(get_as<std::string>(v, "oracle"), kOracleUses, "oracle");
    else if (key == "threads") c.threads = get_as<std::size_t>(v, "threads");
    else if (key == "timing") c.timing = get_as<bool>(v, "timing");
    else if (key == "check_replicas") c.check_replicas = get_as<bool>(v, "check_replicas");
    else if (key == "track_potential") c.track_potential = get_as<bool>(v, "track_potential");
    else fail(ErrorKind::ConfigError, "unknown run config key '" + key + "'");
  }
  return c;
}

inline RunConfig config_from_json(const Json& j) { return merge_config(RunConfig{}, j); }

}  // namespace cmv
