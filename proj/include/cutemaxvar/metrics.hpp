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

#pragma once

#include <cmath>
#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

#include "cutemaxvar/error.hpp"

namespace cmv {

struct MetricsRecord {
  std::uint64_t round = 0;
  double objective = 0.0;
  double g_change = 0.0;  // ||G^(r) - G^(r-1)||_F
  double subspace_dist = std::nan("");
  double kkt_residual = 0.0;
  std::uint64_t uplink_bits = 0;    // cumulative
  std::uint64_t downlink_bits = 0;  // cumulative, counted once per receiving node
  double bpv = 0.0;
  double wall_ms = 0.0;

  // Not part of the CSV.
  double potential = 0.0;
  double orthogonality_error = 0.0;  // max |G^T G - I|
  double mean_error = 0.0;           // max |column mean of G|
  bool degenerate = false;
};

inline constexpr const char* kMetricsHeader =
    "round,objective,g_change,subspace_dist,kkt_residual,uplink_bits,downlink_bits,bpv,wall_ms";

namespace detail {

inline std::string fmt_real(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace detail

inline std::string to_csv_row(const MetricsRecord& m) {
  using detail::fmt_real;
  return std::to_string(m.round) + ',' + fmt_real(m.objective) + ',' + fmt_real(m.g_change) +
         ',' + fmt_real(m.subspace_dist) + ',' + fmt_real(m.kkt_residual) + ',' +
         std::to_string(m.uplink_bits) + ',' + std::to_string(m.downlink_bits) + ',' +
         fmt_real(m.bpv) + ',' + fmt_real(m.wall_ms);
}

inline void write_csv(std::ostream& os, const std::vector<MetricsRecord>& records) {
  os << kMetricsHeader << '\n';
  for (const auto& r : records) os << to_csv_row(r) << '\n';
}

namespace detail {

inline std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out(1);
  for (char c : line) {
    if (c == sep) {
      out.emplace_back();
    } else if (c != '\r') {
      out.back() += c;
    }
  }
  return out;
}

}  // namespace detail

// Parses a metrics CSV written by write_csv.
inline std::vector<MetricsRecord> parse_csv(const std::string& text) {
  std::vector<MetricsRecord> out;
  std::size_t pos = 0;
  bool header = true;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    const std::string line = text.substr(pos, end - pos);
    pos = end + 1;
    if (line.empty() || line == "\r") continue;
    if (header) {
      require(line.rfind(kMetricsHeader, 0) == 0, ErrorKind::IOError, "unexpected metrics header");
      header = false;
      continue;
    }
    const auto f = detail::split(line, ',');
    require(f.size() == 9, ErrorKind::IOError, "metrics row must have 9 fields");
    try {
      MetricsRecord m;
      m.round = std::stoull(f[0]);
      m.objective = std::stod(f[1]);
      m.g_change = std::stod(f[2]);
      m.subspace_dist = std::stod(f[3]);
      m.kkt_residual = std::stod(f[4]);
      m.uplink_bits = std::stoull(f[5]);
      m.downlink_bits = std::stoull(f[6]);
      m.bpv = std::stod(f[7]);
      m.wall_ms = std::stod(f[8]);
      out.push_back(m);
    } catch (const std::logic_error&) {
      fail(ErrorKind::IOError, "malformed metrics row: " + line);
    }
  }
  require(!header, ErrorKind::IOError, "empty metrics file");
  return out;
}

}  // namespace cmv
