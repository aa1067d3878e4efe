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

#include <cstdint>
#include <span>
#include <vector>

#include "cutemaxvar/compressor.hpp"

namespace cmv {

enum class Direction : std::uint8_t { Uplink, Downlink };

// A single transmission. `replace` marks the full-precision initialization
// messages, which overwrite the receiver's copy instead of adding a delta.
struct RoundMessage {
  std::uint64_t round = 0;
  Direction direction = Direction::Uplink;
  std::uint64_t node = 0;  // sender for uplinks; unused for downlinks
  bool replace = false;
  QuantizedBlock payload;

  std::uint64_t payload_bits() const { return payload.payload_bits(); }
};

// u64 round | u8 direction | u64 node | u8 replace | block wire format.
// Full-precision (replace) payloads always use the identity wire layout.
inline std::vector<std::uint8_t> encode_message(const RoundMessage& m) {
  std::vector<std::uint8_t> out;
  bytes::put_u64(out, m.round);
  bytes::put_u8(out, static_cast<std::uint8_t>(m.direction));
  bytes::put_u64(out, m.node);
  bytes::put_u8(out, m.replace ? 1 : 0);
  const auto body = encode_block(m.payload);
  out.insert(out.end(), body.begin(), body.end());
  return out;
}

inline RoundMessage decode_message(std::span<const std::uint8_t> wire, const QuantizerConfig& cfg) {
  bytes::Reader rd(wire, ErrorKind::DecodeError);
  RoundMessage m;
  m.round = rd.u64();
  const auto dir = rd.u8();
  require(dir <= 1, ErrorKind::DecodeError, "unknown message direction");
  m.direction = static_cast<Direction>(dir);
  m.node = rd.u64();
  const auto replace = rd.u8();
  require(replace <= 1, ErrorKind::DecodeError, "bad replace flag");
  m.replace = replace == 1;
  m.payload = decode_block(rd.take(rd.remaining()), m.replace ? QuantizerConfig::identity() : cfg);
  return m;
}

}  // namespace cmv
