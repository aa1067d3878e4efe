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

// Little-endian byte helpers and the "CMVM" binary matrix file format:
//   magic "CMVM" | u8 kind (0 dense, 1 CSR) | u64 rows | u64 cols | payload
//   dense: rows*cols f64 (row-major)
//   CSR:   u64 nnz | (rows+1) u64 row pointers | nnz u64 column indices |
//          nnz f64 values

#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "cutemaxvar/error.hpp"
#include "cutemaxvar/matcore.hpp"

namespace cmv {

namespace bytes {

inline void put_u8(std::vector<std::uint8_t>& out, std::uint8_t v) { out.push_back(v); }

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline void put_f64(std::vector<std::uint8_t>& out, double v) {
  put_u64(out, std::bit_cast<std::uint64_t>(v));
}

// Sequential little-endian reader over a byte buffer. Running off the end
// raises `on_short` so callers can choose DecodeError vs IOError.
class Reader {
 public:
  Reader(std::span<const std::uint8_t> data, ErrorKind on_short)
      : data_(data), on_short_(on_short) {}

  std::uint8_t u8() {
    need(1);
    return data_[pos_++];
  }

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(data_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }

  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(data_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return v;
  }

  double f64() { return std::bit_cast<double>(u64()); }

  std::span<const std::uint8_t> take(std::size_t n) {
    need(n);
    auto s = data_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

  std::size_t remaining() const { return data_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) fail(on_short_, "unexpected end of data");
  }

  std::span<const std::uint8_t> data_;
  ErrorKind on_short_;
  std::size_t pos_ = 0;
};

inline std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::IOError, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path& path,
                       const std::vector<std::uint8_t>& data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::IOError, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(data.data()),
            static_cast<std::streamsize>(data.size()));
  if (!out) fail(ErrorKind::IOError, "short write to " + path.string());
}

}  // namespace bytes

inline constexpr char kMatrixMagic[4] = {'C', 'M', 'V', 'M'};

inline std::vector<std::uint8_t> encode_matrix(const View& view) {
  std::vector<std::uint8_t> out(std::begin(kMatrixMagic), std::end(kMatrixMagic));
  if (const auto* d = std::get_if<DenseMat>(&view)) {
    bytes::put_u8(out, 0);
    bytes::put_u64(out, static_cast<std::uint64_t>(d->rows()));
    bytes::put_u64(out, static_cast<std::uint64_t>(d->cols()));
    for (Eigen::Index r = 0; r < d->rows(); ++r)
      for (Eigen::Index c = 0; c < d->cols(); ++c) bytes::put_f64(out, (*d)(r, c));
  } else {
    const auto& s = std::get<SparseMat>(view);
    bytes::put_u8(out, 1);
    bytes::put_u64(out, s.rows);
    bytes::put_u64(out, s.cols);
    bytes::put_u64(out, s.nnz());
    for (auto p : s.row_ptr) bytes::put_u64(out, p);
    for (auto c : s.col_idx) bytes::put_u64(out, c);
    for (double v : s.values) bytes::put_f64(out, v);
  }
  return out;
}

inline View decode_matrix(std::span<const std::uint8_t> data) {
  bytes::Reader rd(data, ErrorKind::IOError);
  auto magic = rd.take(4);
  require(std::memcmp(magic.data(), kMatrixMagic, 4) == 0, ErrorKind::IOError,
          "bad matrix magic");
  const auto kind = rd.u8();
  const auto rows = rd.u64();
  const auto cols = rd.u64();
  if (kind == 0) {
    require((cols == 0 || rows <= rd.remaining() / 8 / cols) && rd.remaining() == rows * cols * 8, ErrorKind::IOError,
            "dense payload length mismatch");
    DenseMat d(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index r = 0; r < d.rows(); ++r)
      for (Eigen::Index c = 0; c < d.cols(); ++c) d(r, c) = rd.f64();
    return d;
  }
  require(kind == 1, ErrorKind::IOError, "unknown matrix kind");
  SparseMat s;
  s.rows = rows;
  s.cols = cols;
  const auto nnz = rd.u64();
  require(rows < rd.remaining() / 8 && nnz <= rd.remaining() / 16 && rd.remaining() == (rows + 1) * 8 + nnz * 16, ErrorKind::IOError,
          "CSR payload length mismatch");
  s.row_ptr.resize(rows + 1);
  for (auto& p : s.row_ptr) p = rd.u64();
  s.col_idx.resize(nnz);
  for (auto& c : s.col_idx) c = rd.u64();
  s.values.resize(nnz);
  for (auto& v : s.values) v = rd.f64();
  s.validate();
  return s;
}

inline void write_matrix(const std::filesystem::path& path, const View& view) {
  bytes::write_file(path, encode_matrix(view));
}

inline View read_matrix(const std::filesystem::path& path) {
  const auto data = bytes::read_file(path);
  return decode_matrix(data);
}

}  // namespace cmv
