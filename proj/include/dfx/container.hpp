/* Copyright 2026 The dfx Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#ifndef DFX_CONTAINER_HPP_
#define DFX_CONTAINER_HPP_

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dfx/tensor.hpp"

namespace dfx {

// On-disk layout, all integers little-endian:
//
//   "CDNT" u16 version
//   chunk*:  u8 tag  u64 payload_bytes  payload
//
// Tag 'G' (exactly one, first) holds the line-oriented text descriptor.
// Tag 'T' is a tensor: u16 name_len, name, u8 dtype, u8 rank, rank x u64
// dims, element payload. Tag 'Q' is a named list of f64 values holding
// quantizer parameters keyed by layer. Tensor chunks precede quant
// chunks; parse() enforces that order so write(read(b)) == b.
constexpr std::uint16_t kContainerVersion = 1;

enum class DType : std::uint8_t { kF32 = 0, kI8 = 1, kI4 = 2, kI32 = 3 };

const char* to_string(DType t);

struct TensorRecord {
  std::string name;
  DType dtype = DType::kF32;
  std::vector<std::int64_t> dims;
  // Exactly one of these is used, by dtype. i4 codes are unpacked.
  std::vector<float> f32;
  std::vector<std::int8_t> codes;
  std::vector<std::int32_t> i32;

  std::int64_t count() const;
  Shape4 shape4() const;  // rank must be 4

  static TensorRecord from(std::string name, const FloatTensor& t);
  static TensorRecord from(std::string name, const AccumTensor& t);
  // i8 or i4 by the tensor's bit width; quantizer params are not stored.
  static TensorRecord from(std::string name, const QuantTensor& t);
  static TensorRecord from_i32(std::string name, std::vector<std::int32_t> v);
  static TensorRecord from_f32(std::string name, std::vector<float> v);

  FloatTensor to_float() const;
  AccumTensor to_i32() const;
  QuantTensor to_quant(const QuantParams& qp) const;

  bool operator==(const TensorRecord&) const = default;
};

struct QuantRecord {
  std::string name;
  std::vector<double> values;
  bool operator==(const QuantRecord&) const = default;
};

struct Container {
  std::uint16_t version = kContainerVersion;
  std::string descriptor;
  std::vector<TensorRecord> tensors;
  std::vector<QuantRecord> quant;

  // Throw FormatError when absent.
  const TensorRecord& tensor(std::string_view name) const;
  const QuantRecord& quant_values(std::string_view name) const;
  bool has_tensor(std::string_view name) const;

  bool operator==(const Container&) const = default;
};

// Two codes per byte, even index in the low nibble; an odd tail leaves
// the last high nibble zero.
std::vector<std::uint8_t> pack_i4(std::span<const std::int8_t> codes);
std::vector<std::int8_t> unpack_i4(std::span<const std::uint8_t> bytes, std::int64_t count);

std::vector<std::uint8_t> serialize(const Container& c);
// Throws FormatError on bad magic, truncation, unknown tags or dtypes,
// chunk order violations or trailing bytes.
Container parse_container(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path);
void write_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
Container read_container(const std::filesystem::path& path);
void write_container(const std::filesystem::path& path, const Container& c);

// Raw 8-bit NHWC image: "CDIM" u32 h u32 w u32 c, then h*w*c bytes.
struct RawImage {
  std::int64_t h = 0;
  std::int64_t w = 0;
  std::int64_t c = 0;
  std::vector<std::uint8_t> pixels;
  Shape4 shape() const { return {1, h, w, c}; }
};

std::vector<std::uint8_t> encode_image(const RawImage& img);
RawImage decode_image(std::span<const std::uint8_t> bytes);
RawImage read_image(const std::filesystem::path& path);
void write_image(const std::filesystem::path& path, const RawImage& img);

}  // namespace dfx

#endif  // DFX_CONTAINER_HPP_
