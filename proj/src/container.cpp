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

#include "dfx/container.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "dfx/error.hpp"

namespace dfx {

namespace {

constexpr char kMagic[4] = {'C', 'D', 'N', 'T'};
constexpr char kImageMagic[4] = {'C', 'D', 'I', 'M'};
constexpr std::int64_t kMaxDim = std::int64_t{1} << 32;

class Writer {
 public:
  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  template <typename U>
  void uint(U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) { uint(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { uint(std::bit_cast<std::uint64_t>(v)); }
  void name(const std::string& s) {
    if (s.size() > 0xFFFF) throw FormatError("chunk name too long: " + s.substr(0, 32));
    uint(static_cast<std::uint16_t>(s.size()));
    raw(s.data(), s.size());
  }
  std::vector<std::uint8_t>& bytes() { return out_; }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : b_(b) {}
  std::span<const std::uint8_t> take(std::size_t n) {
    if (n > b_.size() - pos_) {
      throw FormatError("truncated: need " + std::to_string(n) + " bytes at offset " +
                        std::to_string(pos_) + ", have " + std::to_string(b_.size() - pos_));
    }
    auto s = b_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  template <typename U>
  U uint() {
    auto s = take(sizeof(U));
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<U>(s[i]) << (8 * i));
    return v;
  }
  float f32() { return std::bit_cast<float>(uint<std::uint32_t>()); }
  double f64() { return std::bit_cast<double>(uint<std::uint64_t>()); }
  std::string name() {
    const auto n = uint<std::uint16_t>();
    auto s = take(n);
    return std::string(s.begin(), s.end());
  }
  bool done() const { return pos_ == b_.size(); }
  std::size_t remaining() const { return b_.size() - pos_; }
  std::size_t pos() const { return pos_; }

 private:
  std::span<const std::uint8_t> b_;
  std::size_t pos_ = 0;
};

std::size_t element_bytes(DType t, std::int64_t count) {
  switch (t) {
    case DType::kF32:
    case DType::kI32: return static_cast<std::size_t>(count) * 4;
    case DType::kI8: return static_cast<std::size_t>(count);
    case DType::kI4: return static_cast<std::size_t>((count + 1) / 2);
  }
  return 0;
}

void check_lengths(const TensorRecord& t) {
  const auto n = static_cast<std::size_t>(t.count());
  const std::size_t have = t.dtype == DType::kF32   ? t.f32.size()
                           : t.dtype == DType::kI32 ? t.i32.size()
                                                    : t.codes.size();
  if (have != n) {
    throw FormatError("tensor " + t.name + ": " + std::to_string(have) + " values for " +
                      std::to_string(n) + " elements");
  }
}

std::vector<std::int64_t> dims_of(const Shape4& s) { return {s.n, s.h, s.w, s.c}; }

void encode_tensor(Writer& w, const TensorRecord& t) {
  check_lengths(t);
  w.name(t.name);
  w.uint(static_cast<std::uint8_t>(t.dtype));
  if (t.dims.size() > 255) throw FormatError("tensor " + t.name + ": rank too large");
  w.uint(static_cast<std::uint8_t>(t.dims.size()));
  for (std::int64_t d : t.dims) w.uint(static_cast<std::uint64_t>(d));
  switch (t.dtype) {
    case DType::kF32:
      for (float v : t.f32) w.f32(v);
      break;
    case DType::kI32:
      for (std::int32_t v : t.i32) w.uint(static_cast<std::uint32_t>(v));
      break;
    case DType::kI8:
      for (std::int8_t v : t.codes) w.uint(static_cast<std::uint8_t>(v));
      break;
    case DType::kI4: {
      const auto packed = pack_i4(t.codes);
      w.raw(packed.data(), packed.size());
      break;
    }
  }
}

TensorRecord decode_tensor(Reader& r) {
  TensorRecord t;
  t.name = r.name();
  const auto dt = r.uint<std::uint8_t>();
  if (dt > 3) throw FormatError("tensor " + t.name + ": unknown dtype code " + std::to_string(dt));
  t.dtype = static_cast<DType>(dt);
  const auto rank = r.uint<std::uint8_t>();
  std::int64_t count = 1;
  for (int i = 0; i < rank; ++i) {
    const auto d = r.uint<std::uint64_t>();
    if (d >= static_cast<std::uint64_t>(kMaxDim)) throw FormatError("tensor " + t.name + ": dim too large");
    t.dims.push_back(static_cast<std::int64_t>(d));
    count *= t.dims.back();
    if (count >= kMaxDim) throw FormatError("tensor " + t.name + ": too many elements");
  }
  const std::size_t nbytes = element_bytes(t.dtype, count);
  if (nbytes > r.remaining()) throw FormatError("tensor " + t.name + ": payload truncated");
  const auto n = static_cast<std::size_t>(count);
  switch (t.dtype) {
    case DType::kF32:
      t.f32.resize(n);
      for (auto& v : t.f32) v = r.f32();
      break;
    case DType::kI32:
      t.i32.resize(n);
      for (auto& v : t.i32) v = static_cast<std::int32_t>(r.uint<std::uint32_t>());
      break;
    case DType::kI8:
      t.codes.resize(n);
      for (auto& v : t.codes) v = static_cast<std::int8_t>(r.uint<std::uint8_t>());
      break;
    case DType::kI4:
      t.codes = unpack_i4(r.take(nbytes), count);
      break;
  }
  return t;
}

}  // namespace

const char* to_string(DType t) {
  switch (t) {
    case DType::kF32: return "f32";
    case DType::kI8: return "i8";
    case DType::kI4: return "i4";
    case DType::kI32: return "i32";
  }
  return "?";
}

std::int64_t TensorRecord::count() const {
  std::int64_t n = 1;
  for (std::int64_t d : dims) n *= d;
  return n;
}

Shape4 TensorRecord::shape4() const {
  if (dims.size() != 4) throw FormatError("tensor " + name + " has rank " + std::to_string(dims.size()) + ", need 4");
  return {dims[0], dims[1], dims[2], dims[3]};
}

TensorRecord TensorRecord::from(std::string name, const FloatTensor& t) {
  TensorRecord r{std::move(name), DType::kF32, dims_of(t.shape()), t.storage(), {}, {}};
  return r;
}

TensorRecord TensorRecord::from(std::string name, const AccumTensor& t) {
  TensorRecord r{std::move(name), DType::kI32, dims_of(t.shape()), {}, {}, t.storage()};
  return r;
}

TensorRecord TensorRecord::from(std::string name, const QuantTensor& t) {
  TensorRecord r{std::move(name), t.bits() == 4 ? DType::kI4 : DType::kI8, dims_of(t.shape()),
                 {}, std::vector<std::int8_t>(t.codes().begin(), t.codes().end()), {}};
  return r;
}

TensorRecord TensorRecord::from_i32(std::string name, std::vector<std::int32_t> v) {
  const auto n = static_cast<std::int64_t>(v.size());
  return TensorRecord{std::move(name), DType::kI32, {n}, {}, {}, std::move(v)};
}

TensorRecord TensorRecord::from_f32(std::string name, std::vector<float> v) {
  const auto n = static_cast<std::int64_t>(v.size());
  return TensorRecord{std::move(name), DType::kF32, {n}, std::move(v), {}, {}};
}

FloatTensor TensorRecord::to_float() const {
  if (dtype != DType::kF32) throw FormatError("tensor " + name + " is " + to_string(dtype) + ", need f32");
  check_lengths(*this);
  return FloatTensor(shape4(), f32);
}

AccumTensor TensorRecord::to_i32() const {
  if (dtype != DType::kI32) throw FormatError("tensor " + name + " is " + to_string(dtype) + ", need i32");
  check_lengths(*this);
  return AccumTensor(shape4(), i32);
}

QuantTensor TensorRecord::to_quant(const QuantParams& qp) const {
  if (dtype != DType::kI4 && dtype != DType::kI8) {
    throw FormatError("tensor " + name + " is " + to_string(dtype) + ", need i4 or i8");
  }
  check_lengths(*this);
  try {
    return QuantTensor(shape4(), dtype == DType::kI4 ? 4 : 8, qp, codes);
  } catch (const Error& e) {
    throw FormatError("tensor " + name + ": " + e.what());
  }
}

const TensorRecord& Container::tensor(std::string_view name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return t;
  }
  throw FormatError("container has no tensor '" + std::string(name) + "'");
}

bool Container::has_tensor(std::string_view name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return true;
  }
  return false;
}

const QuantRecord& Container::quant_values(std::string_view name) const {
  for (const auto& q : quant) {
    if (q.name == name) return q;
  }
  throw FormatError("container has no quant params '" + std::string(name) + "'");
}

std::vector<std::uint8_t> pack_i4(std::span<const std::int8_t> codes) {
  std::vector<std::uint8_t> out((codes.size() + 1) / 2, 0);
  for (std::size_t i = 0; i < codes.size(); ++i) {
    if (codes[i] < -8 || codes[i] > 7) {
      throw RangeError("code " + std::to_string(codes[i]) + " does not fit 4 bits");
    }
    const auto nib = static_cast<std::uint8_t>(codes[i] & 0x0F);
    out[i / 2] |= static_cast<std::uint8_t>(i % 2 == 0 ? nib : nib << 4);
  }
  return out;
}

std::vector<std::int8_t> unpack_i4(std::span<const std::uint8_t> bytes, std::int64_t count) {
  if (static_cast<std::int64_t>(bytes.size()) * 2 < count) throw FormatError("i4 payload too short");
  std::vector<std::int8_t> out(static_cast<std::size_t>(count));
  for (std::size_t i = 0; i < out.size(); ++i) {
    int nib = (i % 2 == 0) ? (bytes[i / 2] & 0x0F) : (bytes[i / 2] >> 4);
    if (nib >= 8) nib -= 16;
    out[i] = static_cast<std::int8_t>(nib);
  }
  if (count % 2 == 1 && (bytes[bytes.size() - 1] >> 4) != 0) {
    throw FormatError("i4 padding nibble is not zero");
  }
  return out;
}

std::vector<std::uint8_t> serialize(const Container& c) {
  Writer w;
  w.raw(kMagic, 4);
  w.uint(c.version);
  auto chunk = [&](char tag, const std::vector<std::uint8_t>& body) {
    w.uint(static_cast<std::uint8_t>(tag));
    w.uint(static_cast<std::uint64_t>(body.size()));
    w.raw(body.data(), body.size());
  };
  chunk('G', std::vector<std::uint8_t>(c.descriptor.begin(), c.descriptor.end()));
  for (const auto& t : c.tensors) {
    Writer b;
    encode_tensor(b, t);
    chunk('T', b.bytes());
  }
  for (const auto& q : c.quant) {
    Writer b;
    b.name(q.name);
    b.uint(static_cast<std::uint32_t>(q.values.size()));
    for (double v : q.values) b.f64(v);
    chunk('Q', b.bytes());
  }
  return std::move(w.bytes());
}

Container parse_container(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw FormatError("not a model container (bad magic)");
  }
  r.take(4);
  Container c;
  c.version = r.uint<std::uint16_t>();
  if (c.version != kContainerVersion) {
    throw FormatError("unsupported container version " + std::to_string(c.version));
  }
  bool seen_descriptor = false;
  while (!r.done()) {
    const std::size_t at = r.pos();
    const auto tag = static_cast<char>(r.uint<std::uint8_t>());
    const auto len = r.uint<std::uint64_t>();
    if (len > r.remaining()) throw FormatError("chunk at offset " + std::to_string(at) + " overruns the file");
    Reader body(r.take(static_cast<std::size_t>(len)));
    if (tag == 'G') {
      if (seen_descriptor) throw FormatError("second descriptor chunk at offset " + std::to_string(at));
      auto s = body.take(static_cast<std::size_t>(len));
      c.descriptor.assign(s.begin(), s.end());
      seen_descriptor = true;
      continue;
    }
    if (!seen_descriptor) throw FormatError("first chunk must be the descriptor");
    if (tag == 'T') {
      if (!c.quant.empty()) throw FormatError("tensor chunk after quant chunks at offset " + std::to_string(at));
      c.tensors.push_back(decode_tensor(body));
    } else if (tag == 'Q') {
      QuantRecord q;
      q.name = body.name();
      const auto n = body.uint<std::uint32_t>();
      if (static_cast<std::uint64_t>(n) * 8 != body.remaining()) {
        throw FormatError("quant chunk " + q.name + ": length mismatch");
      }
      q.values.resize(n);
      for (auto& v : q.values) v = body.f64();
      c.quant.push_back(std::move(q));
    } else {
      throw FormatError("unknown chunk tag " + std::to_string(static_cast<int>(tag)) + " at offset " +
                        std::to_string(at));
    }
    if (!body.done()) throw FormatError("chunk at offset " + std::to_string(at) + " has trailing bytes");
  }
  if (!seen_descriptor) throw FormatError("container has no descriptor chunk");
  return c;
}

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("write failed: " + path.string());
}

Container read_container(const std::filesystem::path& path) {
  const auto bytes = read_bytes(path);
  try {
    return parse_container(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void write_container(const std::filesystem::path& path, const Container& c) {
  write_bytes(path, serialize(c));
}

std::vector<std::uint8_t> encode_image(const RawImage& img) {
  if (img.h <= 0 || img.w <= 0 || img.c <= 0 || img.h >= kMaxDim || img.w >= kMaxDim || img.c >= kMaxDim) {
    throw ShapeError("bad image dims");
  }
  if (static_cast<std::int64_t>(img.pixels.size()) != img.h * img.w * img.c) {
    throw ShapeError("image pixel count does not match its dims");
  }
  Writer w;
  w.raw(kImageMagic, 4);
  w.uint(static_cast<std::uint32_t>(img.h));
  w.uint(static_cast<std::uint32_t>(img.w));
  w.uint(static_cast<std::uint32_t>(img.c));
  w.raw(img.pixels.data(), img.pixels.size());
  return std::move(w.bytes());
}

RawImage decode_image(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kImageMagic, 4) != 0) {
    throw FormatError("not a raw image (bad magic or short header)");
  }
  Reader r(bytes);
  r.take(4);
  RawImage img;
  img.h = r.uint<std::uint32_t>();
  img.w = r.uint<std::uint32_t>();
  img.c = r.uint<std::uint32_t>();
  if (img.h == 0 || img.w == 0 || img.c == 0) throw FormatError("image has a zero dimension");
  const std::int64_t n = img.h * img.w * img.c;
  if (static_cast<std::int64_t>(r.remaining()) != n) {
    throw FormatError("image payload is " + std::to_string(r.remaining()) + " bytes, header says " +
                      std::to_string(n));
  }
  auto s = r.take(static_cast<std::size_t>(n));
  img.pixels.assign(s.begin(), s.end());
  return img;
}

RawImage read_image(const std::filesystem::path& path) {
  const auto bytes = read_bytes(path);
  try {
    return decode_image(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void write_image(const std::filesystem::path& path, const RawImage& img) {
  write_bytes(path, encode_image(img));
}

}  // namespace dfx
