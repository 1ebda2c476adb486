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

#include "dfx/tensor.hpp"

#include <cmath>

namespace dfx {

void Shape4::validate() const {
  if (n < 1 || h < 1 || w < 1 || c < 1) {
    throw ShapeError("invalid shape " + str() + ": all dims must be >= 1");
  }
  constexpr std::int64_t kMax = std::numeric_limits<std::int64_t>::max();
  std::int64_t acc = n;
  for (std::int64_t d : {h, w, c}) {
    if (acc > kMax / d) throw ShapeError("shape " + str() + " overflows 63 bits");
    acc *= d;
  }
}

std::string Shape4::str() const {
  return "(" + std::to_string(n) + "," + std::to_string(h) + "," +
         std::to_string(w) + "," + std::to_string(c) + ")";
}

void check_code_range(std::int64_t value, int bits) {
  if (bits != 4 && bits != 8) {
    throw ParamError("unsupported bit width " + std::to_string(bits));
  }
  const int q = qmax_for_bits(bits);
  if (value < -q || value > q) {
    throw RangeError("value " + std::to_string(value) + " outside int" +
                     std::to_string(bits) + " symmetric range [" +
                     std::to_string(-q) + "," + std::to_string(q) + "]");
  }
}

QuantTensor::QuantTensor(const Shape4& shape, int bits, QuantParams qparams,
                         std::int32_t fill)
    : shape_(shape), bits_(bits), qparams_(std::move(qparams)) {
  shape_.validate();
  check_code_range(fill, bits_);
  codes_.assign(static_cast<std::size_t>(shape_.count()),
                static_cast<std::int8_t>(fill));
}

QuantTensor::QuantTensor(const Shape4& shape, int bits, QuantParams qparams,
                         std::vector<std::int8_t> codes)
    : shape_(shape), bits_(bits), qparams_(std::move(qparams)),
      codes_(std::move(codes)) {
  shape_.validate();
  if (static_cast<std::int64_t>(codes_.size()) != shape_.count()) {
    throw ShapeError("code length " + std::to_string(codes_.size()) +
                     " does not match shape " + shape_.str());
  }
  for (std::int8_t v : codes_) check_code_range(v, bits_);
}

std::int8_t QuantTensor::at(std::int64_t n, std::int64_t h, std::int64_t w,
                            std::int64_t c) const {
  if (!shape_.contains(n, h, w, c)) {
    throw IndexError("index (" + std::to_string(n) + "," + std::to_string(h) +
                     "," + std::to_string(w) + "," + std::to_string(c) +
                     ") out of range for shape " + shape_.str());
  }
  return (*this)(n, h, w, c);
}

void QuantTensor::set(std::int64_t n, std::int64_t h, std::int64_t w,
                      std::int64_t c, std::int32_t value) {
  if (!shape_.contains(n, h, w, c)) {
    throw IndexError("index (" + std::to_string(n) + "," + std::to_string(h) +
                     "," + std::to_string(w) + "," + std::to_string(c) +
                     ") out of range for shape " + shape_.str());
  }
  check_code_range(value, bits_);
  codes_[static_cast<std::size_t>(shape_.offset(n, h, w, c))] =
      static_cast<std::int8_t>(value);
}

}  // namespace dfx
