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

#ifndef DFX_TENSOR_HPP_
#define DFX_TENSOR_HPP_

#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "dfx/error.hpp"
#include "dfx/quant_params.hpp"

namespace dfx {

// Batch, rows, columns, channels. Storage is always NHWC.
struct Shape4 {
  std::int64_t n = 1;
  std::int64_t h = 1;
  std::int64_t w = 1;
  std::int64_t c = 1;

  // Throws ShapeError unless every dim is >= 1 and the element count fits
  // in 63 bits.
  void validate() const;
  std::int64_t count() const { return n * h * w * c; }
  std::int64_t offset(std::int64_t in, std::int64_t ih, std::int64_t iw,
                      std::int64_t ic) const {
    return ((in * h + ih) * w + iw) * c + ic;
  }
  bool contains(std::int64_t in, std::int64_t ih, std::int64_t iw,
                std::int64_t ic) const {
    return in >= 0 && in < n && ih >= 0 && ih < h && iw >= 0 && iw < w &&
           ic >= 0 && ic < c;
  }
  std::string str() const;

  bool operator==(const Shape4&) const = default;
};

// Dense NHWC container. Elements are set through `at`/`data` during
// construction; after that, tensors are treated as immutable values.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(const Shape4& shape, T fill = T{}) : shape_(shape) {
    shape_.validate();
    data_.assign(static_cast<std::size_t>(shape_.count()), fill);
  }
  Tensor(const Shape4& shape, std::vector<T> data)
      : shape_(shape), data_(std::move(data)) {
    shape_.validate();
    if (static_cast<std::int64_t>(data_.size()) != shape_.count()) {
      throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                       " does not match shape " + shape_.str());
    }
  }

  const Shape4& shape() const { return shape_; }
  std::int64_t size() const { return shape_.count(); }

  // Bounds-checked accessors; throw IndexError.
  T& at(std::int64_t n, std::int64_t h, std::int64_t w, std::int64_t c) {
    check(n, h, w, c);
    return data_[static_cast<std::size_t>(shape_.offset(n, h, w, c))];
  }
  const T& at(std::int64_t n, std::int64_t h, std::int64_t w,
              std::int64_t c) const {
    check(n, h, w, c);
    return data_[static_cast<std::size_t>(shape_.offset(n, h, w, c))];
  }

  // Unchecked accessors for inner loops.
  T& operator()(std::int64_t n, std::int64_t h, std::int64_t w,
                std::int64_t c) {
    return data_[static_cast<std::size_t>(shape_.offset(n, h, w, c))];
  }
  const T& operator()(std::int64_t n, std::int64_t h, std::int64_t w,
                      std::int64_t c) const {
    return data_[static_cast<std::size_t>(shape_.offset(n, h, w, c))];
  }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  std::vector<T>& storage() { return data_; }
  const std::vector<T>& storage() const { return data_; }

  bool operator==(const Tensor&) const = default;

 private:
  void check(std::int64_t n, std::int64_t h, std::int64_t w,
             std::int64_t c) const {
    if (!shape_.contains(n, h, w, c)) {
      throw IndexError("index (" + std::to_string(n) + "," + std::to_string(h) +
                       "," + std::to_string(w) + "," + std::to_string(c) +
                       ") out of range for shape " + shape_.str());
    }
  }

  Shape4 shape_;
  std::vector<T> data_;
};

using FloatTensor = Tensor<float>;
// Pre-requantization accumulator of the integer engines.
using AccumTensor = Tensor<std::int32_t>;

// Signed integer codes of bit width 4 or 8 with their quantizer params.
// Every code lies in the symmetric range [-(2^(k-1)-1), 2^(k-1)-1].
class QuantTensor {
 public:
  QuantTensor() = default;
  // Throws RangeError if `fill` is outside the symmetric range.
  QuantTensor(const Shape4& shape, int bits, QuantParams qparams,
              std::int32_t fill = 0);
  // Throws RangeError if any code is outside the symmetric range and
  // ShapeError on a length mismatch.
  QuantTensor(const Shape4& shape, int bits, QuantParams qparams,
              std::vector<std::int8_t> codes);

  const Shape4& shape() const { return shape_; }
  std::int64_t size() const { return shape_.count(); }
  int bits() const { return bits_; }
  int qmax() const { return qmax_for_bits(bits_); }
  const QuantParams& qparams() const { return qparams_; }

  std::int8_t at(std::int64_t n, std::int64_t h, std::int64_t w,
                 std::int64_t c) const;
  // Range-checked store; throws IndexError / RangeError.
  void set(std::int64_t n, std::int64_t h, std::int64_t w, std::int64_t c,
           std::int32_t value);

  std::int8_t operator()(std::int64_t n, std::int64_t h, std::int64_t w,
                         std::int64_t c) const {
    return codes_[static_cast<std::size_t>(shape_.offset(n, h, w, c))];
  }

  std::span<const std::int8_t> codes() const { return codes_; }

  bool operator==(const QuantTensor&) const = default;

 private:
  Shape4 shape_;
  int bits_ = 8;
  QuantParams qparams_;
  std::vector<std::int8_t> codes_;
};

// Throws RangeError unless `bits` is 4 or 8 and `value` is in its
// symmetric range.
void check_code_range(std::int64_t value, int bits);

}  // namespace dfx

#endif  // DFX_TENSOR_HPP_
