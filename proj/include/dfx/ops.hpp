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

#ifndef DFX_OPS_HPP_
#define DFX_OPS_HPP_

#include <array>
#include <cstdint>
#include <vector>

#include "dfx/quant.hpp"
#include "dfx/tensor.hpp"

namespace dfx {

// Convolution geometry. Weights are stored HWIO in a Shape4:
// n = kernel rows, h = kernel cols, w = input channels per group (1 for
// depthwise), c = output channels.
struct ConvSpec {
  int kernel = 3;
  int stride = 1;
  bool depthwise = false;
  int padding = 1;

  // Throws ParamError for kernels other than 1/3 or strides outside {1,2,4}.
  void validate() const;
  std::int64_t out_dim(std::int64_t in) const {
    return (in + 2 * padding - kernel) / stride + 1;
  }
  Shape4 out_shape(const Shape4& in, std::int64_t oc) const {
    return {in.n, out_dim(in.h), out_dim(in.w), oc};
  }
  Shape4 weight_shape(std::int64_t ic, std::int64_t oc) const {
    return {kernel, kernel, depthwise ? 1 : ic, oc};
  }
  // MACs per output position for `ic` input and `oc` output channels.
  std::int64_t macs_per_position(std::int64_t ic, std::int64_t oc) const {
    return static_cast<std::int64_t>(kernel) * kernel * (depthwise ? oc : ic * oc);
  }

  static ConvSpec conv1x1() { return {1, 1, false, 0}; }
  static ConvSpec dw3x3(int stride = 1) { return {3, stride, true, 1}; }
  static ConvSpec full3x3(int stride = 1) { return {3, stride, false, 1}; }

  bool operator==(const ConvSpec&) const = default;
};

enum class OffsetMode : std::uint8_t {
  kFreeFrac = 0,    // 18 real displacements per position (dy, dx per tap)
  kFreeInt = 1,     // 18 integer displacements, unbounded
  kBoundedInt = 2,  // 18 integer displacements within [lo, hi]
  kSquare = 3,      // one integer half-width d in [0, hi] per position
};

const char* to_string(OffsetMode mode);

constexpr int kTaps = 9;

// Sampling displacements for every output position of a 3x3 deformable
// convolution. Free modes hold (dy, dx) for each of the nine taps, tap
// index = ky * 3 + kx; square mode holds a single d per position.
struct OffsetField {
  OffsetMode mode = OffsetMode::kFreeFrac;
  std::int64_t n = 1;
  std::int64_t h = 1;
  std::int64_t w = 1;
  int lo = -8;
  int hi = 7;
  std::vector<float> frac;        // kFreeFrac: n*h*w*18
  std::vector<std::int32_t> ints; // integer free modes: n*h*w*18; square: n*h*w

  static OffsetField zeros(OffsetMode mode, std::int64_t n, std::int64_t h, std::int64_t w,
                           int lo = -8, int hi = 7);
  // Square field with the same d everywhere.
  static OffsetField uniform_square(std::int64_t n, std::int64_t h, std::int64_t w,
                                    std::int32_t d, int hi = 7);

  bool is_integer() const { return mode != OffsetMode::kFreeFrac; }
  int channels() const { return mode == OffsetMode::kSquare ? 1 : 2 * kTaps; }
  std::int64_t positions() const { return n * h * w; }
  std::int64_t index(std::int64_t in, std::int64_t oy, std::int64_t ox) const {
    return (in * h + oy) * w + ox;
  }

  // Displacement of tap `tap` at position `pos` relative to the regular
  // (dilation 1) grid, as reals.
  double dy(std::int64_t pos, int tap) const;
  double dx(std::int64_t pos, int tap) const;
  std::int32_t d(std::int64_t pos) const { return ints[static_cast<std::size_t>(pos)]; }

  // Checks storage sizes and the range invariants of the mode.
  void validate() const;
  // Free-fractional copy (integer and square fields expanded per tap).
  OffsetField as_fractional() const;

  bool operator==(const OffsetField&) const = default;
};

// Direct convolution with zero padding.
FloatTensor conv_ref(const FloatTensor& x, const FloatTensor& w, const ConvSpec& spec);

// Four-neighbour bilinear sample of channel `c` at real (py, px); neighbours
// outside the image read as zero.
double bilinear_sample(const FloatTensor& x, std::int64_t n, double py, double px,
                       std::int64_t c);

// 3x3 deformable convolution on fractional offsets (depthwise or full per
// spec). Throws ParamError unless `off` is free-fractional.
FloatTensor deform_conv_ref(const FloatTensor& x, const FloatTensor& w,
                            const OffsetField& off, const ConvSpec& spec);

// Rounds (half away from zero) then clamps every displacement into
// [lo, hi]. Free fields become kBoundedInt; square fields stay square with
// d clamped into [max(lo, 0), hi].
OffsetField clip_offsets(const OffsetField& off, int lo, int hi);

// Tap displacements {-d, 0, d} x {-d, 0, d}, tap-major (ky * 3 + kx).
std::array<std::array<int, 2>, kTaps> square_expand(std::int32_t d);

// Integer 3x3 depthwise deformable convolution: direct gather at integer
// displacements, int32 accumulation, requantization. Out-of-image samples
// read zero.
QuantTensor deform_conv_q(const QuantTensor& x, const QuantTensor& w, const OffsetField& off,
                          const ConvSpec& spec, const RequantParams& rp,
                          const RequantOptions& options = {});
AccumTensor deform_conv_q_acc(const QuantTensor& x, const QuantTensor& w,
                              const OffsetField& off, const ConvSpec& spec);

// Integer regular 3x3 depthwise convolution (the engine with its offset
// displacement hard-wired to 1).
QuantTensor dwconv3x3_q(const QuantTensor& x, const QuantTensor& w, const ConvSpec& spec,
                        const RequantParams& rp, const RequantOptions& options = {});
AccumTensor dwconv3x3_q_acc(const QuantTensor& x, const QuantTensor& w, const ConvSpec& spec);

// Integer 1x1 convolution; weights (1, 1, ic, oc). The reduction is
// traversed in 16x16 channel tiles, which never changes the result.
QuantTensor conv1x1_q(const QuantTensor& x, const QuantTensor& w, const RequantParams& rp,
                      const RequantOptions& options = {});
AccumTensor conv1x1_q_acc(const QuantTensor& x, const QuantTensor& w);

enum class OffsetRounding : std::uint8_t {
  kRequantizeThenRound,  // requantize to 8-bit codes, then round code * step
  kDirect,               // round the rescaled accumulator directly
};

struct OffsetGenOptions {
  OffsetMode mode = OffsetMode::kBoundedInt;  // kBoundedInt (18 ch) or kSquare (1 ch)
  int lo = -8;
  int hi = 7;
  OffsetRounding rounding = OffsetRounding::kRequantizeThenRound;
};

// 1x1 convolution producing integer sampling offsets. `rp.out_delta` is
// the offset unit of one output code.
OffsetField offset_gen(const QuantTensor& x, const QuantTensor& w_off, const RequantParams& rp,
                       const OffsetGenOptions& options = {});

// Layout and pooling operators executed on the host.
QuantTensor maxpool2x2(const QuantTensor& x);
QuantTensor upsample2x_nearest(const QuantTensor& x);
std::array<QuantTensor, 2> split_half(const QuantTensor& x);
QuantTensor concat_channels(const QuantTensor& a, const QuantTensor& b);
// Channel shuffle with `groups` groups; `inverse` undoes it.
QuantTensor channel_shuffle(const QuantTensor& x, int groups = 2, bool inverse = false);

FloatTensor maxpool2x2(const FloatTensor& x);
FloatTensor upsample2x_nearest(const FloatTensor& x);
std::array<FloatTensor, 2> split_half(const FloatTensor& x);
FloatTensor concat_channels(const FloatTensor& a, const FloatTensor& b);
FloatTensor channel_shuffle(const FloatTensor& x, int groups = 2, bool inverse = false);
FloatTensor relu(const FloatTensor& x);

}  // namespace dfx

#endif  // DFX_OPS_HPP_
