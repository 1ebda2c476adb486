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

#include "dfx/oracle.hpp"

#include <cmath>
#include <vector>

#include "dfx/error.hpp"

namespace dfx::oracle {

namespace {

using i128 = __int128;

// Floor division by 2^s for a possibly negative numerator.
i128 floor_div_pow2(i128 num, int s) {
  const i128 den = static_cast<i128>(1) << s;
  i128 q = num / den;
  if (num % den != 0 && num < 0) --q;
  return q;
}

QuantTensor codes_to_tensor(const Shape4& s, const std::vector<std::int32_t>& v, double delta) {
  std::vector<std::int8_t> codes(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) codes[i] = static_cast<std::int8_t>(v[i]);
  return QuantTensor(s, 8, QuantParams::from_delta(8, delta), std::move(codes));
}

std::int32_t rq(std::int64_t acc, const RequantParams& rp, std::int64_t c, bool relu) {
  return requantize_value(static_cast<std::int32_t>(acc), rp.multiplier_for(c), rp.shift_for(c),
                          rp.bias_for(c), relu);
}

}  // namespace

std::int32_t requantize_value(std::int32_t acc, std::int32_t multiplier, int shift,
                              std::int32_t bias, bool relu) {
  i128 v = static_cast<i128>(acc) * multiplier;
  if (shift > 0) v = floor_div_pow2(v + (static_cast<i128>(1) << (shift - 1)), shift);
  v += bias;
  if (v > 127) v = 127;
  if (v < -127) v = -127;
  if (relu && v < 0) v = 0;
  return static_cast<std::int32_t>(v);
}

QuantTensor requantize(const AccumTensor& acc, const RequantParams& rp, bool relu) {
  const Shape4& s = acc.shape();
  std::vector<std::int32_t> out;
  for (std::int64_t n = 0; n < s.n; ++n)
    for (std::int64_t y = 0; y < s.h; ++y)
      for (std::int64_t x = 0; x < s.w; ++x)
        for (std::int64_t c = 0; c < s.c; ++c) out.push_back(rq(acc(n, y, x, c), rp, c, relu));
  return codes_to_tensor(s, out, rp.out_delta);
}

QuantTensor conv1x1(const QuantTensor& x, const QuantTensor& w, const RequantParams& rp,
                    bool relu) {
  const Shape4& s = x.shape();
  const std::int64_t oc = w.shape().c;
  if (w.shape().w != s.c) throw ShapeError("oracle conv1x1: weight ic mismatch");
  std::vector<std::int32_t> out;
  for (std::int64_t n = 0; n < s.n; ++n)
    for (std::int64_t y = 0; y < s.h; ++y)
      for (std::int64_t xx = 0; xx < s.w; ++xx)
        for (std::int64_t o = 0; o < oc; ++o) {
          std::int64_t sum = 0;
          for (std::int64_t i = 0; i < s.c; ++i) sum += std::int64_t{x(n, y, xx, i)} * w(0, 0, i, o);
          out.push_back(rq(sum, rp, o, relu));
        }
  return codes_to_tensor({s.n, s.h, s.w, oc}, out, rp.out_delta);
}

QuantTensor dw3x3(const QuantTensor& x, const QuantTensor& w, int stride,
                  const RequantParams& rp, bool relu) {
  const Shape4& s = x.shape();
  const std::int64_t oh = (s.h - 1) / stride + 1;
  const std::int64_t ow = (s.w - 1) / stride + 1;
  OffsetField zero = OffsetField::zeros(OffsetMode::kBoundedInt, s.n, oh, ow, -8, 7);
  return deform_dw3x3(x, w, zero, stride, rp, relu);
}

QuantTensor deform_dw3x3(const QuantTensor& x, const QuantTensor& w, const OffsetField& off,
                         int stride, const RequantParams& rp, bool relu) {
  const Shape4& s = x.shape();
  const std::int64_t oh = (s.h - 1) / stride + 1;
  const std::int64_t ow = (s.w - 1) / stride + 1;
  if (off.n != s.n || off.h != oh || off.w != ow) throw ShapeError("oracle deform: offset dims");
  if (!off.is_integer()) throw ParamError("oracle deform: integer offsets only");
  std::vector<std::int32_t> out;
  for (std::int64_t n = 0; n < s.n; ++n)
    for (std::int64_t oy = 0; oy < oh; ++oy)
      for (std::int64_t ox = 0; ox < ow; ++ox) {
        const std::int64_t pos = (n * oh + oy) * ow + ox;
        for (std::int64_t c = 0; c < s.c; ++c) {
          std::int64_t sum = 0;
          for (int ky = 0; ky < 3; ++ky)
            for (int kx = 0; kx < 3; ++kx) {
              std::int64_t sy = 0;
              std::int64_t sx = 0;
              if (off.mode == OffsetMode::kSquare) {
                const std::int64_t d = off.ints[static_cast<std::size_t>(pos)];
                sy = (ky - 1) * d;
                sx = (kx - 1) * d;
              } else {
                const auto base = static_cast<std::size_t>(pos * 18 + (ky * 3 + kx) * 2);
                sy = (ky - 1) + off.ints[base];
                sx = (kx - 1) + off.ints[base + 1];
              }
              const std::int64_t iy = oy * stride + sy;
              const std::int64_t ix = ox * stride + sx;
              if (iy < 0 || iy >= s.h || ix < 0 || ix >= s.w) continue;
              sum += std::int64_t{x(n, iy, ix, c)} * w(ky, kx, 0, c);
            }
          out.push_back(rq(sum, rp, c, relu));
        }
      }
  return codes_to_tensor({s.n, oh, ow, s.c}, out, rp.out_delta);
}

OffsetField offset_gen_square(const QuantTensor& x, const QuantTensor& w_off,
                              const RequantParams& rp, int lo, int hi) {
  const Shape4& s = x.shape();
  if (w_off.shape().c != 1 || w_off.shape().w != s.c) throw ShapeError("oracle offset_gen: weights");
  OffsetField f = OffsetField::zeros(OffsetMode::kSquare, s.n, s.h, s.w, lo, hi);
  const int floor_lo = lo > 0 ? lo : 0;
  for (std::int64_t n = 0; n < s.n; ++n)
    for (std::int64_t y = 0; y < s.h; ++y)
      for (std::int64_t xx = 0; xx < s.w; ++xx) {
        std::int64_t sum = 0;
        for (std::int64_t i = 0; i < s.c; ++i) sum += std::int64_t{x(n, y, xx, i)} * w_off(0, 0, i, 0);
        const double v = std::round(rq(sum, rp, 0, false) * rp.out_delta);
        double d = v < floor_lo ? floor_lo : v;
        if (d > hi) d = hi;
        f.ints[static_cast<std::size_t>((n * s.h + y) * s.w + xx)] = static_cast<std::int32_t>(d);
      }
  return f;
}

QuantTensor maxpool2x2(const QuantTensor& x) {
  const Shape4& s = x.shape();
  const Shape4 o{s.n, s.h / 2, s.w / 2, s.c};
  std::vector<std::int32_t> out;
  for (std::int64_t n = 0; n < o.n; ++n)
    for (std::int64_t y = 0; y < o.h; ++y)
      for (std::int64_t xx = 0; xx < o.w; ++xx)
        for (std::int64_t c = 0; c < o.c; ++c) {
          int m = x(n, 2 * y, 2 * xx, c);
          for (int k = 1; k < 4; ++k) {
            const int v = x(n, 2 * y + k / 2, 2 * xx + k % 2, c);
            if (v > m) m = v;
          }
          out.push_back(m);
        }
  return codes_to_tensor(o, out, x.qparams().deltas[0]);
}

QuantTensor upsample2x(const QuantTensor& x) {
  const Shape4& s = x.shape();
  const Shape4 o{s.n, s.h * 2, s.w * 2, s.c};
  std::vector<std::int32_t> out;
  for (std::int64_t n = 0; n < o.n; ++n)
    for (std::int64_t y = 0; y < o.h; ++y)
      for (std::int64_t xx = 0; xx < o.w; ++xx)
        for (std::int64_t c = 0; c < o.c; ++c) out.push_back(x(n, y / 2, xx / 2, c));
  return codes_to_tensor(o, out, x.qparams().deltas[0]);
}

QuantTensor shuffle2(const QuantTensor& x) {
  const Shape4& s = x.shape();
  if (s.c % 2 != 0) throw ShapeError("oracle shuffle: odd channel count");
  const std::int64_t half = s.c / 2;
  std::vector<std::int32_t> out;
  for (std::int64_t n = 0; n < s.n; ++n)
    for (std::int64_t y = 0; y < s.h; ++y)
      for (std::int64_t xx = 0; xx < s.w; ++xx)
        for (std::int64_t c = 0; c < s.c; ++c) out.push_back(x(n, y, xx, (c % 2) * half + c / 2));
  return codes_to_tensor(s, out, x.qparams().deltas[0]);
}

}  // namespace dfx::oracle
