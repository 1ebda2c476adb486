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

#include "dfx/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace dfx {

namespace {

void check_output_shape(const OffsetField& off, const Shape4& out) {
  if (off.n != out.n || off.h != out.h || off.w != out.w) {
    throw ShapeError("offset field (" + std::to_string(off.n) + "," + std::to_string(off.h) +
                     "," + std::to_string(off.w) + ") does not match output " + out.str());
  }
}

void check_conv_weights(const Shape4& x, const Shape4& w, const ConvSpec& spec) {
  const Shape4 expected = spec.weight_shape(x.c, w.c);
  if (w != expected) {
    throw ShapeError("weight shape " + w.str() + " does not match " + expected.str() +
                     " for input " + x.str());
  }
  if (spec.depthwise && w.c != x.c) {
    throw ShapeError("depthwise weights need oc == ic, got " + std::to_string(w.c) +
                     " for " + std::to_string(x.c) + " channels");
  }
  if (spec.out_dim(x.h) < 1 || spec.out_dim(x.w) < 1) {
    throw ShapeError("input " + x.str() + " too small for kernel");
  }
}

// Input coordinate of tap row/col `k` for output coordinate `o`.
std::int64_t tap_origin(const ConvSpec& spec, std::int64_t o, int k) {
  return o * spec.stride - spec.padding + k;
}

template <typename T>
T pooled_max(const Tensor<T>& x, std::int64_t n, std::int64_t y, std::int64_t xx,
             std::int64_t c) {
  return std::max({x(n, 2 * y, 2 * xx, c), x(n, 2 * y, 2 * xx + 1, c),
                   x(n, 2 * y + 1, 2 * xx, c), x(n, 2 * y + 1, 2 * xx + 1, c)});
}

std::int64_t shuffle_source(std::int64_t c, std::int64_t channels, int groups, bool inverse) {
  const std::int64_t per_group = channels / groups;
  // Forward: out[i * groups + j] = in[j * per_group + i].
  if (!inverse) return (c % groups) * per_group + c / groups;
  return (c % per_group) * groups + c / per_group;
}

void check_shuffle(const Shape4& s, int groups) {
  if (groups < 1 || s.c % groups != 0) {
    throw ShapeError("cannot shuffle " + std::to_string(s.c) + " channels into " +
                     std::to_string(groups) + " groups");
  }
}

}  // namespace

void ConvSpec::validate() const {
  if (kernel != 1 && kernel != 3) {
    throw ParamError("unsupported kernel size " + std::to_string(kernel));
  }
  if (stride != 1 && stride != 2 && stride != 4) {
    throw ParamError("unsupported stride " + std::to_string(stride));
  }
  if (padding < 0) throw ParamError("negative padding");
}

const char* to_string(OffsetMode mode) {
  switch (mode) {
    case OffsetMode::kFreeFrac: return "free_frac";
    case OffsetMode::kFreeInt: return "free_int";
    case OffsetMode::kBoundedInt: return "bounded_int";
    case OffsetMode::kSquare: return "square";
  }
  return "?";
}

OffsetField OffsetField::zeros(OffsetMode mode, std::int64_t n, std::int64_t h, std::int64_t w,
                               int lo, int hi) {
  OffsetField f;
  f.mode = mode;
  f.n = n;
  f.h = h;
  f.w = w;
  f.lo = lo;
  f.hi = hi;
  const auto per = static_cast<std::size_t>(n * h * w);
  if (mode == OffsetMode::kFreeFrac) {
    f.frac.assign(per * 2 * kTaps, 0.0F);
  } else {
    f.ints.assign(mode == OffsetMode::kSquare ? per : per * 2 * kTaps, 0);
  }
  return f;
}

OffsetField OffsetField::uniform_square(std::int64_t n, std::int64_t h, std::int64_t w,
                                        std::int32_t d, int hi) {
  OffsetField f = zeros(OffsetMode::kSquare, n, h, w, 0, hi);
  std::fill(f.ints.begin(), f.ints.end(), d);
  return f;
}

double OffsetField::dy(std::int64_t pos, int tap) const {
  const auto i = static_cast<std::size_t>(pos * 2 * kTaps + 2 * tap);
  switch (mode) {
    case OffsetMode::kFreeFrac: return frac[i];
    case OffsetMode::kFreeInt:
    case OffsetMode::kBoundedInt: return ints[i];
    case OffsetMode::kSquare: return (tap / 3 - 1) * (d(pos) - 1);
  }
  return 0.0;
}

double OffsetField::dx(std::int64_t pos, int tap) const {
  const auto i = static_cast<std::size_t>(pos * 2 * kTaps + 2 * tap + 1);
  switch (mode) {
    case OffsetMode::kFreeFrac: return frac[i];
    case OffsetMode::kFreeInt:
    case OffsetMode::kBoundedInt: return ints[i];
    case OffsetMode::kSquare: return (tap % 3 - 1) * (d(pos) - 1);
  }
  return 0.0;
}

void OffsetField::validate() const {
  if (n < 1 || h < 1 || w < 1) throw ShapeError("offset field dims must be >= 1");
  if (lo > hi) throw ParamError("offset range lo > hi");
  const auto per = static_cast<std::size_t>(positions());
  if (mode == OffsetMode::kFreeFrac) {
    if (frac.size() != per * 2 * kTaps) throw ShapeError("offset field storage size mismatch");
    return;
  }
  const std::size_t expected = mode == OffsetMode::kSquare ? per : per * 2 * kTaps;
  if (ints.size() != expected) throw ShapeError("offset field storage size mismatch");
  if (mode == OffsetMode::kBoundedInt) {
    for (std::int32_t v : ints) {
      if (v < lo || v > hi) throw RangeError("bounded offset " + std::to_string(v) + " outside range");
    }
  } else if (mode == OffsetMode::kSquare) {
    for (std::int32_t v : ints) {
      if (v < 0 || v > hi) throw RangeError("square offset " + std::to_string(v) + " outside range");
    }
  }
}

OffsetField OffsetField::as_fractional() const {
  OffsetField f = zeros(OffsetMode::kFreeFrac, n, h, w, lo, hi);
  for (std::int64_t p = 0; p < positions(); ++p) {
    for (int t = 0; t < kTaps; ++t) {
      f.frac[static_cast<std::size_t>(p * 2 * kTaps + 2 * t)] = static_cast<float>(dy(p, t));
      f.frac[static_cast<std::size_t>(p * 2 * kTaps + 2 * t + 1)] = static_cast<float>(dx(p, t));
    }
  }
  return f;
}

FloatTensor conv_ref(const FloatTensor& x, const FloatTensor& w, const ConvSpec& spec) {
  spec.validate();
  const Shape4& xs = x.shape();
  check_conv_weights(xs, w.shape(), spec);
  const std::int64_t oc_count = w.shape().c;
  FloatTensor out(spec.out_shape(xs, oc_count));
  const Shape4& os = out.shape();
  for (std::int64_t n = 0; n < os.n; ++n) {
    for (std::int64_t oy = 0; oy < os.h; ++oy) {
      for (std::int64_t ox = 0; ox < os.w; ++ox) {
        for (std::int64_t oc = 0; oc < oc_count; ++oc) {
          double acc = 0.0;
          for (int ky = 0; ky < spec.kernel; ++ky) {
            const std::int64_t iy = tap_origin(spec, oy, ky);
            if (iy < 0 || iy >= xs.h) continue;
            for (int kx = 0; kx < spec.kernel; ++kx) {
              const std::int64_t ix = tap_origin(spec, ox, kx);
              if (ix < 0 || ix >= xs.w) continue;
              if (spec.depthwise) {
                acc += static_cast<double>(x(n, iy, ix, oc)) * w(ky, kx, 0, oc);
              } else {
                for (std::int64_t ic = 0; ic < xs.c; ++ic) {
                  acc += static_cast<double>(x(n, iy, ix, ic)) * w(ky, kx, ic, oc);
                }
              }
            }
          }
          out(n, oy, ox, oc) = static_cast<float>(acc);
        }
      }
    }
  }
  return out;
}

double bilinear_sample(const FloatTensor& x, std::int64_t n, double py, double px,
                       std::int64_t c) {
  const Shape4& s = x.shape();
  const double fy0 = std::floor(py);
  const double fx0 = std::floor(px);
  const double fy = py - fy0;
  const double fx = px - fx0;
  const auto y0 = static_cast<std::int64_t>(fy0);
  const auto x0 = static_cast<std::int64_t>(fx0);
  auto value = [&](std::int64_t y, std::int64_t xx) -> double {
    if (y < 0 || y >= s.h || xx < 0 || xx >= s.w) return 0.0;
    return x(n, y, xx, c);
  };
  double acc = 0.0;
  // Zero-weight neighbours are skipped so integer coordinates never touch
  // the (possibly out-of-image) right/bottom neighbour.
  if (fy < 1.0 && fx < 1.0) acc += (1.0 - fy) * (1.0 - fx) * value(y0, x0);
  if (fy < 1.0 && fx > 0.0) acc += (1.0 - fy) * fx * value(y0, x0 + 1);
  if (fy > 0.0 && fx < 1.0) acc += fy * (1.0 - fx) * value(y0 + 1, x0);
  if (fy > 0.0 && fx > 0.0) acc += fy * fx * value(y0 + 1, x0 + 1);
  return acc;
}

FloatTensor deform_conv_ref(const FloatTensor& x, const FloatTensor& w,
                            const OffsetField& off, const ConvSpec& spec) {
  if (off.mode != OffsetMode::kFreeFrac) {
    throw ParamError(std::string("deform_conv_ref needs free_frac offsets, got ") +
                     to_string(off.mode));
  }
  if (spec.kernel != 3) throw ParamError("deformable convolution needs a 3x3 kernel");
  spec.validate();
  off.validate();
  const Shape4& xs = x.shape();
  check_conv_weights(xs, w.shape(), spec);
  const std::int64_t oc_count = w.shape().c;
  FloatTensor out(spec.out_shape(xs, oc_count));
  const Shape4& os = out.shape();
  check_output_shape(off, os);

  std::vector<double> samples(static_cast<std::size_t>(kTaps * xs.c));
  for (std::int64_t n = 0; n < os.n; ++n) {
    for (std::int64_t oy = 0; oy < os.h; ++oy) {
      for (std::int64_t ox = 0; ox < os.w; ++ox) {
        const std::int64_t pos = off.index(n, oy, ox);
        for (int t = 0; t < kTaps; ++t) {
          const double py = static_cast<double>(tap_origin(spec, oy, t / 3)) + off.dy(pos, t);
          const double px = static_cast<double>(tap_origin(spec, ox, t % 3)) + off.dx(pos, t);
          for (std::int64_t c = 0; c < xs.c; ++c) {
            samples[static_cast<std::size_t>(t * xs.c + c)] = bilinear_sample(x, n, py, px, c);
          }
        }
        for (std::int64_t oc = 0; oc < oc_count; ++oc) {
          double acc = 0.0;
          for (int t = 0; t < kTaps; ++t) {
            if (spec.depthwise) {
              acc += samples[static_cast<std::size_t>(t * xs.c + oc)] * w(t / 3, t % 3, 0, oc);
            } else {
              for (std::int64_t ic = 0; ic < xs.c; ++ic) {
                acc += samples[static_cast<std::size_t>(t * xs.c + ic)] * w(t / 3, t % 3, ic, oc);
              }
            }
          }
          out(n, oy, ox, oc) = static_cast<float>(acc);
        }
      }
    }
  }
  return out;
}

OffsetField clip_offsets(const OffsetField& off, int lo, int hi) {
  if (lo > hi) {
    throw ParamError("offset range lo " + std::to_string(lo) + " > hi " + std::to_string(hi));
  }
  OffsetField out;
  out.n = off.n;
  out.h = off.h;
  out.w = off.w;
  out.lo = lo;
  out.hi = hi;
  auto clip = [](double v, int a, int b) {
    return static_cast<std::int32_t>(std::clamp(round_half_away(v), double(a), double(b)));
  };
  if (off.mode == OffsetMode::kSquare) {
    out.mode = OffsetMode::kSquare;
    out.ints.resize(off.ints.size());
    const int square_lo = std::max(lo, 0);
    if (square_lo > hi) throw ParamError("square offsets need hi >= 0");
    for (std::size_t i = 0; i < off.ints.size(); ++i) out.ints[i] = clip(off.ints[i], square_lo, hi);
    return out;
  }
  out.mode = OffsetMode::kBoundedInt;
  if (off.mode == OffsetMode::kFreeFrac) {
    out.ints.resize(off.frac.size());
    for (std::size_t i = 0; i < off.frac.size(); ++i) out.ints[i] = clip(off.frac[i], lo, hi);
  } else {
    out.ints.resize(off.ints.size());
    for (std::size_t i = 0; i < off.ints.size(); ++i) out.ints[i] = clip(off.ints[i], lo, hi);
  }
  return out;
}

std::array<std::array<int, 2>, kTaps> square_expand(std::int32_t d) {
  std::array<std::array<int, 2>, kTaps> taps{};
  for (int t = 0; t < kTaps; ++t) {
    taps[static_cast<std::size_t>(t)] = {(t / 3 - 1) * d, (t % 3 - 1) * d};
  }
  return taps;
}

AccumTensor deform_conv_q_acc(const QuantTensor& x, const QuantTensor& w,
                              const OffsetField& off, const ConvSpec& spec) {
  if (!off.is_integer()) {
    throw ParamError("integer deformable convolution needs integer offsets, got free_frac");
  }
  if (spec.kernel != 3 || !spec.depthwise) {
    throw ParamError("integer deformable convolution runs 3x3 depthwise only");
  }
  spec.validate();
  off.validate();
  const Shape4& xs = x.shape();
  check_conv_weights(xs, w.shape(), spec);
  AccumTensor acc(spec.out_shape(xs, xs.c), 0);
  const Shape4& os = acc.shape();
  check_output_shape(off, os);

  const bool square = off.mode == OffsetMode::kSquare;
  for (std::int64_t n = 0; n < os.n; ++n) {
    for (std::int64_t oy = 0; oy < os.h; ++oy) {
      for (std::int64_t ox = 0; ox < os.w; ++ox) {
        const std::int64_t pos = off.index(n, oy, ox);
        std::int32_t* out = &acc(n, oy, ox, 0);
        for (int t = 0; t < kTaps; ++t) {
          std::int64_t iy = 0;
          std::int64_t ix = 0;
          if (square) {
            const std::int32_t d = off.d(pos);
            iy = tap_origin(spec, oy, 1) + (t / 3 - 1) * d;
            ix = tap_origin(spec, ox, 1) + (t % 3 - 1) * d;
          } else {
            const auto i = static_cast<std::size_t>(pos * 2 * kTaps + 2 * t);
            iy = tap_origin(spec, oy, t / 3) + off.ints[i];
            ix = tap_origin(spec, ox, t % 3) + off.ints[i + 1];
          }
          if (iy < 0 || iy >= xs.h || ix < 0 || ix >= xs.w) continue;
          for (std::int64_t c = 0; c < xs.c; ++c) {
            out[c] += static_cast<std::int32_t>(x(n, iy, ix, c)) * w(t / 3, t % 3, 0, c);
          }
        }
      }
    }
  }
  return acc;
}

QuantTensor deform_conv_q(const QuantTensor& x, const QuantTensor& w, const OffsetField& off,
                          const ConvSpec& spec, const RequantParams& rp,
                          const RequantOptions& options) {
  return requantize(deform_conv_q_acc(x, w, off, spec), rp, options);
}

AccumTensor dwconv3x3_q_acc(const QuantTensor& x, const QuantTensor& w, const ConvSpec& spec) {
  if (spec.kernel != 3 || !spec.depthwise) throw ParamError("dwconv3x3_q needs a 3x3 depthwise spec");
  spec.validate();
  const Shape4& xs = x.shape();
  check_conv_weights(xs, w.shape(), spec);
  AccumTensor acc(spec.out_shape(xs, xs.c), 0);
  const Shape4& os = acc.shape();
  for (std::int64_t n = 0; n < os.n; ++n) {
    for (std::int64_t oy = 0; oy < os.h; ++oy) {
      for (std::int64_t ox = 0; ox < os.w; ++ox) {
        std::int32_t* out = &acc(n, oy, ox, 0);
        for (int ky = 0; ky < 3; ++ky) {
          const std::int64_t iy = tap_origin(spec, oy, ky);
          if (iy < 0 || iy >= xs.h) continue;
          for (int kx = 0; kx < 3; ++kx) {
            const std::int64_t ix = tap_origin(spec, ox, kx);
            if (ix < 0 || ix >= xs.w) continue;
            for (std::int64_t c = 0; c < xs.c; ++c) {
              out[c] += static_cast<std::int32_t>(x(n, iy, ix, c)) * w(ky, kx, 0, c);
            }
          }
        }
      }
    }
  }
  return acc;
}

QuantTensor dwconv3x3_q(const QuantTensor& x, const QuantTensor& w, const ConvSpec& spec,
                        const RequantParams& rp, const RequantOptions& options) {
  return requantize(dwconv3x3_q_acc(x, w, spec), rp, options);
}

AccumTensor conv1x1_q_acc(const QuantTensor& x, const QuantTensor& w) {
  const Shape4& xs = x.shape();
  const Shape4& ws = w.shape();
  if (ws.n != 1 || ws.h != 1 || ws.w != xs.c) {
    throw ShapeError("1x1 weight shape " + ws.str() + " does not match input " + xs.str());
  }
  constexpr std::int64_t kTile = 16;
  const std::int64_t ic_count = xs.c;
  const std::int64_t oc_count = ws.c;
  AccumTensor acc(Shape4{xs.n, xs.h, xs.w, oc_count}, 0);
  const std::int64_t positions = xs.n * xs.h * xs.w;
  auto xc = x.codes();
  auto wc = w.codes();
  auto out = acc.data();
  for (std::int64_t p = 0; p < positions; ++p) {
    const std::int8_t* in = xc.data() + p * ic_count;
    std::int32_t* o = out.data() + p * oc_count;
    for (std::int64_t ob = 0; ob < oc_count; ob += kTile) {
      const std::int64_t oe = std::min(ob + kTile, oc_count);
      for (std::int64_t ib = 0; ib < ic_count; ib += kTile) {
        const std::int64_t ie = std::min(ib + kTile, ic_count);
        for (std::int64_t ic = ib; ic < ie; ++ic) {
          const std::int32_t v = in[ic];
          const std::int8_t* wrow = wc.data() + ic * oc_count;
          for (std::int64_t oc = ob; oc < oe; ++oc) o[oc] += v * wrow[oc];
        }
      }
    }
  }
  return acc;
}

QuantTensor conv1x1_q(const QuantTensor& x, const QuantTensor& w, const RequantParams& rp,
                      const RequantOptions& options) {
  return requantize(conv1x1_q_acc(x, w), rp, options);
}

OffsetField offset_gen(const QuantTensor& x, const QuantTensor& w_off, const RequantParams& rp,
                       const OffsetGenOptions& options) {
  if (options.mode != OffsetMode::kBoundedInt && options.mode != OffsetMode::kSquare) {
    throw ParamError("offset_gen produces bounded_int or square offsets");
  }
  const std::int64_t want = options.mode == OffsetMode::kSquare ? 1 : 2 * kTaps;
  if (w_off.shape().c != want) {
    throw ShapeError("offset conv has " + std::to_string(w_off.shape().c) +
                     " output channels; " + to_string(options.mode) + " needs " +
                     std::to_string(want));
  }
  const AccumTensor acc = conv1x1_q_acc(x, w_off);
  rp.validate(want);
  const Shape4& s = acc.shape();
  OffsetField raw = OffsetField::zeros(options.mode == OffsetMode::kSquare ? OffsetMode::kSquare
                                                                           : OffsetMode::kFreeInt,
                                       s.n, s.h, s.w, options.lo, options.hi);
  auto a = acc.data();
  std::vector<double> values(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto c = static_cast<std::int64_t>(i) % want;
    if (options.rounding == OffsetRounding::kRequantizeThenRound) {
      const std::int32_t code = requantize_value(a[i], rp.multiplier_for(c), rp.shift_for(c),
                                                 rp.bias_for(c), false);
      values[i] = code * rp.out_delta;
    } else {
      values[i] = (a[i] * rp.factor(c) + rp.bias_for(c)) * rp.out_delta;
    }
  }
  // Square offsets are clipped into [max(lo, 0), hi] by clip_offsets.
  if (options.mode == OffsetMode::kSquare) {
    for (std::size_t i = 0; i < values.size(); ++i) {
      raw.ints[i] = static_cast<std::int32_t>(
          std::clamp(round_half_away(values[i]), -1e9, 1e9));
    }
    return clip_offsets(raw, options.lo, options.hi);
  }
  OffsetField frac = OffsetField::zeros(OffsetMode::kFreeFrac, s.n, s.h, s.w, options.lo, options.hi);
  for (std::size_t i = 0; i < values.size(); ++i) frac.frac[i] = static_cast<float>(values[i]);
  return clip_offsets(frac, options.lo, options.hi);
}

namespace {

template <typename T>
Tensor<T> maxpool_impl(const Tensor<T>& x) {
  const Shape4& s = x.shape();
  if (s.h < 2 || s.w < 2) throw ShapeError("maxpool2x2 needs h, w >= 2, got " + s.str());
  Tensor<T> out(Shape4{s.n, s.h / 2, s.w / 2, s.c});
  const Shape4& o = out.shape();
  for (std::int64_t n = 0; n < o.n; ++n)
    for (std::int64_t y = 0; y < o.h; ++y)
      for (std::int64_t xx = 0; xx < o.w; ++xx)
        for (std::int64_t c = 0; c < o.c; ++c) out(n, y, xx, c) = pooled_max(x, n, y, xx, c);
  return out;
}

template <typename T>
Tensor<T> upsample_impl(const Tensor<T>& x) {
  const Shape4& s = x.shape();
  Tensor<T> out(Shape4{s.n, s.h * 2, s.w * 2, s.c});
  const Shape4& o = out.shape();
  for (std::int64_t n = 0; n < o.n; ++n)
    for (std::int64_t y = 0; y < o.h; ++y)
      for (std::int64_t xx = 0; xx < o.w; ++xx)
        for (std::int64_t c = 0; c < o.c; ++c) out(n, y, xx, c) = x(n, y / 2, xx / 2, c);
  return out;
}

template <typename T>
std::array<Tensor<T>, 2> split_impl(const Tensor<T>& x) {
  const Shape4& s = x.shape();
  if (s.c % 2 != 0) throw ShapeError("split_half needs an even channel count, got " + s.str());
  const std::int64_t half = s.c / 2;
  std::array<Tensor<T>, 2> out{Tensor<T>(Shape4{s.n, s.h, s.w, half}),
                               Tensor<T>(Shape4{s.n, s.h, s.w, half})};
  const std::int64_t positions = s.n * s.h * s.w;
  auto src = x.data();
  for (std::int64_t p = 0; p < positions; ++p) {
    std::copy_n(src.data() + p * s.c, half, out[0].data().data() + p * half);
    std::copy_n(src.data() + p * s.c + half, half, out[1].data().data() + p * half);
  }
  return out;
}

template <typename T>
Tensor<T> concat_impl(const Tensor<T>& a, const Tensor<T>& b) {
  const Shape4& sa = a.shape();
  const Shape4& sb = b.shape();
  if (sa.n != sb.n || sa.h != sb.h || sa.w != sb.w) {
    throw ShapeError("concat spatial mismatch " + sa.str() + " vs " + sb.str());
  }
  Tensor<T> out(Shape4{sa.n, sa.h, sa.w, sa.c + sb.c});
  const std::int64_t positions = sa.n * sa.h * sa.w;
  auto dst = out.data();
  for (std::int64_t p = 0; p < positions; ++p) {
    std::copy_n(a.data().data() + p * sa.c, sa.c, dst.data() + p * (sa.c + sb.c));
    std::copy_n(b.data().data() + p * sb.c, sb.c, dst.data() + p * (sa.c + sb.c) + sa.c);
  }
  return out;
}

template <typename T>
Tensor<T> shuffle_impl(const Tensor<T>& x, int groups, bool inverse) {
  const Shape4& s = x.shape();
  check_shuffle(s, groups);
  Tensor<T> out(s);
  const std::int64_t positions = s.n * s.h * s.w;
  auto src = x.data();
  auto dst = out.data();
  for (std::int64_t p = 0; p < positions; ++p)
    for (std::int64_t c = 0; c < s.c; ++c)
      dst[static_cast<std::size_t>(p * s.c + c)] =
          src[static_cast<std::size_t>(p * s.c + shuffle_source(c, s.c, groups, inverse))];
  return out;
}

Tensor<std::int8_t> codes_of(const QuantTensor& q) {
  return Tensor<std::int8_t>(q.shape(), std::vector<std::int8_t>(q.codes().begin(), q.codes().end()));
}

QuantTensor with_codes(const Tensor<std::int8_t>& t, const QuantTensor& like) {
  return QuantTensor(t.shape(), like.bits(), like.qparams(), t.storage());
}

}  // namespace

QuantTensor maxpool2x2(const QuantTensor& x) { return with_codes(maxpool_impl(codes_of(x)), x); }
QuantTensor upsample2x_nearest(const QuantTensor& x) {
  return with_codes(upsample_impl(codes_of(x)), x);
}
std::array<QuantTensor, 2> split_half(const QuantTensor& x) {
  if (x.qparams().granularity != Granularity::kPerLayer) {
    throw ParamError("split_half needs per-layer activation params");
  }
  auto halves = split_impl(codes_of(x));
  return {with_codes(halves[0], x), with_codes(halves[1], x)};
}
QuantTensor concat_channels(const QuantTensor& a, const QuantTensor& b) {
  if (a.bits() != b.bits() || a.qparams() != b.qparams()) {
    throw ParamError("concat inputs must share quantization params");
  }
  return with_codes(concat_impl(codes_of(a), codes_of(b)), a);
}
QuantTensor channel_shuffle(const QuantTensor& x, int groups, bool inverse) {
  if (x.qparams().granularity != Granularity::kPerLayer) {
    throw ParamError("channel_shuffle needs per-layer activation params");
  }
  return with_codes(shuffle_impl(codes_of(x), groups, inverse), x);
}

FloatTensor maxpool2x2(const FloatTensor& x) { return maxpool_impl(x); }
FloatTensor upsample2x_nearest(const FloatTensor& x) { return upsample_impl(x); }
std::array<FloatTensor, 2> split_half(const FloatTensor& x) { return split_impl(x); }
FloatTensor concat_channels(const FloatTensor& a, const FloatTensor& b) { return concat_impl(a, b); }
FloatTensor channel_shuffle(const FloatTensor& x, int groups, bool inverse) {
  return shuffle_impl(x, groups, inverse);
}
FloatTensor relu(const FloatTensor& x) {
  FloatTensor out = x;
  for (float& v : out.data()) v = std::max(v, 0.0F);
  return out;
}

}  // namespace dfx
