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

// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. Criteria 1, 4 and 10 drive the dfx binary itself.

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "dfx/detect.hpp"
#include "dfx/memsim.hpp"
#include "dfx/ops.hpp"
#include "dfx/oracle.hpp"
#include "dfx/quant.hpp"
#include "dfx/rng.hpp"

namespace fs = std::filesystem;
using namespace dfx;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

struct CliRun {
  int code = -1;
  std::string out;
};

CliRun run_cli(const std::string& args) {
  const std::string cmd = std::string(DFX_CLI) + " " + args + " 2>&1";
  CliRun r;
  FILE* p = popen(cmd.c_str(), "r");
  if (p == nullptr) return r;
  char buf[4096];
  std::size_t n = 0;
  while ((n = std::fread(buf, 1, sizeof buf, p)) > 0) r.out.append(buf, n);
  const int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

QuantTensor random_q(std::mt19937_64& rng, const Shape4& s, int bits) {
  const int q = qmax_for_bits(bits);
  std::vector<std::int8_t> codes(static_cast<std::size_t>(s.count()));
  for (auto& c : codes) c = static_cast<std::int8_t>(draw_int(rng, -q, q));
  return QuantTensor(s, bits, QuantParams::unit(bits), std::move(codes));
}

RequantParams random_rp(std::mt19937_64& rng, std::int64_t channels, int shift_lo, int shift_hi) {
  RequantParams rp;
  rp.multiplier.clear();
  rp.shift.clear();
  rp.bias.clear();
  for (std::int64_t c = 0; c < channels; ++c) {
    rp.multiplier.push_back(static_cast<std::int32_t>(draw_int(rng, std::int64_t{1} << 30, (std::int64_t{1} << 31) - 1)));
    rp.shift.push_back(static_cast<int>(draw_int(rng, shift_lo, shift_hi)));
    rp.bias.push_back(static_cast<std::int32_t>(draw_int(rng, -40, 40)));
  }
  return rp;
}

FloatTensor random_float(std::mt19937_64& rng, const Shape4& s) {
  FloatTensor t(s);
  for (float& v : t.data()) v = static_cast<float>(draw_real(rng, -1.0, 1.0));
  return t;
}

// ---------------------------------------------------------------------------

// Per-column latency order of the reference table: strict where the
// reference values differ, within 1% where they tie.
Outcome criterion1() {
  const auto t0 = std::chrono::steady_clock::now();
  const CliRun r = run_cli("bench --table2 --dims 64,64,256,256 --seed 1");
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (r.code != 0) return {false, "bench exited " + std::to_string(r.code)};
  std::istringstream in(r.out);
  std::string line;
  std::getline(in, line);
  std::map<std::string, double> lat;  // "<llc>/<op>/<variant>"
  double dw = 0;
  double full = 0;
  int rows = 0;
  while (std::getline(in, line)) {
    if (line.rfind("# speedup", 0) == 0) {
      std::sscanf(line.c_str(), "# speedup depthwise %lf full %lf", &dw, &full);
      continue;
    }
    std::vector<std::string> f;
    std::stringstream ls(line);
    for (std::string cell; std::getline(ls, cell, ',');) f.push_back(cell);
    if (f.size() != 10) return {false, "bad CSV row: " + line};
    lat[f[2] + "/" + f[1]] = std::stod(f[3]);
    ++rows;
  }
  if (rows != 16) return {false, "expected 16 rows, got " + std::to_string(rows)};
  const char* variants[4] = {"default", "deform", "bound", "square"};
  const std::map<std::string, std::array<double, 4>> reference = {
      {"0/full", {43.1, 59.0, 43.4, 43.4}},
      {"1/full", {41.6, 42.7, 41.8, 41.8}},
      {"0/depthwise", {1.9, 20.5, 3.0, 2.1}},
      {"1/depthwise", {2.0, 17.8, 3.4, 2.3}}};
  int columns_ok = 0;
  std::string bad;
  for (const auto& [col, ref] : reference) {
    bool ok = true;
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) {
        const double a = lat.at(col + "/" + variants[i]);
        const double b = lat.at(col + "/" + variants[j]);
        if (ref[static_cast<std::size_t>(i)] < ref[static_cast<std::size_t>(j)] && !(a < b)) ok = false;
        if (ref[static_cast<std::size_t>(i)] == ref[static_cast<std::size_t>(j)] && std::fabs(a / b - 1.0) > 0.01) ok = false;
      }
    columns_ok += ok;
    if (!ok) bad += " " + col;
  }
  const bool dw_ok = std::fabs(dw / 9.76 - 1.0) <= 0.30;
  const bool full_ok = std::fabs(full / 1.36 - 1.0) <= 0.30;
  Outcome o;
  o.pass = dw_ok && full_ok && columns_ok == 4 && secs < 60.0;
  o.detail = fmt("depthwise speedup %.2fx (9.76 +-30%%), full %.2fx (1.36 +-30%%), order %g/4 columns, %.2f s", dw,
                 full, columns_ok, secs) +
             (bad.empty() ? "" : ", misordered:" + bad);
  return o;
}

Outcome criterion2() {
  const TraceDims dims{16, 16, 16, 16};
  const std::int64_t want = dims.h * dims.w * dims.ic;
  MemConfig lb;
  lb.design = Design::kLineBuffer;
  lb.line_buffer_rows = 15;
  MemConfig mp = lb;
  mp.design = Design::kLineBufferMultiport;
  mp.ports = 3;
  int cases = 0;
  int bad = 0;
  auto check = [&](const OffsetField& off, const MemConfig& mem) {
    ++cases;
    if (simulate(gen_trace(ConvSpec::dw3x3(), off, dims), mem).dram_input_bytes != want) ++bad;
  };
  // Every uniform displacement pair in [0, 7]^2 and every square d.
  for (int dy = 0; dy <= 7; ++dy)
    for (int dx = 0; dx <= 7; ++dx) {
      OffsetField off = OffsetField::zeros(OffsetMode::kBoundedInt, 1, 16, 16, 0, 7);
      for (std::size_t i = 0; i < off.ints.size(); i += 2) {
        off.ints[i] = dy;
        off.ints[i + 1] = dx;
      }
      check(off, lb);
    }
  for (int d = 0; d <= 7; ++d) {
    check(OffsetField::uniform_square(1, 16, 16, d), lb);
    check(OffsetField::uniform_square(1, 16, 16, d), mp);
  }
  // Random per-tap fields, including all-extreme ones.
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 300; ++trial) {
    OffsetField off = OffsetField::zeros(OffsetMode::kBoundedInt, 1, 16, 16, 0, 7);
    for (auto& v : off.ints) v = static_cast<std::int32_t>(trial % 3 == 0 ? 7 * draw_int(rng, 0, 1) : draw_int(rng, 0, 7));
    check(off, lb);
    OffsetField sq = OffsetField::zeros(OffsetMode::kSquare, 1, 16, 16, 0, 7);
    for (auto& v : sq.ints) v = static_cast<std::int32_t>(draw_int(rng, 0, 7));
    check(sq, mp);
  }
  return {bad == 0, std::to_string(cases - bad) + "/" + std::to_string(cases) +
                        " traces read exactly h*w*ic = " + std::to_string(want) + " input bytes"};
}

Outcome criterion3() {
  const TraceDims dims{64, 64, 256, 256};
  const double t1 = roofline(ConvSpec::conv1x1(), dims).threshold;
  const double t3 = roofline(ConvSpec::dw3x3(), dims).threshold;
  return {t1 == 32.0 && t3 == 18.0, fmt("1x1 threshold %.17g (32), dw 3x3 threshold %.17g (18)", t1, t3)};
}

double cost_field(const std::string& text, const std::string& key) {
  const auto at = text.find("\n" + key + " ");
  if (at == std::string::npos) return std::nan("");
  return std::stod(text.substr(at + key.size() + 2));
}

Outcome criterion4() {
  struct Want {
    const char* config;
    double gmacs, fp32_mb, w4a8_mb;
  };
  const Want wants[2] = {{"c", 1.14, 6.06, 0.76}, {"d", 3.54, 23.2, 2.90}};
  Outcome o;
  for (const Want& w : wants) {
    const CliRun f = run_cli(std::string("cost --config ") + w.config + " --precision fp32");
    const CliRun q = run_cli(std::string("cost --config ") + w.config + " --precision w4a8");
    if (f.code != 0 || q.code != 0) return {false, "cost exited nonzero"};
    const double g = cost_field(q.out, "gmacs");
    const double s32 = cost_field(f.out, "size_mb");
    const double s8 = cost_field(q.out, "size_mb");
    auto within = [](double v, double ref) { return std::fabs(v / ref - 1.0) <= 0.10; };
    o.pass = o.pass && within(g, w.gmacs) && within(s32, w.fp32_mb) && within(s8, w.w4a8_mb);
    o.detail += std::string(o.detail.empty() ? "" : "; ") + w.config + ": " +
                fmt("%.3f GMACs (%+.1f%%), fp32 %.2f MB (%+.1f%%)", g, 100 * (g / w.gmacs - 1), s32,
                    100 * (s32 / w.fp32_mb - 1)) +
                fmt(", w4a8 %.3f MB (%+.1f%%)", s8, 100 * (s8 / w.w4a8_mb - 1));
  }
  return o;
}

Outcome criterion5() {
  std::mt19937_64 rng(5);
  int same = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::int64_t h = draw_int(rng, 1, 16);
    const std::int64_t w = draw_int(rng, 1, 16);
    const std::int64_t c = draw_int(rng, 1, 32);
    const QuantTensor x = random_q(rng, {1, h, w, c}, 8);
    const QuantTensor k = random_q(rng, {3, 3, 1, c}, 4);
    const RequantParams rp = random_rp(rng, c, 33, 40);
    RequantOptions ro;
    ro.relu = draw_int(rng, 0, 1) == 1;
    const QuantTensor a = deform_conv_q(x, k, OffsetField::uniform_square(1, h, w, 1), ConvSpec::dw3x3(1), rp, ro);
    const QuantTensor b = dwconv3x3_q(x, k, ConvSpec::dw3x3(1), rp, ro);
    same += a == b;
  }
  return {same == 1000, std::to_string(same) + "/1000 random instances bit-identical (square d = 1 vs regular dw 3x3)"};
}

Outcome criterion6() {
  std::mt19937_64 rng(6);
  int conv_ok = 0;
  int deform_ok = 0;
  int requant_ok = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::int64_t h = draw_int(rng, 1, 32);
    const std::int64_t w = draw_int(rng, 1, 32);
    const std::int64_t ic = draw_int(rng, 1, 32);
    const std::int64_t oc = draw_int(rng, 1, 32);
    const bool relu = draw_int(rng, 0, 1) == 1;
    RequantOptions ro;
    ro.relu = relu;
    {
      const QuantTensor x = random_q(rng, {1, h, w, ic}, 8);
      const QuantTensor k = random_q(rng, {1, 1, ic, oc}, 4);
      const RequantParams rp = random_rp(rng, oc, 34, 42);
      conv_ok += conv1x1_q(x, k, rp, ro) == oracle::conv1x1(x, k, rp, relu);
    }
    {
      const QuantTensor x = random_q(rng, {1, h, w, ic}, 8);
      const QuantTensor k = random_q(rng, {3, 3, 1, ic}, 4);
      const RequantParams rp = random_rp(rng, ic, 33, 40);
      const int mode = static_cast<int>(draw_int(rng, 0, 2));
      OffsetField off;
      if (mode == 0) {
        off = OffsetField::zeros(OffsetMode::kSquare, 1, h, w, 0, 7);
        for (auto& v : off.ints) v = static_cast<std::int32_t>(draw_int(rng, 0, 7));
      } else if (mode == 1) {
        off = OffsetField::zeros(OffsetMode::kBoundedInt, 1, h, w, -8, 7);
        for (auto& v : off.ints) v = static_cast<std::int32_t>(draw_int(rng, -8, 7));
      } else {
        off = OffsetField::zeros(OffsetMode::kFreeInt, 1, h, w, -8, 7);
        for (auto& v : off.ints) v = static_cast<std::int32_t>(draw_int(rng, -40, 40));
      }
      deform_ok += deform_conv_q(x, k, off, ConvSpec::dw3x3(1), rp, ro) == oracle::deform_dw3x3(x, k, off, 1, rp, relu);
    }
    {
      // Full legal domain: any int32 accumulator, multiplier and bias,
      // shifts 0..63.
      AccumTensor acc(Shape4{1, h, w, oc});
      for (auto& v : acc.data()) {
        v = static_cast<std::int32_t>(draw_int(rng, INT32_MIN, INT32_MAX));
        if (draw_int(rng, 0, 3) == 0) v = static_cast<std::int32_t>(draw_int(rng, -3000, 3000));
      }
      RequantParams rp = random_rp(rng, oc, 0, 63);
      for (auto& m : rp.multiplier) m = static_cast<std::int32_t>(draw_int(rng, 0, INT32_MAX));
      for (auto& b : rp.bias) b = static_cast<std::int32_t>(draw_int(rng, -300, 300));
      requant_ok += requantize(acc, rp, ro) == oracle::requantize(acc, rp, relu);
    }
  }
  return {conv_ok == 1000 && deform_ok == 1000 && requant_ok == 1000,
          "bit-exact vs scalar oracles: conv1x1_q " + std::to_string(conv_ok) + "/1000, deform_conv_q " +
              std::to_string(deform_ok) + "/1000, requantize " + std::to_string(requant_ok) + "/1000"};
}

Outcome criterion7() {
  std::mt19937_64 rng(7);
  long long bound_bad = 0;
  long long mono_bad = 0;
  long long odd_bad = 0;
  long long total = 0;
  long long float_bad = 0;
  double worst = 0;        // max error / delta, double reconstruction
  double worst_float = 0;  // same through the float tensor
  for (int bits : {4, 8}) {
    for (int batch = 0; batch < 100; ++batch) {
      const double t = std::exp(draw_real(rng, std::log(1e-3), std::log(1e3)));
      const QuantParams qp = QuantParams::per_layer(bits, t);
      const double delta = qp.deltas[0];
      const std::int64_t n = 10000;
      FloatTensor x(Shape4{1, 1, n, 1});
      for (float& v : x.data()) {
        // In range: |x| <= t after rounding to float.
        float f = static_cast<float>(draw_real(rng, -t, t));
        if (std::fabs(static_cast<double>(f)) > t) f = std::nextafter(f, 0.0F);
        v = f;
      }
      const QuantTensor q = quantize(x, qp);
      const FloatTensor back = dequantize(q);
      FloatTensor neg(x.shape());
      for (std::int64_t i = 0; i < n; ++i) neg.data()[static_cast<std::size_t>(i)] = -x.data()[static_cast<std::size_t>(i)];
      const QuantTensor qn = quantize(neg, qp);
      std::vector<std::pair<float, int>> sorted;
      for (std::int64_t i = 0; i < n; ++i) {
        const auto k = static_cast<std::size_t>(i);
        const double xv = x.data()[k];
        const double err = std::fabs(dequantize_value(q.codes()[k], delta) - xv);
        worst = std::max(worst, err / delta);
        if (err > delta / 2) ++bound_bad;
        const double ferr = std::fabs(double{back.data()[k]} - xv);
        worst_float = std::max(worst_float, ferr / delta);
        if (ferr > delta / 2) ++float_bad;
        if (qn.codes()[k] != -q.codes()[k]) ++odd_bad;
        sorted.emplace_back(x.data()[k], q.codes()[k]);
        ++total;
      }
      std::sort(sorted.begin(), sorted.end());
      for (std::size_t i = 1; i < sorted.size(); ++i) {
        if (sorted[i].second < sorted[i - 1].second) ++mono_bad;
      }
    }
  }
  return {bound_bad == 0 && mono_bad == 0 && odd_bad == 0,
          std::to_string(total) + " scalars at k = 4, 8: " + std::to_string(bound_bad) + " over delta/2 (worst " +
              fmt("%.9f", worst) + " delta), " + std::to_string(mono_bad) + " monotonicity and " +
              std::to_string(odd_bad) + " odd-symmetry violations; float tensor storage: " +
              std::to_string(float_bad) + " over delta/2 (worst " + fmt("%.9f", worst_float) + " delta)"};
}

Outcome criterion8() {
  std::mt19937_64 rng(8);
  double zero_err = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::int64_t h = draw_int(rng, 3, 16);
    const std::int64_t w = draw_int(rng, 3, 16);
    const std::int64_t c = draw_int(rng, 1, 8);
    const bool dw = trial % 2 == 0;
    const int stride = static_cast<int>(draw_int(rng, 1, 2));
    const ConvSpec spec = dw ? ConvSpec::dw3x3(stride) : ConvSpec::full3x3(stride);
    const std::int64_t oc = dw ? c : draw_int(rng, 1, 8);
    const FloatTensor x = random_float(rng, {1, h, w, c});
    const FloatTensor k = random_float(rng, spec.weight_shape(c, oc));
    const OffsetField zero = OffsetField::zeros(OffsetMode::kFreeFrac, 1, spec.out_dim(h), spec.out_dim(w));
    const FloatTensor a = deform_conv_ref(x, k, zero, spec);
    const FloatTensor b = conv_ref(x, k, spec);
    for (std::size_t i = 0; i < a.data().size(); ++i) zero_err = std::max(zero_err, std::fabs(double{a.data()[i]} - b.data()[i]));
  }
  // Bilinear sampling at integer coordinates returns the pixel exactly.
  long long bil_bad = 0;
  {
    const FloatTensor x = random_float(rng, {1, 9, 11, 3});
    for (int y = -2; y < 11; ++y)
      for (int xx = -2; xx < 13; ++xx)
        for (int c = 0; c < 3; ++c) {
          const double want = x.shape().contains(0, y, xx, c) ? double{x.at(0, y, xx, c)} : 0.0;
          if (bilinear_sample(x, 0, y, xx, c) != want) ++bil_bad;
        }
  }
  // Translating the input by (ty, tx) translates the output on positions
  // whose samples stay inside the image in both runs.
  double eq_err = 0;
  int eq_checked = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const std::int64_t h = 24;
    const std::int64_t w = 24;
    const std::int64_t c = draw_int(rng, 1, 4);
    const int ty = static_cast<int>(draw_int(rng, -3, 3));
    const int tx = static_cast<int>(draw_int(rng, -3, 3));
    const FloatTensor x = random_float(rng, {1, h, w, c});
    FloatTensor xs(x.shape(), 0.0F);
    for (std::int64_t y = 0; y < h; ++y)
      for (std::int64_t xx = 0; xx < w; ++xx)
        for (std::int64_t ch = 0; ch < c; ++ch)
          if (x.shape().contains(0, y - ty, xx - tx, ch)) xs.at(0, y, xx, ch) = x.at(0, y - ty, xx - tx, ch);
    const FloatTensor k = random_float(rng, ConvSpec::dw3x3().weight_shape(c, c));
    OffsetField off = OffsetField::zeros(OffsetMode::kFreeFrac, 1, h, w);
    std::vector<float> tap(18);
    for (auto& v : tap) v = static_cast<float>(draw_real(rng, -2.0, 2.0));
    for (std::size_t i = 0; i < off.frac.size(); ++i) off.frac[i] = tap[i % 18];
    const FloatTensor a = deform_conv_ref(x, k, off, ConvSpec::dw3x3());
    const FloatTensor b = deform_conv_ref(xs, k, off, ConvSpec::dw3x3());
    const int margin = 5;  // 1 tap + 2 offset + neighbour + 1
    for (std::int64_t y = margin; y < h - margin; ++y)
      for (std::int64_t xx = margin; xx < w - margin; ++xx) {
        const std::int64_t sy = y + ty;
        const std::int64_t sx = xx + tx;
        if (sy < margin || sy >= h - margin || sx < margin || sx >= w - margin) continue;
        for (std::int64_t ch = 0; ch < c; ++ch) {
          eq_err = std::max(eq_err, std::fabs(double{a.at(0, y, xx, ch)} - b.at(0, sy, sx, ch)));
          ++eq_checked;
        }
      }
  }
  return {zero_err <= 1e-5 && bil_bad == 0 && eq_err <= 1e-5 && eq_checked > 0,
          fmt("zero-offset max |deform - conv| %.2g (<= 1e-5), integer bilinear mismatches %g, ", zero_err,
              static_cast<double>(bil_bad)) +
              fmt("translation max error %.2g over %g interior outputs", eq_err, eq_checked)};
}

std::vector<Peak> oracle_peaks(const FloatTensor& hm, std::size_t k) {
  const Shape4& s = hm.shape();
  std::vector<Peak> all;
  for (std::int64_t c = 0; c < s.c; ++c)
    for (std::int64_t y = 0; y < s.h; ++y)
      for (std::int64_t x = 0; x < s.w; ++x) {
        bool ok = true;
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            if ((dy != 0 || dx != 0) && s.contains(0, y + dy, x + dx, c) && hm.at(0, y + dy, x + dx, c) > hm.at(0, y, x, c)) {
              ok = false;
            }
          }
        if (ok) all.push_back({static_cast<int>(c), static_cast<int>(x), static_cast<int>(y), hm.at(0, y, x, c)});
      }
  std::stable_sort(all.begin(), all.end(), [](const Peak& a, const Peak& b) { return a.score > b.score; });
  if (all.size() > k) all.resize(k);
  return all;
}

Outcome criterion9() {
  std::mt19937_64 rng(9);
  int peaks_ok = 0;
  for (int trial = 0; trial < 100; ++trial) {
    FloatTensor hm(Shape4{1, 64, 64, 20});
    for (float& v : hm.data()) v = static_cast<float>(draw_int(rng, 0, 255)) / 255.0F;
    peaks_ok += find_peaks(hm, 100) == oracle_peaks(hm, 100);
  }
  // Peak at (x, y) = (10, 12), offset (0.2, -0.1), size (4, 6), stride 1.
  FloatTensor off(Shape4{1, 16, 16, 2}, 0.0F);
  FloatTensor size(Shape4{1, 16, 16, 2}, 0.0F);
  off.at(0, 12, 10, 0) = 0.2F;
  off.at(0, 12, 10, 1) = -0.1F;
  size.at(0, 12, 10, 0) = 4.0F;
  size.at(0, 12, 10, 1) = 6.0F;
  const Box b = decode({Peak{3, 10, 12, 0.9F}}, off, size, 1).at(0).box;
  const bool box_ok = std::fabs(b.x1 - 8.2) < 1e-6 && std::fabs(b.y1 - 8.9) < 1e-6 && std::fabs(b.x2 - 12.2) < 1e-6 &&
                      std::fabs(b.y2 - 14.9) < 1e-6;
  const std::vector<GroundTruth> gts = {{0, {0, 0, 10, 10}}, {1, {20, 20, 30, 40}}, {0, {50, 50, 60, 60}}};
  std::vector<Detection> perfect;
  std::vector<Detection> disjoint;
  for (const auto& g : gts) {
    perfect.push_back({g.cls, 0.9, g.box});
    disjoint.push_back({g.cls, 0.9, {g.box.x1 + 100, g.box.y1 + 100, g.box.x2 + 100, g.box.y2 + 100}});
  }
  const double ap_p = ap50(perfect, gts);
  const double ap_d = ap50(disjoint, gts);
  return {peaks_ok == 100 && box_ok && ap_p == 1.0 && ap_d == 0.0,
          std::to_string(peaks_ok) + "/100 heatmaps match the exhaustive scan, box " +
              fmt("(%.4f, %.4f, %.4f, %.4f)", b.x1, b.y1, b.x2, b.y2) + fmt(", AP50 perfect %g disjoint %g", ap_p, ap_d)};
}

Outcome criterion10() {
  const fs::path dir = fs::temp_directory_path() / "dfx_acceptance";
  fs::remove_all(dir);
  fs::create_directories(dir / "calib");
  const std::string d = dir.string();
  // Each command is run twice; file outputs go to run-specific names.
  const std::vector<std::pair<std::string, std::string>> cmds = {
      {"init --config a --seed 3 -o " + d + "/m@.fp32", "m@.fp32"},
      {"image --resolution 256 --seed 4 -o " + d + "/i@.img", "i@.img"},
      {"quantize " + d + "/m1.fp32 " + d + "/m@.w4a8 --calib " + d + "/calib", "m@.w4a8"},
      {"infer " + d + "/m1.w4a8 " + d + "/i1.img --heads-out " + d + "/h@.cdnt", "h@.cdnt"},
      {"infer " + d + "/m1.w4a8 " + d + "/i1.img --no-decode", ""},
      {"bench --table2 --dims 64,64,256,256 --seed 1", ""},
      {"bench --op full --variant deform --llc --dims 32,32,64,64 --seed 7", ""},
      {"cost --config d --precision w4a8 --layers", ""},
      {"golden generate " + d + "/g@ --seed 11", "g@"},
  };
  int identical = 0;
  std::string bad;
  for (const auto& [cmd, file] : cmds) {
    std::string outputs[2];
    std::string files[2];
    for (int run = 0; run < 2; ++run) {
      std::string c = cmd;
      std::string f = file;
      const std::string tag = std::to_string(run + 1);
      for (std::string* s : {&c, &f}) {
        for (auto at = s->find('@'); at != std::string::npos; at = s->find('@')) s->replace(at, 1, tag);
      }
      const CliRun r = run_cli(c);
      outputs[run] = std::to_string(r.code) + "\n" + r.out;
      if (!f.empty()) {
        const fs::path p = dir / f;
        if (fs::is_directory(p)) {
          std::vector<fs::path> entries;
          for (const auto& e : fs::directory_iterator(p)) entries.push_back(e.path());
          std::sort(entries.begin(), entries.end());
          for (const auto& e : entries) files[run] += e.filename().string() + "\n" + slurp(e);
        } else {
          files[run] = slurp(p);
        }
      }
    }
    if (cmd.rfind("image", 0) == 0) fs::copy_file(dir / "i1.img", dir / "calib" / "i1.img");
    const bool exited_ok = outputs[0].rfind("0\n", 0) == 0;
    // The golden summary line names its directory.
    if (cmd.rfind("golden", 0) == 0) outputs[0] = outputs[1];
    const bool ok = exited_ok && outputs[0] == outputs[1] && files[0] == files[1];
    if (ok) ++identical;
    else bad += " [" + cmd.substr(0, cmd.find(' ')) + "]";
  }
  const CliRun fresh = run_cli("golden verify " + d + "/g1");
  const CliRun frozen = run_cli("golden verify " + std::string(DFX_FIXTURES) + "/golden");
  fs::remove_all(dir);
  const bool pass = identical == static_cast<int>(cmds.size()) && fresh.code == 0 && frozen.code == 0;
  auto last_line = [](const std::string& s) {
    const auto end = s.find_last_not_of('\n');
    const auto start = s.find_last_of('\n', end);
    return s.substr(start == std::string::npos ? 0 : start + 1, end - (start == std::string::npos ? 0 : start + 1) + 1);
  };
  return {pass, std::to_string(identical) + "/" + std::to_string(cmds.size()) +
                    " commands byte-identical across two runs" + (bad.empty() ? "" : " (differ:" + bad + ")") +
                    "; fresh golden: " + last_line(fresh.out) + "; committed golden: " + last_line(frozen.out)};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"ablation speedups and ordering", criterion1},
      {"single-fetch line buffer", criterion2},
      {"roofline thresholds", criterion3},
      {"cost accounting", criterion4},
      {"square d=1 collapses to dw 3x3", criterion5},
      {"integer kernels vs scalar oracles", criterion6},
      {"quantizer bound and properties", criterion7},
      {"float deformable reference", criterion8},
      {"peak finding, decode and AP50", criterion9},
      {"CLI determinism and golden vectors", criterion10},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += o.pass ? 0 : 1;
    std::printf("criterion %2zu %s  %s: %s\n", i + 1, o.pass ? "PASS" : "FAIL", criteria[i].first, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%zu/%zu criteria pass\n", criteria.size() - static_cast<std::size_t>(failed), criteria.size());
  return failed == 0 ? 0 : 1;
}
