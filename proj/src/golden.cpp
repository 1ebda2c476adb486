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

#include "dfx/golden.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <random>
#include <sstream>

#include "dfx/error.hpp"
#include "dfx/ops.hpp"
#include "dfx/oracle.hpp"
#include "dfx/rng.hpp"

namespace dfx {

namespace {

struct Attrs {
  std::string op;
  std::uint64_t seed = 0;
  int tolerance = 0;
  int stride = 1;
  int relu = 0;
  int lo = 0;
  int hi = 7;
  std::string digest;
};

std::string descriptor_text(const Attrs& a, bool with_digest) {
  std::ostringstream o;
  o << "golden 1\nop " << a.op << "\nseed " << a.seed << "\ntolerance " << a.tolerance
    << "\nstride " << a.stride << "\nrelu " << a.relu << "\nlo " << a.lo << "\nhi " << a.hi << "\n";
  if (with_digest) o << "digest " << a.digest << "\n";
  return o.str();
}

Attrs parse_attrs(const std::string& text) {
  Attrs a;
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);
  if (line != "golden 1") throw FormatError("not a golden vector descriptor");
  std::map<std::string, std::string> kv;
  while (std::getline(in, line)) {
    const auto sp = line.find(' ');
    if (sp == std::string::npos) throw FormatError("bad descriptor line '" + line + "'");
    kv[line.substr(0, sp)] = line.substr(sp + 1);
  }
  auto get = [&](const char* k) {
    auto it = kv.find(k);
    if (it == kv.end()) throw FormatError(std::string("descriptor misses ") + k);
    return it->second;
  };
  auto as_int = [&](const char* k) {
    const std::string v = get(k);
    try {
      std::size_t used = 0;
      const long long x = std::stoll(v, &used);
      if (used != v.size()) throw FormatError("");
      return x;
    } catch (const std::exception&) {
      throw FormatError(std::string("descriptor field ") + k + " is not an integer");
    }
  };
  a.op = get("op");
  {
    const std::string v = get("seed");
    std::size_t used = 0;
    try {
      a.seed = std::stoull(v, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != v.size() || v[0] == '-') throw FormatError("descriptor field seed is not an integer");
  }
  a.tolerance = static_cast<int>(as_int("tolerance"));
  a.stride = static_cast<int>(as_int("stride"));
  a.relu = static_cast<int>(as_int("relu"));
  a.lo = static_cast<int>(as_int("lo"));
  a.hi = static_cast<int>(as_int("hi"));
  a.digest = get("digest");
  return a;
}

std::string digest_of(const Container& c, const Attrs& a) {
  Container body = c;
  body.descriptor = descriptor_text(a, false);
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fnv1a64(serialize(body))));
  return buf;
}

QuantTensor random_q(std::mt19937_64& rng, const Shape4& s, int bits) {
  const int q = qmax_for_bits(bits);
  std::vector<std::int8_t> codes(static_cast<std::size_t>(s.count()));
  for (auto& c : codes) c = static_cast<std::int8_t>(draw_int(rng, -q, q));
  return QuantTensor(s, bits, QuantParams::unit(bits), std::move(codes));
}

RequantParams random_rp(std::mt19937_64& rng, std::int64_t channels, int shift_lo, int shift_hi,
                        double out_delta) {
  RequantParams rp;
  rp.multiplier.clear();
  rp.shift.clear();
  rp.bias.clear();
  for (std::int64_t c = 0; c < channels; ++c) {
    rp.multiplier.push_back(static_cast<std::int32_t>(draw_int(rng, std::int64_t{1} << 30, (std::int64_t{1} << 31) - 1)));
    rp.shift.push_back(static_cast<int>(draw_int(rng, shift_lo, shift_hi)));
    rp.bias.push_back(static_cast<std::int32_t>(draw_int(rng, -32, 32)));
  }
  rp.out_delta = out_delta;
  return rp;
}

void put_requant(Container& c, const RequantParams& rp) {
  c.tensors.push_back(TensorRecord::from_i32("multiplier", rp.multiplier));
  c.tensors.push_back(TensorRecord::from_i32("shift", std::vector<std::int32_t>(rp.shift.begin(), rp.shift.end())));
  c.tensors.push_back(TensorRecord::from_i32("bias", rp.bias));
}

RequantParams get_requant(const Container& c) {
  RequantParams rp;
  rp.multiplier = c.tensor("multiplier").i32;
  const auto& s = c.tensor("shift").i32;
  rp.shift.assign(s.begin(), s.end());
  rp.bias = c.tensor("bias").i32;
  const auto& od = c.quant_values("out_delta").values;
  if (od.size() != 1) throw FormatError("out_delta must hold one value");
  rp.out_delta = od[0];
  return rp;
}

TensorRecord offsets_record(const OffsetField& f) {
  TensorRecord r = TensorRecord::from_i32("offsets", f.ints);
  r.dims = {f.n, f.h, f.w, f.channels()};
  return r;
}

OffsetField offsets_from(const TensorRecord& r, OffsetMode mode, int lo, int hi) {
  const Shape4 s = r.shape4();
  OffsetField f = OffsetField::zeros(mode, s.n, s.h, s.w, lo, hi);
  if (s.c != f.channels() || r.dtype != DType::kI32) throw FormatError("offsets tensor has the wrong layout");
  f.ints = r.i32;
  return f;
}

// Kernel under test (oracle = false) or its scalar oracle (true) applied to
// the inputs stored in `c`.
TensorRecord run_op(const Attrs& a, const Container& c, bool oracle) {
  const bool relu = a.relu != 0;
  RequantOptions ro;
  ro.relu = relu;
  auto q8 = [&](const char* name) { return c.tensor(name).to_quant(QuantParams::unit(8)); };
  auto q4 = [&](const char* name) { return c.tensor(name).to_quant(QuantParams::unit(4)); };
  if (a.op == "requantize") {
    const AccumTensor acc = c.tensor("acc").to_i32();
    const RequantParams rp = get_requant(c);
    return TensorRecord::from("actual", oracle ? oracle::requantize(acc, rp, relu) : requantize(acc, rp, ro));
  }
  if (a.op == "conv1x1_q") {
    const RequantParams rp = get_requant(c);
    return TensorRecord::from("actual", oracle ? oracle::conv1x1(q8("input"), q4("weights"), rp, relu)
                                               : conv1x1_q(q8("input"), q4("weights"), rp, ro));
  }
  if (a.op == "dwconv3x3_q") {
    const RequantParams rp = get_requant(c);
    return TensorRecord::from("actual", oracle ? oracle::dw3x3(q8("input"), q4("weights"), a.stride, rp, relu)
                                               : dwconv3x3_q(q8("input"), q4("weights"), ConvSpec::dw3x3(a.stride), rp, ro));
  }
  if (a.op == "deform_conv_q_square" || a.op == "deform_conv_q_bounded") {
    const RequantParams rp = get_requant(c);
    const OffsetMode mode = a.op == "deform_conv_q_square" ? OffsetMode::kSquare : OffsetMode::kBoundedInt;
    const OffsetField off = offsets_from(c.tensor("offsets"), mode, a.lo, a.hi);
    return TensorRecord::from(
        "actual", oracle ? oracle::deform_dw3x3(q8("input"), q4("weights"), off, a.stride, rp, relu)
                         : deform_conv_q(q8("input"), q4("weights"), off, ConvSpec::dw3x3(a.stride), rp, ro));
  }
  if (a.op == "offset_gen_square") {
    const RequantParams rp = get_requant(c);
    OffsetField f;
    if (oracle) {
      f = oracle::offset_gen_square(q8("input"), q4("weights"), rp, a.lo, a.hi);
    } else {
      OffsetGenOptions o;
      o.mode = OffsetMode::kSquare;
      o.lo = a.lo;
      o.hi = a.hi;
      f = offset_gen(q8("input"), q4("weights"), rp, o);
    }
    TensorRecord r = offsets_record(f);
    r.name = "actual";
    return r;
  }
  if (a.op == "maxpool2x2") {
    return TensorRecord::from("actual", oracle ? oracle::maxpool2x2(q8("input")) : maxpool2x2(q8("input")));
  }
  if (a.op == "upsample2x_nearest") {
    return TensorRecord::from("actual", oracle ? oracle::upsample2x(q8("input")) : upsample2x_nearest(q8("input")));
  }
  if (a.op == "channel_shuffle") {
    return TensorRecord::from("actual", oracle ? oracle::shuffle2(q8("input")) : channel_shuffle(q8("input"), 2));
  }
  throw FormatError("unknown golden op '" + a.op + "'");
}

std::string index_text(const std::vector<std::int64_t>& dims, std::int64_t flat) {
  std::vector<std::int64_t> idx(dims.size());
  for (std::size_t k = dims.size(); k-- > 0;) {
    idx[k] = flat % dims[k];
    flat /= dims[k];
  }
  std::string s = "(";
  for (std::size_t k = 0; k < idx.size(); ++k) s += (k ? "," : "") + std::to_string(idx[k]);
  return s + ")";
}

std::int64_t value_at(const TensorRecord& t, std::size_t i) {
  return t.dtype == DType::kI32 ? t.i32[i] : t.codes[i];
}

// Differences between expected and actual integer tensors.
std::vector<std::string> compare(const std::string& op, const TensorRecord& expected,
                                 const TensorRecord& actual, std::size_t max_reports) {
  std::vector<std::string> out;
  if (expected.dims != actual.dims || (expected.dtype == DType::kI32) != (actual.dtype == DType::kI32)) {
    out.push_back("op " + op + ": output layout differs from the expected tensor");
    return out;
  }
  std::size_t bad = 0;
  const auto n = static_cast<std::size_t>(expected.count());
  for (std::size_t i = 0; i < n; ++i) {
    const std::int64_t e = value_at(expected, i);
    const std::int64_t v = value_at(actual, i);
    if (e == v) continue;
    if (++bad <= max_reports) {
      out.push_back("op " + op + " index " + index_text(expected.dims, static_cast<std::int64_t>(i)) +
                    " expected " + std::to_string(e) + " actual " + std::to_string(v));
    }
  }
  if (bad > max_reports) {
    out.push_back("op " + op + ": " + std::to_string(bad - max_reports) + " more differing elements");
  }
  return out;
}

}  // namespace

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::uint8_t b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::vector<std::string> golden_ops() {
  return {"requantize",        "conv1x1_q",         "dwconv3x3_q",
          "deform_conv_q_square", "deform_conv_q_bounded", "offset_gen_square",
          "maxpool2x2",        "upsample2x_nearest", "channel_shuffle"};
}

Container make_golden(const std::string& op, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Attrs a;
  a.op = op;
  a.seed = seed;
  a.relu = static_cast<int>(draw_int(rng, 0, 1));
  const std::int64_t h = draw_int(rng, 2, 12);
  const std::int64_t w = draw_int(rng, 2, 12);
  const std::int64_t ic = 2 * draw_int(rng, 1, 12);
  Container c;
  const Shape4 xs{1, h, w, ic};
  if (op == "requantize") {
    AccumTensor acc(xs);
    for (auto& v : acc.data()) v = static_cast<std::int32_t>(draw_int(rng, -(1 << 20), 1 << 20));
    c.tensors.push_back(TensorRecord::from("acc", acc));
    put_requant(c, random_rp(rng, ic, 30, 44, 0.05));
    c.quant.push_back({"out_delta", {0.05}});
  } else if (op == "conv1x1_q") {
    const std::int64_t oc = draw_int(rng, 1, 32);
    c.tensors.push_back(TensorRecord::from("input", random_q(rng, xs, 8)));
    c.tensors.push_back(TensorRecord::from("weights", random_q(rng, {1, 1, ic, oc}, 4)));
    put_requant(c, random_rp(rng, oc, 36, 42, 0.05));
    c.quant.push_back({"out_delta", {0.05}});
  } else if (op == "dwconv3x3_q" || op == "deform_conv_q_square" || op == "deform_conv_q_bounded") {
    const bool square = op == "deform_conv_q_square";
    const bool bounded = op == "deform_conv_q_bounded";
    a.stride = op == "dwconv3x3_q" ? static_cast<int>(draw_int(rng, 1, 2)) : 1;
    a.lo = bounded ? -8 : 0;
    a.hi = 7;
    c.tensors.push_back(TensorRecord::from("input", random_q(rng, xs, 8)));
    c.tensors.push_back(TensorRecord::from("weights", random_q(rng, {3, 3, 1, ic}, 4)));
    if (square || bounded) {
      OffsetField f = OffsetField::zeros(square ? OffsetMode::kSquare : OffsetMode::kBoundedInt, 1, h, w, a.lo, a.hi);
      for (auto& v : f.ints) v = static_cast<std::int32_t>(draw_int(rng, a.lo, a.hi));
      c.tensors.push_back(offsets_record(f));
    }
    put_requant(c, random_rp(rng, ic, 33, 39, 0.05));
    c.quant.push_back({"out_delta", {0.05}});
  } else if (op == "offset_gen_square") {
    a.lo = 0;
    a.hi = 7;
    c.tensors.push_back(TensorRecord::from("input", random_q(rng, xs, 8)));
    c.tensors.push_back(TensorRecord::from("weights", random_q(rng, {1, 1, ic, 1}, 4)));
    put_requant(c, random_rp(rng, 1, 36, 42, 1.0 / 16.0));
    c.quant.push_back({"out_delta", {1.0 / 16.0}});
  } else if (op == "maxpool2x2" || op == "upsample2x_nearest" || op == "channel_shuffle") {
    c.tensors.push_back(TensorRecord::from("input", random_q(rng, xs, 8)));
  } else {
    throw ParamError("unknown golden op '" + op + "'");
  }
  const TensorRecord kernel = run_op(a, c, false);
  const TensorRecord reference = run_op(a, c, true);
  const auto diff = compare(op, reference, kernel, 4);
  if (!diff.empty()) throw Error("kernel disagrees with its oracle: " + diff.front());
  TensorRecord expected = kernel;
  expected.name = "expected";
  c.tensors.push_back(std::move(expected));
  c.descriptor = descriptor_text(a, false);
  a.digest = digest_of(c, a);
  c.descriptor = descriptor_text(a, true);
  return c;
}

std::vector<std::string> check_golden(const Container& c, std::size_t max_reports) {
  std::vector<std::string> out;
  Attrs a;
  try {
    a = parse_attrs(c.descriptor);
  } catch (const Error& e) {
    return {std::string("descriptor: ") + e.what()};
  }
  if (digest_of(c, a) != a.digest) out.push_back("digest mismatch: contents changed since generation");
  if (a.tolerance != 0) out.push_back("op " + a.op + ": integer ops need tolerance 0");
  try {
    const TensorRecord actual = run_op(a, c, false);
    auto diff = compare(a.op, c.tensor("expected"), actual, max_reports);
    out.insert(out.end(), diff.begin(), diff.end());
  } catch (const Error& e) {
    out.push_back("op " + a.op + ": replay failed: " + e.what());
  }
  return out;
}

std::vector<std::string> generate_golden(const std::filesystem::path& dir, std::uint64_t seed, int per_op) {
  std::filesystem::create_directories(dir);
  std::vector<std::string> names;
  std::mt19937_64 rng(seed);
  int k = 0;
  for (const std::string& op : golden_ops()) {
    for (int i = 0; i < per_op; ++i) {
      char buf[96];
      std::snprintf(buf, sizeof(buf), "%02d_%s.cdnt", k++, op.c_str());
      write_container(dir / buf, make_golden(op, rng()));
      names.emplace_back(buf);
    }
  }
  return names;
}

std::vector<GoldenResult> verify_golden(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw FormatError("no golden directory " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".cdnt") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw FormatError("no golden vectors in " + dir.string());
  std::vector<GoldenResult> out;
  for (const auto& f : files) {
    GoldenResult r;
    r.vector = f.filename().string();
    try {
      r.problems = check_golden(parse_container(read_bytes(f)));
    } catch (const Error& e) {
      r.problems.push_back(std::string("unreadable: ") + e.what());
    }
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace dfx
