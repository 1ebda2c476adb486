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

// Command-line front end: model containers, inference, the memory
// simulator, cost accounting and golden vectors.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <random>
#include <string>
#include <vector>

#include "dfx/container.hpp"
#include "dfx/detect.hpp"
#include "dfx/error.hpp"
#include "dfx/golden.hpp"
#include "dfx/graph.hpp"
#include "dfx/memsim.hpp"
#include "dfx/model_io.hpp"
#include "dfx/rng.hpp"

namespace fs = std::filesystem;
using namespace dfx;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitVerify = 2;

char config_id(const std::string& s) {
  if (s.size() != 1) throw ParamError("config must be one of a..e, got '" + s + "'");
  config_for(s[0]);
  return s[0];
}

void zero_weights(NetworkGraph& g) {
  for (LayerNode& n : g.nodes) {
    std::fill(n.weights.data().begin(), n.weights.data().end(), 0.0F);
    std::fill(n.bias.begin(), n.bias.end(), 0.0F);
    std::fill(n.offset_weights.data().begin(), n.offset_weights.data().end(), 0.0F);
    std::fill(n.offset_bias.begin(), n.offset_bias.end(), 0.0F);
  }
}

// Gray background with noise and a few flat rectangles.
RawImage synth_image(std::int64_t res, std::uint64_t seed, bool zero) {
  RawImage img{res, res, 3, std::vector<std::uint8_t>(static_cast<std::size_t>(res * res * 3), 128)};
  if (zero) return img;
  std::mt19937_64 rng(seed);
  for (auto& p : img.pixels) p = static_cast<std::uint8_t>(draw_int(rng, 96, 160));
  const int boxes = static_cast<int>(draw_int(rng, 2, 5));
  for (int b = 0; b < boxes; ++b) {
    const std::int64_t y0 = draw_int(rng, 0, res - 2);
    const std::int64_t x0 = draw_int(rng, 0, res - 2);
    const std::int64_t y1 = std::min(res, y0 + draw_int(rng, res / 16 + 1, res / 3 + 1));
    const std::int64_t x1 = std::min(res, x0 + draw_int(rng, res / 16 + 1, res / 3 + 1));
    std::uint8_t color[3];
    for (auto& c : color) c = static_cast<std::uint8_t>(draw_int(rng, 0, 255));
    for (std::int64_t y = y0; y < y1; ++y)
      for (std::int64_t x = x0; x < x1; ++x)
        for (int c = 0; c < 3; ++c) img.pixels[static_cast<std::size_t>((y * res + x) * 3 + c)] = color[c];
  }
  return img;
}

FloatTensor float_image(const RawImage& img) { return dequantize(image_from_u8(img.pixels, img.shape())); }

std::vector<std::int64_t> parse_dims(const std::string& s) {
  std::vector<std::int64_t> out;
  std::size_t pos = 0;
  while (pos <= s.size()) {
    const std::size_t comma = std::min(s.find(',', pos), s.size());
    const std::string part = s.substr(pos, comma - pos);
    std::size_t used = 0;
    long long v = 0;
    try {
      v = std::stoll(part, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != part.size() || v <= 0) throw ParamError("bad --dims '" + s + "', want h,w,ic,oc");
    out.push_back(v);
    pos = comma + 1;
  }
  if (out.size() != 4) throw ParamError("bad --dims '" + s + "', want h,w,ic,oc");
  return out;
}

// Non-printable bytes (from a corrupted file) shown as \xNN.
std::string printable(const std::string& s) {
  std::string out;
  for (unsigned char ch : s) {
    if (ch >= 0x20 && ch < 0x7F) {
      out += static_cast<char>(ch);
    } else {
      char buf[8];
      std::snprintf(buf, sizeof(buf), "\\x%02x", ch);
      out += buf;
    }
  }
  return out;
}

// --- commands ---------------------------------------------------------------

struct InitArgs {
  std::string config = "c";
  int classes = 20;
  std::uint64_t seed = 1;
  bool zero = false;
  std::string out;
};

int cmd_init(const InitArgs& a) {
  NetworkGraph g = build_codenet(config_id(a.config), a.classes, a.seed);
  if (a.zero) zero_weights(g);
  write_container(a.out, graph_to_container(g));
  return kExitOk;
}

struct ImageArgs {
  std::int64_t resolution = 512;
  std::uint64_t seed = 1;
  bool zero = false;
  std::string out;
};

int cmd_image(const ImageArgs& a) {
  if (a.resolution < 4) throw ParamError("resolution must be at least 4");
  write_image(a.out, synth_image(a.resolution, a.seed, a.zero));
  return kExitOk;
}

struct QuantizeArgs {
  std::string in;
  std::string out;
  std::string calib;
  double percentile = 0;
};

int cmd_quantize(const QuantizeArgs& a) {
  const Container c = read_container(a.in);
  if (container_precision(c) != "fp32") throw FormatError("container not fp32: " + a.in);
  NetworkGraph g = graph_from_container(c);
  if (!fs::is_directory(a.calib)) throw FormatError("calibration directory not found: " + a.calib);
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(a.calib)) {
    if (e.is_regular_file()) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<FloatTensor> images;
  for (const auto& f : files) {
    const RawImage img = read_image(f);
    if (!(img.shape() == g.input_shape)) {
      throw ShapeError("calibration image " + f.string() + " is " + img.shape().str() + ", model expects " +
                       g.input_shape.str());
    }
    images.push_back(float_image(img));
  }
  if (images.empty()) throw ParamError("missing calibration data: no images in " + a.calib);
  CalibrationOptions opt;
  if (a.percentile > 0) opt.percentile = a.percentile;
  quantize_graph(g, images, opt);
  write_container(a.out, graph_to_container(g));
  return kExitOk;
}

struct InferArgs {
  std::string model;
  std::string image;
  std::string config;
  bool decode = true;
  double score_thresh = 0;
  int top_k = 100;
  std::string heads_out;
};

int cmd_infer(const InferArgs& a) {
  const Container c = read_container(a.model);
  if (container_precision(c) != "w4a8") throw FormatError("container not w4a8: " + a.model + " (run quantize first)");
  const NetworkGraph g = graph_from_container(c);
  if (!a.config.empty() && config_id(a.config) != g.config.id) {
    throw ParamError(std::string("model is config ") + g.config.id + ", not " + a.config);
  }
  const RawImage img = read_image(a.image);
  if (!(img.shape() == g.input_shape)) {
    throw ShapeError("resolution mismatch: image is " + std::to_string(img.h) + "x" + std::to_string(img.w) + "x" +
                     std::to_string(img.c) + ", model expects " + std::to_string(g.input_shape.h) + "x" +
                     std::to_string(g.input_shape.w) + "x" + std::to_string(g.input_shape.c));
  }
  const Heads heads = run_inference(g, image_from_u8(img.pixels, img.shape()));
  if (!a.heads_out.empty()) {
    Container hc;
    hc.descriptor = "heads 1\noutput_stride " + std::to_string(g.output_stride) + "\n";
    hc.tensors.push_back(TensorRecord::from("heatmap", heads.heatmap));
    hc.tensors.push_back(TensorRecord::from("size", heads.size));
    hc.tensors.push_back(TensorRecord::from("offset", heads.offset));
    const char* names[3] = {"heatmap_codes", "size_codes", "offset_codes"};
    for (int i = 0; i < 3; ++i) {
      hc.tensors.push_back(TensorRecord::from(names[i], heads.codes[static_cast<std::size_t>(i)]));
      hc.quant.push_back({names[i], {heads.codes[static_cast<std::size_t>(i)].qparams().deltas[0]}});
    }
    write_container(a.heads_out, hc);
  }
  std::vector<Peak> peaks = find_peaks(heads.heatmap, a.top_k);
  peaks.erase(std::remove_if(peaks.begin(), peaks.end(),
                             [&](const Peak& p) { return p.score < a.score_thresh; }),
              peaks.end());
  if (a.decode) {
    std::cout << format_detections(decode(peaks, heads.offset, heads.size, g.output_stride));
  } else {
    for (const Peak& p : peaks) std::printf("%d %d %d %.6f\n", p.cls, p.x, p.y, p.score);
  }
  return kExitOk;
}

struct BenchArgs {
  std::string op = "depthwise";
  std::string variant = "square";
  std::string design;
  bool llc = false;
  std::string dims = "64,64,256,256";
  std::uint64_t seed = 1;
  int rows = 0;
  bool table2 = false;
};

int cmd_bench(const BenchArgs& a) {
  const auto d = parse_dims(a.dims);
  TraceDims dims{d[0], d[1], d[2], d[3]};
  const EngineConfig eng;
  if (a.table2) {
    const auto rows = ablation_table(dims, a.seed, eng);
    std::cout << ablation_csv(rows);
    const Speedups s = table_speedups(rows);
    std::printf("# speedup depthwise %.3f full %.3f\n", s.depthwise, s.full);
    return kExitOk;
  }
  if (a.op != "full" && a.op != "depthwise") throw ParamError("--op must be full or depthwise");
  const bool dw = a.op == "depthwise";
  const ConvSpec spec = dw ? ConvSpec::dw3x3(1) : ConvSpec::full3x3(1);
  if (dw && dims.oc != dims.ic) throw ParamError("depthwise needs ic == oc in --dims");
  std::mt19937_64 rng(a.seed);
  const auto off = variant_offsets(a.variant, spec.out_dim(dims.h), spec.out_dim(dims.w), rng);
  MemConfig mem;
  if (a.design.empty()) {
    mem.design = a.variant == "deform" ? Design::kBaselineDram
                 : a.variant == "square" ? Design::kLineBufferMultiport
                                         : Design::kLineBuffer;
  } else {
    const auto des = design_from_string(a.design);
    if (!des) throw ParamError("unknown design '" + a.design + "'");
    mem.design = *des;
  }
  if (mem.design == Design::kBaselineDram && a.llc) mem.design = Design::kLlc;
  mem.use_llc = a.llc || mem.design == Design::kLlc;
  mem.line_buffer_rows = a.rows > 0 ? a.rows : (a.variant == "default" ? 3 : 15);
  mem.ports = mem.design == Design::kLineBufferMultiport ? 3 : 1;
  if (mem.design == Design::kLineBufferMultiport && a.variant != "square") {
    throw ParamError("invalid combination: line_buffer_multiport needs the square variant");
  }
  const Trace trace = gen_trace(spec, off, dims, eng);
  AblationRow row{to_string(mem.design), a.op + "/" + a.variant, mem.use_llc, simulate(trace, mem, eng)};
  std::cout << ablation_csv({row});
  return kExitOk;
}

struct CostArgs {
  std::string config = "c";
  std::string precision = "w4a8";
  bool layers = false;
};

int cmd_cost(const CostArgs& a) {
  Precision p;
  if (a.precision == "fp32") p = Precision::kFp32;
  else if (a.precision == "w4a8") p = Precision::kW4A8;
  else throw ParamError("--precision must be fp32 or w4a8");
  const NetworkGraph g = build_codenet(config_id(a.config));
  const CostReport r = count_cost(g, p);
  std::printf("config %c\nprecision %s\nparams %lld\nmacs %lld\ngmacs %.4f\nbytes %.0f\nsize_mb %.4f\n", g.config.id,
              a.precision.c_str(), static_cast<long long>(r.params), static_cast<long long>(r.macs),
              static_cast<double>(r.macs) * 1e-9, r.bytes, r.bytes * 1e-6);
  if (a.layers) {
    std::printf("%-28s %-18s %12s %14s %12s\n", "layer", "kind", "params", "macs", "bytes");
    for (const LayerCost& l : r.layers) {
      std::printf("%-28s %-18s %12lld %14lld %12.1f\n", l.name.c_str(), to_string(l.kind),
                  static_cast<long long>(l.params), static_cast<long long>(l.macs), l.bytes);
    }
  }
  return kExitOk;
}

struct GoldenArgs {
  std::string action;
  std::string dir;
  std::uint64_t seed = 1;
  int per_op = 3;
};

int cmd_golden(const GoldenArgs& a) {
  if (a.action == "generate") {
    const auto names = generate_golden(a.dir, a.seed, a.per_op);
    std::printf("generated %zu vectors in %s\n", names.size(), a.dir.c_str());
    return kExitOk;
  }
  const auto results = verify_golden(a.dir);
  std::size_t failed = 0;
  for (const auto& r : results) {
    if (r.pass()) {
      std::printf("PASS %s\n", r.vector.c_str());
      continue;
    }
    ++failed;
    std::printf("FAIL %s\n", r.vector.c_str());
    for (const auto& p : r.problems) std::printf("  %s: %s\n", r.vector.c_str(), printable(p).c_str());
  }
  std::printf("%zu/%zu vectors verified\n", results.size() - failed, results.size());
  return failed == 0 ? kExitOk : kExitVerify;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Deformable detector toolkit: quantization, inference, memory simulation"};
  app.require_subcommand(1);

  InitArgs init;
  auto* c_init = app.add_subcommand("init", "write a seeded fp32 model container");
  c_init->add_option("--config", init.config, "network config a..e")->capture_default_str();
  c_init->add_option("--classes", init.classes, "heatmap classes")->capture_default_str()->check(CLI::Range(1, 1000));
  c_init->add_option("--seed", init.seed, "weight seed")->capture_default_str();
  c_init->add_flag("--zero", init.zero, "all weights and biases zero");
  c_init->add_option("-o,--out", init.out, "output container")->required();

  ImageArgs image;
  auto* c_image = app.add_subcommand("image", "write a synthetic raw 8-bit image");
  c_image->add_option("--resolution", image.resolution, "square side")->capture_default_str();
  c_image->add_option("--seed", image.seed, "pattern seed")->capture_default_str();
  c_image->add_flag("--zero", image.zero, "mid-gray image (all codes zero)");
  c_image->add_option("-o,--out", image.out, "output image")->required();

  QuantizeArgs quant;
  auto* c_quant = app.add_subcommand("quantize", "fp32 container to w4a8 container");
  c_quant->add_option("input", quant.in, "fp32 container")->required();
  c_quant->add_option("output", quant.out, "w4a8 container")->required();
  c_quant->add_option("--calib", quant.calib, "directory of calibration images")->required();
  c_quant->add_option("--percentile", quant.percentile, "activation clipping percentile (default max-abs)")
      ->check(CLI::Range(0.0, 100.0));

  InferArgs infer;
  auto* c_infer = app.add_subcommand("infer", "integer inference and detection decode");
  c_infer->add_option("model", infer.model, "w4a8 container")->required();
  c_infer->add_option("image", infer.image, "raw image")->required();
  c_infer->add_option("--config", infer.config, "expected config id");
  c_infer->add_flag("--decode,!--no-decode", infer.decode, "print boxes (default) or raw peaks");
  c_infer->add_option("--score-thresh", infer.score_thresh, "drop peaks scoring below this")->capture_default_str();
  c_infer->add_option("--top-k", infer.top_k, "peaks kept")->capture_default_str()->check(CLI::Range(1, 100000));
  c_infer->add_option("--heads-out", infer.heads_out, "write raw head tensors to this container");

  BenchArgs bench;
  auto* c_bench = app.add_subcommand("bench", "memory-system simulation, CSV output");
  c_bench->add_option("--op", bench.op, "full or depthwise")->capture_default_str();
  c_bench->add_option("--variant", bench.variant, "default, deform, bound or square")->capture_default_str();
  c_bench->add_option("--design", bench.design, "baseline_dram, llc, line_buffer or line_buffer_multiport");
  c_bench->add_flag("--llc", bench.llc, "enable the last-level cache");
  c_bench->add_option("--dims", bench.dims, "h,w,ic,oc")->capture_default_str();
  c_bench->add_option("--seed", bench.seed, "offset seed")->capture_default_str();
  c_bench->add_option("--rows", bench.rows, "line buffer rows (default 3 regular, 15 deformable)");
  c_bench->add_flag("--table2", bench.table2, "full 8x2 ablation grid plus speedups");

  CostArgs cost;
  auto* c_cost = app.add_subcommand("cost", "parameter, size and MAC accounting");
  c_cost->add_option("--config", cost.config, "network config a..e")->capture_default_str();
  c_cost->add_option("--precision", cost.precision, "fp32 or w4a8")->capture_default_str();
  c_cost->add_flag("--layers", cost.layers, "per-layer table");

  GoldenArgs golden;
  auto* c_golden = app.add_subcommand("golden", "generate or verify integer-op golden vectors");
  c_golden->add_option("action", golden.action, "generate or verify")->required()->check(CLI::IsMember({"generate", "verify"}));
  c_golden->add_option("dir", golden.dir, "vector directory")->required();
  c_golden->add_option("--seed", golden.seed, "generation seed")->capture_default_str();
  c_golden->add_option("--per-op", golden.per_op, "vectors per op")->capture_default_str()->check(CLI::Range(1, 100));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitError;
  }
  try {
    if (*c_init) return cmd_init(init);
    if (*c_image) return cmd_image(image);
    if (*c_quant) return cmd_quantize(quant);
    if (*c_infer) return cmd_infer(infer);
    if (*c_bench) return cmd_bench(bench);
    if (*c_cost) return cmd_cost(cost);
    if (*c_golden) return cmd_golden(golden);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", printable(e.what()).c_str());
    return kExitError;
  }
  return kExitError;
}
