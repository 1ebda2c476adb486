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

#include "dfx/memsim.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <random>

#include "dfx/error.hpp"
#include "dfx/rng.hpp"

namespace dfx {

namespace {

constexpr std::array<const char*, 4> kDesignNames = {"baseline_dram", "llc", "line_buffer",
                                                     "line_buffer_multiport"};

std::int64_t ceil_div(std::int64_t a, std::int64_t b) { return (a + b - 1) / b; }

bool is_pow2(std::int64_t v) { return v > 0 && (v & (v - 1)) == 0; }

// Set-associative cache with a per-set Galois LFSR choosing victims once
// the set is full.
class Llc {
 public:
  explicit Llc(const LlcConfig& cfg)
      : line_(cfg.line), assoc_(cfg.assoc), sets_(cfg.size / (cfg.assoc * cfg.line)),
        tags_(static_cast<std::size_t>(sets_ * assoc_), 0),
        valid_(static_cast<std::size_t>(sets_ * assoc_), 0),
        lfsr_(static_cast<std::size_t>(sets_)) {
    for (std::int64_t s = 0; s < sets_; ++s) {
      auto v = static_cast<std::uint16_t>(cfg.seed ^ static_cast<std::uint16_t>(s * 0x9E37));
      lfsr_[static_cast<std::size_t>(s)] = v == 0 ? 1 : v;
    }
  }

  // True on a hit; a miss installs the line.
  bool access(std::uint64_t line_addr) {
    const auto set = static_cast<std::int64_t>(line_addr % static_cast<std::uint64_t>(sets_));
    const std::uint64_t tag = line_addr / static_cast<std::uint64_t>(sets_);
    const auto base = static_cast<std::size_t>(set * assoc_);
    for (int wy = 0; wy < assoc_; ++wy) {
      if (valid_[base + static_cast<std::size_t>(wy)] && tags_[base + static_cast<std::size_t>(wy)] == tag) return true;
    }
    std::size_t victim = base;
    bool found = false;
    for (int wy = 0; wy < assoc_; ++wy) {
      if (!valid_[base + static_cast<std::size_t>(wy)]) {
        victim = base + static_cast<std::size_t>(wy);
        found = true;
        break;
      }
    }
    if (!found) victim = base + static_cast<std::size_t>(next(static_cast<std::size_t>(set)) % static_cast<unsigned>(assoc_));
    tags_[victim] = tag;
    valid_[victim] = 1;
    return false;
  }

 private:
  std::uint16_t next(std::size_t set) {
    std::uint16_t s = lfsr_[set];
    const bool lsb = (s & 1U) != 0;
    s = static_cast<std::uint16_t>(s >> 1);
    if (lsb) s ^= 0xB400U;
    lfsr_[set] = s;
    return s;
  }

  std::int64_t line_;
  int assoc_;
  std::int64_t sets_;
  std::vector<std::uint64_t> tags_;
  std::vector<std::uint8_t> valid_;
  std::vector<std::uint16_t> lfsr_;
};

// Rows of the input held on chip. Rows enter in order as they are first
// needed; a row that has slid out of the window is fetched again.
class LineWindow {
 public:
  LineWindow(std::int64_t h, int rows) : h_(h), rows_(rows) {}

  // Rows to fetch for a read of `row`.
  template <typename Fetch>
  void touch(std::int64_t row, Fetch&& fetch) {
    if (row > max_loaded_) {
      for (std::int64_t r = max_loaded_ + 1; r <= row; ++r) fetch(r);
      max_loaded_ = row;
    } else if (row <= max_loaded_ - rows_) {
      fetch(row);
    }
  }

  template <typename Fetch>
  void drain(Fetch&& fetch) {
    for (std::int64_t r = max_loaded_ + 1; r < h_; ++r) fetch(r);
    max_loaded_ = h_ - 1;
  }

 private:
  std::int64_t h_;
  int rows_;
  std::int64_t max_loaded_ = -1;
};

}  // namespace

const char* to_string(Design design) { return kDesignNames.at(static_cast<std::size_t>(design)); }

std::optional<Design> design_from_string(const std::string& name) {
  for (std::size_t i = 0; i < kDesignNames.size(); ++i) {
    if (name == kDesignNames[i]) return static_cast<Design>(i);
  }
  return std::nullopt;
}

void MemConfig::validate() const {
  if (llc.size <= 0 || llc.assoc <= 0 || llc.line <= 0 || llc.size % (llc.assoc * llc.line) != 0 ||
      !is_pow2(llc.size / (llc.assoc * llc.line)) || !is_pow2(llc.line)) {
    throw ParamError("LLC size/assoc/line must give a power-of-two number of sets");
  }
  if (line_buffer_rows < 1) throw ParamError("line buffer needs at least one row");
  if (ports != 1 && ports != 3) throw ParamError("ports must be 1 or 3");
  if (ports == 3 && design != Design::kLineBufferMultiport) {
    throw ParamError("three ports need the multiport line buffer design");
  }
  if (dram_cycles < 0 || llc_hit_cycles < 0 || buffer_hit_cycles < 0 || dram_bytes_per_cycle <= 0 ||
      outstanding <= 0 || port_bytes <= 0) {
    throw ParamError("latencies must be >= 0 and bandwidths > 0");
  }
}

Trace gen_trace(const ConvSpec& spec, const std::optional<OffsetField>& off, const TraceDims& dims,
                const EngineConfig& eng) {
  spec.validate();
  if (spec.kernel != 3) throw ParamError("traces model 3x3 convolutions only");
  if (dims.h < 1 || dims.w < 1 || dims.ic < 1 || dims.oc < 1) throw ShapeError("trace dims must be >= 1");
  if (spec.depthwise && dims.oc != dims.ic) throw ShapeError("depthwise trace needs oc == ic");
  if (eng.oc_tile < 1) throw ParamError("oc_tile must be >= 1");
  Trace t;
  t.spec = spec;
  t.dims = dims;
  const std::int64_t oh = spec.out_dim(dims.h);
  const std::int64_t ow = spec.out_dim(dims.w);
  if (off) {
    off->validate();
    if (!off->is_integer()) throw ParamError("traces need integer offsets");
    if (off->n != 1 || off->h != oh || off->w != ow) {
      throw ShapeError("offset field does not cover the " + std::to_string(oh) + "x" +
                       std::to_string(ow) + " output");
    }
    t.deformable = true;
    t.mode = off->mode;
  }
  t.passes = spec.depthwise ? 1 : static_cast<int>(ceil_div(dims.oc, eng.oc_tile));
  t.macs = oh * ow * spec.macs_per_position(dims.ic, dims.oc);
  const std::int64_t input_bytes = dims.h * dims.w * dims.ic;
  t.offset_base = static_cast<std::uint64_t>(ceil_div(input_bytes, 4096) * 4096);
  const int och = off ? off->channels() : 0;
  t.offset_bytes = oh * ow * och;
  t.weight_bytes = ceil_div(9 * (spec.depthwise ? 1 : dims.ic) * dims.oc, 2);
  t.output_bytes = oh * ow * dims.oc;
  t.steps.reserve(static_cast<std::size_t>(oh * ow * t.passes));
  for (std::int64_t oy = 0; oy < oh; ++oy) {
    for (std::int64_t ox = 0; ox < ow; ++ox) {
      const std::int64_t pos = oy * ow + ox;
      for (int pass = 0; pass < t.passes; ++pass) {
        TraceStep step;
        step.oy = oy;
        step.ox = ox;
        step.pass = pass;
        step.first = static_cast<std::uint32_t>(t.accesses.size());
        // Offsets stay in the engine across the output-channel passes.
        if (off && pass == 0) {
          t.accesses.push_back({t.offset_base + static_cast<std::uint64_t>(pos * och),
                                static_cast<std::uint32_t>(och), AccessKind::kOffset, 0, 0});
        }
        for (int tap = 0; tap < kTaps; ++tap) {
          const int ky = tap / 3;
          const int kx = tap % 3;
          std::int64_t iy = oy * spec.stride - spec.padding + ky;
          std::int64_t ix = ox * spec.stride - spec.padding + kx;
          if (off) {
            iy += static_cast<std::int64_t>(off->dy(pos, tap));
            ix += static_cast<std::int64_t>(off->dx(pos, tap));
          }
          if (iy < 0 || ix < 0 || iy >= dims.h || ix >= dims.w) continue;
          t.accesses.push_back({static_cast<std::uint64_t>((iy * dims.w + ix) * dims.ic),
                                static_cast<std::uint32_t>(dims.ic), AccessKind::kInput,
                                static_cast<std::int32_t>(iy), static_cast<std::int8_t>(tap)});
        }
        step.count = static_cast<std::uint32_t>(t.accesses.size()) - step.first;
        t.steps.push_back(step);
      }
    }
  }
  return t;
}

SimReport simulate(const Trace& trace, const MemConfig& mem, const EngineConfig& eng) {
  mem.validate();
  SimReport r;
  if (trace.steps.empty()) return r;
  const bool buffered = mem.design == Design::kLineBuffer || mem.design == Design::kLineBufferMultiport;
  const bool multiport = mem.design == Design::kLineBufferMultiport;
  if (multiport && trace.deformable && trace.mode != OffsetMode::kSquare) {
    throw ParamError("multiport line buffer needs square-shaped sampling (3 taps per row)");
  }
  const auto& d = trace.dims;
  const std::int64_t line = mem.llc.line;
  const double burst = static_cast<double>(mem.dram_cycles) / mem.outstanding;
  const double xfer = static_cast<double>(line) / mem.dram_bytes_per_cycle;
  const double hit = static_cast<double>(mem.llc_hit_cycles) / mem.outstanding;
  const std::int64_t engine_macs = trace.spec.depthwise ? eng.macs_dw : eng.macs_full3x3;

  std::optional<Llc> llc;
  if (mem.llc_enabled()) llc.emplace(mem.llc);
  LineWindow window(d.h, mem.line_buffer_rows);
  std::int64_t fill_bytes = 0;
  auto fetch_row = [&](std::int64_t row) {
    const std::int64_t bytes = d.w * d.ic;
    if (llc) {
      const std::uint64_t first = static_cast<std::uint64_t>(row * bytes) / static_cast<std::uint64_t>(line);
      const std::uint64_t last = static_cast<std::uint64_t>(row * bytes + bytes - 1) / static_cast<std::uint64_t>(line);
      for (std::uint64_t l = first; l <= last; ++l) {
        if (llc->access(l)) {
          ++r.llc_hits;
        } else {
          ++r.llc_misses;
          r.dram_input_bytes += line;
        }
      }
    } else {
      r.dram_input_bytes += bytes;
    }
    fill_bytes += bytes;
  };

  double step_total = 0;
  double stall_total = 0;
  double read_total = 0;
  std::uint64_t prev_end = ~0ULL;
  std::int64_t offset_dram = 0;
  for (const TraceStep& s : trace.steps) {
    const std::int64_t oc_here =
        trace.spec.depthwise ? 1 : std::min<std::int64_t>(eng.oc_tile, d.oc - s.pass * eng.oc_tile);
    const std::int64_t step_macs = 9 * d.ic * oc_here;
    const auto compute = static_cast<double>(ceil_div(step_macs, engine_macs));
    r.compute_cycles += static_cast<std::int64_t>(compute);
    double mem_cycles = 0;
    std::array<double, 3> port_words{};
    for (std::uint32_t i = s.first; i < s.first + s.count; ++i) {
      const Access& a = trace.accesses[i];
      if (buffered) {
        if (a.kind == AccessKind::kOffset) {
          offset_dram += a.bytes;
          continue;
        }
        window.touch(a.row, fetch_row);
        ++r.buffer_hits;
        const double words = static_cast<double>(ceil_div(a.bytes, mem.port_bytes)) * mem.buffer_hit_cycles;
        port_words[static_cast<std::size_t>(multiport ? a.tap / 3 : 0)] += words;
        continue;
      }
      const std::uint64_t first = a.addr / static_cast<std::uint64_t>(line);
      const std::uint64_t last = (a.addr + a.bytes - 1) / static_cast<std::uint64_t>(line);
      const bool sequential = a.addr == prev_end;
      prev_end = a.addr + a.bytes;
      // Sample addresses depend on the offsets, so an offset read exposes
      // its full latency instead of overlapping with other requests.
      const bool dependent = a.kind == AccessKind::kOffset;
      if (!llc) {
        mem_cycles += (dependent ? mem.dram_cycles : sequential ? 0.0 : burst) +
                      static_cast<double>(last - first + 1) * xfer;
        const auto bytes = static_cast<std::int64_t>(last - first + 1) * line;
        if (a.kind == AccessKind::kInput) r.dram_input_bytes += bytes; else offset_dram += bytes;
        continue;
      }
      bool open_burst = sequential;
      for (std::uint64_t l = first; l <= last; ++l) {
        if (llc->access(l)) {
          ++r.llc_hits;
          mem_cycles += (dependent ? mem.llc_hit_cycles : hit) + xfer;
        } else {
          ++r.llc_misses;
          mem_cycles += (dependent ? mem.dram_cycles : open_burst ? 0.0 : burst) + xfer;
          open_burst = true;
          if (a.kind == AccessKind::kInput) r.dram_input_bytes += line; else offset_dram += line;
        }
      }
    }
    if (buffered) {
      // The regular stencil shifts through window registers at the
      // compute rate; sampled reads go through the buffer ports.
      mem_cycles = trace.deformable ? *std::max_element(port_words.begin(), port_words.end()) : 0.0;
    }
    read_total += mem_cycles;
    const double step = std::max(compute, mem_cycles);
    step_total += step;
    stall_total += step - compute;
  }
  if (buffered) window.drain(fetch_row);

  const std::int64_t streamed = fill_bytes + (buffered ? offset_dram : 0) + trace.weight_bytes + trace.output_bytes;
  r.stream_cycles = ceil_div(streamed, mem.dram_bytes_per_cycle);
  const double exposed = buffered
      ? static_cast<double>(std::min<std::int64_t>(mem.line_buffer_rows, d.h) * d.w * d.ic) / mem.dram_bytes_per_cycle
      : static_cast<double>(mem.dram_cycles);
  r.cycles = static_cast<std::int64_t>(std::ceil(std::max(step_total, static_cast<double>(r.stream_cycles)) + exposed));
  r.stalls = static_cast<std::int64_t>(std::llround(stall_total));
  r.read_cycles = static_cast<std::int64_t>(std::llround(read_total));
  r.macs = trace.macs;
  r.dram_bytes_read = r.dram_input_bytes + offset_dram + trace.weight_bytes;
  r.dram_bytes_written = trace.output_bytes;
  const double seconds = static_cast<double>(r.cycles) / (eng.clock_mhz * 1e6);
  r.latency_ms = seconds * 1e3;
  r.gops = 2.0 * static_cast<double>(r.macs) / seconds / 1e9;
  return r;
}

Roofline roofline(const ConvSpec& spec, const TraceDims& dims, const EngineConfig& eng, double dram_gbps) {
  spec.validate();
  if (!(dram_gbps > 0)) throw ParamError("DRAM bandwidth must be positive");
  double peak = 0;
  if (spec.kernel == 1) {
    peak = eng.peak_gops_1x1();
  } else {
    peak = spec.depthwise ? eng.peak_gops_dw() : eng.peak_gops_full3x3();
  }
  // One pair = an 8-bit input plus a 4-bit weight = 1.5 bytes.
  const double pairs_per_s = dram_gbps * 1e9 / 1.5;
  Roofline rl;
  rl.threshold = peak * 1e9 / pairs_per_s;
  const std::int64_t oh = spec.out_dim(dims.h);
  const std::int64_t ow = spec.out_dim(dims.w);
  const std::int64_t oc = spec.depthwise ? dims.ic : dims.oc;
  const double macs = static_cast<double>(oh * ow * spec.macs_per_position(dims.ic, oc));
  const Shape4 ws = spec.weight_shape(dims.ic, oc);
  const double pairs = static_cast<double>(dims.h * dims.w * dims.ic + ws.count());
  rl.intensity = 2.0 * macs / pairs;
  rl.bound = rl.intensity >= rl.threshold ? RooflineBound::kCompute : RooflineBound::kMemory;
  return rl;
}

namespace {

OffsetField random_offsets(std::mt19937_64& rng, OffsetMode mode, std::int64_t h, std::int64_t w,
                           int lo, int hi) {
  OffsetField f = OffsetField::zeros(mode, 1, h, w, mode == OffsetMode::kBoundedInt ? lo : -8,
                                     mode == OffsetMode::kFreeInt ? 7 : hi);
  for (auto& v : f.ints) v = static_cast<std::int32_t>(draw_int(rng, lo, hi));
  return f;
}

}  // namespace

std::optional<OffsetField> variant_offsets(std::string_view variant, std::int64_t oh, std::int64_t ow,
                                           std::mt19937_64& rng) {
  if (variant == "default") return std::nullopt;
  if (variant == "deform") return random_offsets(rng, OffsetMode::kFreeInt, oh, ow, -8, 7);
  if (variant == "bound") return random_offsets(rng, OffsetMode::kBoundedInt, oh, ow, 0, 7);
  if (variant == "square") return random_offsets(rng, OffsetMode::kSquare, oh, ow, 0, 7);
  throw ParamError("unknown variant '" + std::string(variant) + "' (default|deform|bound|square)");
}

std::vector<AblationRow> ablation_table(const TraceDims& dims, std::uint64_t seed, const EngineConfig& eng) {
  std::mt19937_64 rng(seed);
  std::vector<AblationRow> rows;
  std::vector<AblationRow> with_llc;
  for (const bool dw : {false, true}) {
    const ConvSpec spec = dw ? ConvSpec::dw3x3(1) : ConvSpec::full3x3(1);
    TraceDims td = dims;
    if (dw) td.oc = td.ic;
    const std::int64_t oh = spec.out_dim(td.h);
    const std::int64_t ow = spec.out_dim(td.w);
    const std::string op = dw ? "depthwise" : "full";
    struct Variant {
      const char* name;
      std::optional<OffsetField> off;
      Design design;
      int rows;
    };
    std::vector<Variant> variants;
    variants.push_back({"default", std::nullopt, Design::kLineBuffer, 3});
    variants.push_back({"deform", variant_offsets("deform", oh, ow, rng), Design::kBaselineDram, 3});
    variants.push_back({"bound", variant_offsets("bound", oh, ow, rng), Design::kLineBuffer, 15});
    variants.push_back({"square", variant_offsets("square", oh, ow, rng),
                        Design::kLineBufferMultiport, 15});
    for (const Variant& v : variants) {
      const Trace trace = gen_trace(spec, v.off, td, eng);
      for (const bool use_llc : {false, true}) {
        MemConfig mem;
        mem.design = v.design == Design::kBaselineDram && use_llc ? Design::kLlc : v.design;
        mem.use_llc = use_llc;
        mem.line_buffer_rows = v.rows;
        mem.ports = v.design == Design::kLineBufferMultiport ? 3 : 1;
        AblationRow row{to_string(mem.design), op + "/" + v.name, use_llc, simulate(trace, mem, eng)};
        (use_llc ? with_llc : rows).push_back(std::move(row));
      }
    }
  }
  rows.insert(rows.end(), with_llc.begin(), with_llc.end());
  return rows;
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::string out = "design,operation,llc,latency_ms,gops,dram_bytes,llc_hits,llc_misses,buffer_hits,stalls\n";
  char line[256];
  for (const auto& r : rows) {
    const SimReport& s = r.report;
    std::snprintf(line, sizeof line, "%s,%s,%d,%.4f,%.2f,%lld,%lld,%lld,%lld,%lld\n", r.design.c_str(),
                  r.operation.c_str(), r.llc ? 1 : 0, s.latency_ms, s.gops,
                  static_cast<long long>(s.dram_bytes_read + s.dram_bytes_written),
                  static_cast<long long>(s.llc_hits), static_cast<long long>(s.llc_misses),
                  static_cast<long long>(s.buffer_hits), static_cast<long long>(s.stalls));
    out += line;
  }
  return out;
}

Speedups table_speedups(const std::vector<AblationRow>& rows) {
  auto latency = [&](const std::string& op) {
    for (const auto& r : rows) {
      if (!r.llc && r.operation == op) return r.report.latency_ms;
    }
    throw ParamError("ablation table has no row " + op);
  };
  return {latency("depthwise/deform") / latency("depthwise/square"),
          latency("full/deform") / latency("full/square")};
}

}  // namespace dfx
