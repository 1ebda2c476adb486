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

#ifndef DFX_MEMSIM_HPP_
#define DFX_MEMSIM_HPP_

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "dfx/ops.hpp"

namespace dfx {

enum class Design : std::uint8_t { kBaselineDram, kLlc, kLineBuffer, kLineBufferMultiport };

const char* to_string(Design design);
std::optional<Design> design_from_string(const std::string& name);

struct LlcConfig {
  std::int64_t size = 1 << 20;
  int assoc = 16;
  int line = 64;
  std::uint16_t seed = 0xACE1;  // replacement LFSR seed
};

struct MemConfig {
  Design design = Design::kBaselineDram;
  // Line-buffer designs: row fills pass through the LLC. Implied by kLlc.
  bool use_llc = false;
  LlcConfig llc;
  int line_buffer_rows = 15;
  int ports = 1;
  int dram_cycles = 100;        // first-word latency
  int llc_hit_cycles = 2;
  int buffer_hit_cycles = 1;
  int dram_bytes_per_cycle = 16;
  int outstanding = 4;          // overlapped DRAM/LLC requests
  int port_bytes = 16;          // line-buffer word per port per cycle

  bool llc_enabled() const { return design == Design::kLlc || use_llc; }
  // Throws ParamError on non-positive sizes, non power-of-two set counts,
  // or a port count other than 1 or 3.
  void validate() const;
};

struct EngineConfig {
  int macs_1x1 = 16 * 16;
  int macs_dw = 16 * 9;
  int macs_full3x3 = 8 * 8 * 9;
  int clock_mhz = 250;
  int oc_tile = 64;  // output channels per pass of the full 3x3 engine

  double peak_gops_1x1() const { return 2.0 * macs_1x1 * clock_mhz * 1e6 / 1e9; }
  double peak_gops_dw() const { return 2.0 * macs_dw * clock_mhz * 1e6 / 1e9; }
  double peak_gops_full3x3() const { return 2.0 * macs_full3x3 * clock_mhz * 1e6 / 1e9; }
};

struct TraceDims {
  std::int64_t h = 64;
  std::int64_t w = 64;
  std::int64_t ic = 256;
  std::int64_t oc = 256;
};

enum class AccessKind : std::uint8_t { kInput, kOffset };

struct Access {
  std::uint64_t addr = 0;
  std::uint32_t bytes = 0;
  AccessKind kind = AccessKind::kInput;
  std::int32_t row = 0;  // input row for kInput
  std::int8_t tap = 0;
};

// One engine step: an output position (and output-channel pass for the
// full engine) with the reads it issues.
struct TraceStep {
  std::int64_t oy = 0;
  std::int64_t ox = 0;
  int pass = 0;
  std::uint32_t first = 0;  // into Trace::accesses
  std::uint32_t count = 0;
};

struct Trace {
  ConvSpec spec;
  TraceDims dims;
  bool deformable = false;
  OffsetMode mode = OffsetMode::kBoundedInt;
  std::int64_t macs = 0;
  int passes = 1;
  std::uint64_t input_base = 0;
  std::uint64_t offset_base = 0;
  std::int64_t weight_bytes = 0;   // 4-bit weights
  std::int64_t output_bytes = 0;
  std::int64_t offset_bytes = 0;
  std::vector<TraceStep> steps;
  std::vector<Access> accesses;
};

// Reads of a 3x3 (deformable) convolution in engine order. Inputs are
// NHWC bytes; a tap reads all ic channels of one pixel. Out-of-image
// taps issue no read. `off` must be integer-valued and cover the output.
Trace gen_trace(const ConvSpec& spec, const std::optional<OffsetField>& off, const TraceDims& dims,
                const EngineConfig& eng = {});

struct SimReport {
  std::int64_t cycles = 0;
  double latency_ms = 0;
  double gops = 0;
  std::int64_t macs = 0;
  std::int64_t dram_bytes_read = 0;
  std::int64_t dram_bytes_written = 0;
  std::int64_t dram_input_bytes = 0;
  std::int64_t llc_hits = 0;
  std::int64_t llc_misses = 0;
  std::int64_t buffer_hits = 0;
  std::int64_t stalls = 0;
  std::int64_t compute_cycles = 0;
  std::int64_t stream_cycles = 0;
  std::int64_t read_cycles = 0;  // per-step input/offset delivery, summed
  bool operator==(const SimReport&) const = default;
};

// Event-count model. Each step costs max(compute, input delivery); row
// fills, offsets (buffered designs), weights and outputs stream at DRAM
// bandwidth in parallel, and the initial buffer fill is exposed.
SimReport simulate(const Trace& trace, const MemConfig& mem, const EngineConfig& eng = {});

enum class RooflineBound : std::uint8_t { kCompute, kMemory };

struct Roofline {
  double threshold = 0;   // OPs per (input, weight) pair at the knee
  double intensity = 0;   // of the given layer
  RooflineBound bound = RooflineBound::kCompute;
};

// Threshold = peak GOPs / pair-load rate, a pair being one 8-bit input and
// one 4-bit weight. The layer's intensity is 2 MACs over the pairs it must
// load once (inputs + weights).
Roofline roofline(const ConvSpec& spec, const TraceDims& dims, const EngineConfig& eng = {},
                  double dram_gbps = 6.0);

struct AblationRow {
  std::string design;
  std::string operation;  // "<full|depthwise>/<default|deform|bound|square>"
  bool llc = false;
  SimReport report;
};

// The eight operation rows (default, deform, bound, square for the full
// and depthwise 3x3) without and with the LLC.
// Seeded offsets of an ablation variant: none for "default", free_int in
// [-8, 7] for "deform", bounded_int in [0, 7] for "bound", d in [0, 7] for
// "square". Throws ParamError on other names.
std::optional<OffsetField> variant_offsets(std::string_view variant, std::int64_t oh, std::int64_t ow,
                                           std::mt19937_64& rng);

std::vector<AblationRow> ablation_table(const TraceDims& dims, std::uint64_t seed,
                                        const EngineConfig& eng = {});

std::string ablation_csv(const std::vector<AblationRow>& rows);

struct Speedups {
  double depthwise = 0;  // baseline deform / buffered square, no LLC
  double full = 0;
};
Speedups table_speedups(const std::vector<AblationRow>& rows);

}  // namespace dfx

#endif  // DFX_MEMSIM_HPP_
