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

#ifndef DFX_GOLDEN_HPP_
#define DFX_GOLDEN_HPP_

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dfx/container.hpp"

namespace dfx {

// A golden vector is a container whose descriptor names the op, its seed,
// attributes and tolerance (always 0: every op here is integer), and
// whose tensors hold the inputs and the expected output. A digest of
// everything but the digest line itself catches any corrupted byte.
std::vector<std::string> golden_ops();

// Random instance of `op`; the kernel output must equal the scalar
// oracle before it is frozen (throws Error otherwise).
Container make_golden(const std::string& op, std::uint64_t seed);

// Replays the kernel on the stored inputs. Returns one message per
// problem (digest, replay errors, differing elements); empty means pass.
std::vector<std::string> check_golden(const Container& c, std::size_t max_reports = 8);

struct GoldenResult {
  std::string vector;  // file name
  std::vector<std::string> problems;
  bool pass() const { return problems.empty(); }
};

// Writes `per_op` vectors of each op as NN_op.cdnt; returns file names.
std::vector<std::string> generate_golden(const std::filesystem::path& dir, std::uint64_t seed,
                                         int per_op = 3);
// Checks every *.cdnt in `dir` in name order. Unparseable files fail.
std::vector<GoldenResult> verify_golden(const std::filesystem::path& dir);

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes);

}  // namespace dfx

#endif  // DFX_GOLDEN_HPP_
