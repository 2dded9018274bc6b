/* Copyright 2026 the l3sim authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "l3sim/config.hpp"

namespace l3sim {

struct GpuError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Roofline cost of one kernel group. Efficiency derates the peaks, so
/// latency >= flops/peak and latency >= bytes/bw always hold.
struct GpuOpCost {
  double flops = 0;
  double bytes = 0;
  double latency_ns = 0;
  enum Bound { COMPUTE, MEMORY } bound = COMPUTE;
  double spare_hbm_bw = 0;  // bytes/s left over during this op's window
};

struct OverlapResult {
  bool hidden = false;
  double residual_ns = 0;  // uncovered transfer time added to the iteration
};

/// Analytical GPU-side model: prefill MHA (t_p) and batched FC (t_batch).
class GpuEngine {
 public:
  GpuEngine(const LlmModel& m, const HwTopology& topo) : model_(m), topo_(topo) {}

  // Prefill MHA over per-request (chunk, finished) pairs; kernels serialize
  // across requests. Chunks must be multiples of 16.
  GpuOpCost prefill_mha(std::span<const std::uint32_t> chunks,
                        std::span<const std::uint64_t> finished) const;

  // Batched FC (QKV gen + projection + FFN) over total_tokens; model weights
  // stream once per iteration; tensor-parallel all-reduce charged against
  // nvlink.
  GpuOpCost fc_batch(std::uint64_t total_tokens) const;

  // Can async_bytes of prefill-KV offload hide under this FC window?
  OverlapResult overlap_headroom(const GpuOpCost& fc_cost, Bytes async_bytes) const;

  // Decode MHA executed on the GPU itself at `bw` bytes/s effective memory
  // bandwidth (baseline policies swap this bandwidth).
  double decode_mha_at_bw(std::span<const std::uint64_t> context_tokens, double bw) const;

  double peak_flops() const { return topo_.gpu_tflops_fp16 * 1e12; }

 private:
  double roofline_ns(double flops, double bytes) const;
  LlmModel model_;
  HwTopology topo_;
};

}  // namespace l3sim
