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
#include "l3sim/gpu_engine.hpp"

#include <algorithm>
#include <cmath>

namespace l3sim {

double GpuEngine::roofline_ns(double flops, double bytes) const {
  const double eff = topo_.gpu_efficiency;
  const double compute_ns = flops / (peak_flops() * eff) * 1e9;
  const double memory_ns = bytes / (topo_.gpu_hbm_bw * eff) * 1e9;
  return std::max(compute_ns, memory_ns);
}

GpuOpCost GpuEngine::prefill_mha(std::span<const std::uint32_t> chunks,
                                 std::span<const std::uint64_t> finished) const {
  if (chunks.size() != finished.size())
    throw GpuError("prefill_mha: chunk and finished-token lists differ in length");
  GpuOpCost cost;
  if (chunks.empty()) return cost;
  const double dh = model_.head_dim();
  for (std::size_t i = 0; i < chunks.size(); ++i) {
    if (chunks[i] == 0) continue;
    if (chunks[i] % 16 != 0)
      throw GpuError("prefill_mha: chunk sizes must be multiples of 16");
    const double c = chunks[i];
    const double f = double(finished[i]);
    // Score + context of the chunk against the whole context so far.
    cost.flops += 2.0 * model_.layers * model_.heads * (2.0 * c * (f + c) * dh);
    // KV of the context read once, QKV of the chunk written.
    cost.bytes += (2.0 * (f + c) + 3.0 * c) * model_.embedding * model_.precision_bytes *
                  double(model_.layers);
  }
  const double core = roofline_ns(cost.flops, cost.bytes);
  cost.bound = cost.flops / (peak_flops() * topo_.gpu_efficiency) * 1e9 >=
                       cost.bytes / (topo_.gpu_hbm_bw * topo_.gpu_efficiency) * 1e9
                   ? GpuOpCost::COMPUTE
                   : GpuOpCost::MEMORY;
  cost.latency_ns = core + topo_.gpu_launch_overhead_ns;
  cost.spare_hbm_bw =
      std::max(0.0, topo_.gpu_hbm_bw * (1.0 - cost.bytes / (topo_.gpu_hbm_bw * core * 1e-9)));
  return cost;
}

GpuOpCost GpuEngine::fc_batch(std::uint64_t total_tokens) const {
  GpuOpCost cost;
  if (total_tokens == 0) {
    cost.latency_ns = topo_.gpu_launch_overhead_ns;
    cost.spare_hbm_bw = topo_.gpu_hbm_bw;
    return cost;
  }
  cost.flops = double(total_tokens) * fc_flops_per_token(model_);
  cost.bytes = double(weight_bytes(model_)) +
               double(total_tokens) * model_.embedding * model_.precision_bytes * model_.layers;
  double core = roofline_ns(cost.flops, cost.bytes);
  // Tensor-parallel all-reduce: two per layer, activation-sized.
  if (topo_.gpu_count > 1 && total_tokens > 0) {
    const double allreduce_bytes =
        2.0 * double(total_tokens) * model_.embedding * model_.precision_bytes * model_.layers;
    core += allreduce_bytes / topo_.nvlink_bw * 1e9;
  }
  cost.bound = cost.flops / (peak_flops() * topo_.gpu_efficiency) >=
                       cost.bytes / (topo_.gpu_hbm_bw * topo_.gpu_efficiency)
                   ? GpuOpCost::COMPUTE
                   : GpuOpCost::MEMORY;
  cost.latency_ns = core + topo_.gpu_launch_overhead_ns;
  cost.spare_hbm_bw =
      core > 0
          ? std::max(0.0, topo_.gpu_hbm_bw * (1.0 - cost.bytes / (topo_.gpu_hbm_bw * core * 1e-9)))
          : 0.0;
  return cost;
}

OverlapResult GpuEngine::overlap_headroom(const GpuOpCost& fc_cost, Bytes async_bytes) const {
  OverlapResult r;
  if (async_bytes == 0) {
    r.hidden = true;
    return r;
  }
  const double window_ns = fc_cost.latency_ns;
  const double transfer_ns = double(async_bytes) / topo_.pcie_bw * 1e9;
  const double spare_bytes = fc_cost.spare_hbm_bw * window_ns * 1e-9;
  const bool pcie_fits = transfer_ns <= window_ns;
  const bool hbm_fits = double(async_bytes) <= spare_bytes;
  r.hidden = pcie_fits && hbm_fits;
  if (!r.hidden) {
    r.residual_ns = std::max(0.0, transfer_ns - window_ns);
    if (!hbm_fits && spare_bytes >= 0) {
      // HBM contention: the uncovered bytes steal bandwidth from the FC op.
      const double uncovered = double(async_bytes) - spare_bytes;
      if (uncovered > 0) r.residual_ns = std::max(r.residual_ns, uncovered / topo_.gpu_hbm_bw * 1e9);
    }
  }
  return r;
}

double GpuEngine::decode_mha_at_bw(std::span<const std::uint64_t> context_tokens,
                                   double bw) const {
  if (bw <= 0) throw GpuError("decode_mha_at_bw: bandwidth must be > 0");
  double bytes = 0;
  for (std::uint64_t t : context_tokens) bytes += double(t) * kv_bytes_per_token(model_);
  return bytes / bw * 1e9;
}

}  // namespace l3sim
