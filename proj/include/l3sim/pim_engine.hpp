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
#include <utility>
#include <vector>

#include "l3sim/config.hpp"
#include "l3sim/kv_mapping.hpp"

namespace l3sim {

struct PimError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Buffer-chip processing unit: relayout + configurable adder tree + softmax
/// unit + result buffer.
struct RankPuParams {
  Bytes buffer_bytes = 262144;        // caps tokens processed without re-fetch
  std::uint32_t adder_lanes = 8;      // fp16 adders, tree or accumulator mode
  std::uint32_t softmax_chunk = 16;   // == logic banks per rank
  std::uint32_t su_cycles_per_elem = 2;
  std::uint32_t su_pipeline_depth = 8;
  std::uint32_t final_agg_cycles = 16;
};

/// Per-bank MAC unit: four 16-bit multiplier/adder pairs fed by one 64-bit
/// row-buffer read.
struct BankPuParams {
  std::uint32_t multipliers = 4;
  std::uint32_t adders = 4;
};

struct PimKernelResult {
  double latency_ns = 0;
  std::uint64_t acts = 0;
  std::uint64_t reads = 0;
  std::uint64_t refs = 0;
  double bubble_ns = 0;
  std::vector<double> output;  // functional mode only
};

struct PimCommand {
  std::uint64_t cycle = 0;
  enum Kind { ACT, RD, PRE, REF } kind = ACT;
  std::int32_t bank = -1;  // -1 == all banks (broadcast)
  std::int32_t row = -1;
};

enum class AccumMode { FP16, FP64 };

/// Latency and functional model of one rank's decode-MHA execution.
class PimEngine {
 public:
  PimEngine(const LlmModel& m, const HwTopology& topo, const DdrTiming& timing,
            RankPuParams rank_pu = {}, BankPuParams bank_pu = {});

  // Column commands per token-group in either phase: head_dim elements per
  // chip, 64-bit row reads, fp16 -> head_dim / (chips * 4).
  std::uint32_t reads_per_group() const { return reads_per_group_; }
  std::uint32_t token_groups(std::uint64_t tokens) const;
  std::uint64_t buffer_token_capacity() const;

  // Score phase: q . K^T over all tokens resident on this rank, adder trees.
  PimKernelResult score_phase(std::uint64_t tokens) const;
  // Context phase: s . V, accumulators; symmetric read volume to score.
  PimKernelResult context_phase(std::uint64_t tokens) const;
  // Fused score -> chunked softmax -> context for one head, including the
  // inter-phase row switch and the softmax drain; bubble_ns reports any
  // pipeline stall the rank PU rates would introduce.
  PimKernelResult fused_head(std::uint64_t tokens) const;

  // Command stream of one phase for trace dumps and oracle comparison.
  std::vector<PimCommand> command_stream(std::uint64_t tokens, bool score_then_context) const;

  // Functional paths (one head). K/V are token-major: K[t*D_h + j].
  std::vector<double> score_values(std::span<const double> q, std::span<const double> k,
                                   std::uint64_t tokens, AccumMode mode) const;
  std::vector<double> context_values(std::span<const double> s, std::span<const double> v,
                                     std::uint64_t tokens, AccumMode mode) const;
  std::vector<double> attend(std::span<const double> q, std::span<const double> k,
                             std::span<const double> v, std::uint64_t tokens, AccumMode mode) const;

  const RankPuParams& rank_pu() const { return rank_pu_; }
  const DdrTiming& timing() const { return timing_; }

 private:
  double score_chunk_interval_cycles() const;
  double score_deficit_cycles() const;
  double context_deficit_cycles() const;
  double softmax_drain_cycles() const;

  LlmModel model_;
  HwTopology topo_;
  DdrTiming timing_;
  RankPuParams rank_pu_;
  BankPuParams bank_pu_;
  std::uint32_t reads_per_group_ = 0;
  std::uint32_t groups_per_row_ = 0;
};

// Chunked softmax with online max rescaling. Returns the normalized vector
// and the standalone pipeline latency of the softmax unit.
std::pair<std::vector<double>, double> softmax_chunks(std::span<const double> scores,
                                                      std::uint32_t chunk, const DdrTiming& timing,
                                                      const RankPuParams& pu = {});

/// Deferred-refresh bookkeeping for one rank. At most 8 refresh intervals may
/// be outstanding; refreshes are issued at head-completion boundaries, sized
/// so the next head cannot overflow the budget.
class RefreshManager {
 public:
  explicit RefreshManager(const DdrTiming& timing) : timing_(timing) {}

  struct Decision {
    std::uint32_t issued = 0;
    double charged_ns = 0;
  };

  // Called when a head kernel completes at `now_ns`, with the projected
  // latency of the next head. Issues enough REFs to keep the deferral budget.
  Decision on_head_complete(double now_ns, double projected_next_head_ns);
  // Called on an idle rank; forces issue when the budget would overflow.
  Decision on_idle_check(double now_ns);

  std::uint32_t outstanding(double now_ns) const;
  static constexpr std::uint32_t kMaxDeferred = 8;

 private:
  Decision issue_to_budget(double now_ns, std::uint32_t budget);
  DdrTiming timing_;
  double covered_until_ns_ = 0;  // refreshes paid through this point
};

/// Decode-MHA latency of one iteration's PIM side: max over ranksets of the
/// per-channel serialized head kernels, plus amortized refresh.
/// `batch` holds (request_id, context_tokens) pairs.
double decode_mha(std::span<const std::pair<std::uint64_t, std::uint64_t>> batch,
                  const LlmModel& m, const HwTopology& topo, const DdrTiming& timing,
                  const RankPuParams& rank_pu = {});

// Per-rankset decomposition of the same quantity (index == rankset).
std::vector<double> decode_mha_per_rankset(
    std::span<const std::pair<std::uint64_t, std::uint64_t>> batch, const LlmModel& m,
    const HwTopology& topo, const DdrTiming& timing, const RankPuParams& rank_pu = {});

}  // namespace l3sim
