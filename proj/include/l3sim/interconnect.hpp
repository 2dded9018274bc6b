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
#include <string>
#include <vector>

#include "l3sim/config.hpp"
#include "l3sim/timeline.hpp"

namespace l3sim {

struct TransferTask {
  Bytes bytes = 0;
  enum Kind { CRITICAL_QKV, CRITICAL_ATTN_OUT, ASYNC_PREFILL_KV } kind = CRITICAL_QKV;
  std::int32_t rankset = -1;
  double issue_ns = 0;
  double complete_ns = 0;
};

// Critical-path decode transfer bytes for one iteration: QKV down,
// attention-out up, vector-sized per request per layer.
Bytes critical_bytes_down(std::size_t decode_count, const LlmModel& m);
Bytes critical_bytes_up(std::size_t decode_count, const LlmModel& m);

// t_comm: one batched transaction per direction per iteration.
double critical_transfer_latency(std::size_t decode_count, const LlmModel& m,
                                 const HwTopology& topo);

struct OffloadPlan {
  std::vector<TransferTask> tasks;
  std::vector<double> t_overlap_per_rankset;  // ns of receive time per rankset
  double residual_ns = 0;                     // transfer time past the window
  double finish_ns = 0;                       // absolute completion of the last receive
};

// Serialize prefill-KV receives across ranksets: at most one rankset receives
// at any instant, and a rankset only receives after its own compute window
// (compute_busy_until, absolute ns) ends.
OffloadPlan plan_async_offload(std::span<const Bytes> bytes_per_rankset,
                               std::span<const double> compute_busy_until, double window_start_ns,
                               double window_end_ns, const HwTopology& topo,
                               const DdrTiming& timing);

struct AuditViolation {
  enum Kind { COMPUTE_WHILE_RECEIVE, DOUBLE_RECEIVE, DEPENDENCY_ORDER, UNEXPLAINED_IDLE } kind;
  std::string detail;
};

// Checks a completed iteration window or a full-run timeline:
//   (a) no rankset computes and receives in overlapping intervals,
//   (b) at most one rankset receives at a time,
//   (c) PCIe QKV-down completes before the first PIM compute of the same
//       sub-batch starts, and attention-out starts after its compute ends,
//   (d) idle intervals carry a cause label.
std::vector<AuditViolation> overlap_audit(const Timeline& timeline);

}  // namespace l3sim
