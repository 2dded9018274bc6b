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
#include "l3sim/interconnect.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "json.hpp"

namespace l3sim {

Bytes critical_bytes_down(std::size_t decode_count, const LlmModel& m) {
  // Q, K and V vectors per decode request per layer.
  return Bytes(decode_count) * 3 * m.embedding * m.precision_bytes * m.layers;
}

Bytes critical_bytes_up(std::size_t decode_count, const LlmModel& m) {
  return Bytes(decode_count) * m.embedding * m.precision_bytes * m.layers;
}

double critical_transfer_latency(std::size_t decode_count, const LlmModel& m,
                                 const HwTopology& topo) {
  if (decode_count == 0) return 0.0;
  const double bytes = double(critical_bytes_down(decode_count, m)) +
                       double(critical_bytes_up(decode_count, m));
  // One batched transaction per direction per iteration.
  return bytes / topo.pcie_bw * 1e9 + 2.0 * topo.pcie_fixed_ns;
}

OffloadPlan plan_async_offload(std::span<const Bytes> bytes_per_rankset,
                               std::span<const double> compute_busy_until, double window_start_ns,
                               double window_end_ns, const HwTopology& topo,
                               const DdrTiming& timing) {
  OffloadPlan plan;
  plan.t_overlap_per_rankset.assign(bytes_per_rankset.size(), 0.0);
  const double bw = std::min(topo.pcie_bw, cpu_aggregate_bw(topo, timing));

  // Receives serialize on the shared PCIe/host path; rotate ranksets in the
  // same order the layer mapping rotates so balance carries over. A rankset
  // receives only after its own compute for the window has finished.
  double pipe_free = window_start_ns;
  plan.finish_ns = window_start_ns;
  for (std::size_t rs = 0; rs < bytes_per_rankset.size(); ++rs) {
    if (bytes_per_rankset[rs] == 0) continue;
    const double ready = rs < compute_busy_until.size()
                             ? std::max(compute_busy_until[rs], window_start_ns)
                             : window_start_ns;
    const double start = std::max(pipe_free, ready);
    const double dur = double(bytes_per_rankset[rs]) / bw * 1e9;
    TransferTask task;
    task.bytes = bytes_per_rankset[rs];
    task.kind = TransferTask::ASYNC_PREFILL_KV;
    task.rankset = std::int32_t(rs);
    task.issue_ns = start;
    task.complete_ns = start + dur;
    plan.tasks.push_back(task);
    plan.t_overlap_per_rankset[rs] = dur;
    pipe_free = task.complete_ns;
    plan.finish_ns = std::max(plan.finish_ns, task.complete_ns);
  }
  plan.residual_ns = std::max(0.0, plan.finish_ns - window_end_ns);
  return plan;
}

namespace {

bool overlaps(double a0, double a1, double b0, double b1) {
  const double eps = 1e-6;
  return a0 + eps < b1 && b0 + eps < a1;
}

}  // namespace

std::vector<AuditViolation> overlap_audit(const Timeline& tl) {
  std::vector<AuditViolation> v;

  // (a) compute/receive exclusivity per rankset.
  for (std::size_t rs = 0; rs < tl.ranksets.size(); ++rs) {
    const auto& ivs = tl.ranksets[rs];
    for (std::size_t i = 0; i < ivs.size(); ++i) {
      for (std::size_t j = i + 1; j < ivs.size(); ++j) {
        const bool one_receives = (ivs[i].kind == Interval::PIM_RECEIVE) !=
                                  (ivs[j].kind == Interval::PIM_RECEIVE);
        const bool both_busy = ivs[i].kind != Interval::PIM_IDLE && ivs[j].kind != Interval::PIM_IDLE;
        if (one_receives && both_busy &&
            overlaps(ivs[i].start_ns, ivs[i].end_ns, ivs[j].start_ns, ivs[j].end_ns)) {
          std::ostringstream os;
          os << "rankset " << rs << " computes and receives concurrently at ["
             << ivs[i].start_ns << ", " << ivs[i].end_ns << ")";
          v.push_back({AuditViolation::COMPUTE_WHILE_RECEIVE, os.str()});
        }
      }
    }
  }

  // (b) at most one rankset in receive mode at any instant.
  std::vector<std::pair<double, double>> receives;
  for (std::size_t rs = 0; rs < tl.ranksets.size(); ++rs)
    for (const auto& iv : tl.ranksets[rs])
      if (iv.kind == Interval::PIM_RECEIVE) receives.push_back({iv.start_ns, iv.end_ns});
  std::sort(receives.begin(), receives.end());
  for (std::size_t i = 1; i < receives.size(); ++i) {
    if (receives[i].first + 1e-6 < receives[i - 1].second) {
      std::ostringstream os;
      os << "two ranksets receive concurrently around t=" << receives[i].first;
      v.push_back({AuditViolation::DOUBLE_RECEIVE, os.str()});
    }
  }

  // (c) dependency order: per sub-batch, QKV-down precedes the first PIM
  // compute, attention-out follows the last.
  for (int sb = 0; sb <= 1; ++sb) {
    double down_end = -1, up_start = -1;
    for (const auto& iv : tl.pcie) {
      if (iv.sub_batch != sb) continue;
      if (iv.kind == Interval::PCIE_DOWN) down_end = std::max(down_end, iv.end_ns);
      if (iv.kind == Interval::PCIE_UP)
        up_start = up_start < 0 ? iv.start_ns : std::min(up_start, iv.start_ns);
    }
    double first_compute = -1, last_compute = -1;
    for (const auto& per_rs : tl.ranksets) {
      for (const auto& iv : per_rs) {
        if (iv.sub_batch != sb || iv.kind != Interval::PIM_COMPUTE) continue;
        first_compute = first_compute < 0 ? iv.start_ns : std::min(first_compute, iv.start_ns);
        last_compute = std::max(last_compute, iv.end_ns);
      }
    }
    if (down_end >= 0 && first_compute >= 0 && first_compute + 1e-6 < down_end) {
      std::ostringstream os;
      os << "sub-batch " << sb << ": PIM compute starts at " << first_compute
         << " before QKV transfer completes at " << down_end;
      v.push_back({AuditViolation::DEPENDENCY_ORDER, os.str()});
    }
    if (up_start >= 0 && last_compute >= 0 && up_start + 1e-6 < last_compute) {
      std::ostringstream os;
      os << "sub-batch " << sb << ": attention-out transfer starts at " << up_start
         << " before compute ends at " << last_compute;
      v.push_back({AuditViolation::DEPENDENCY_ORDER, os.str()});
    }
  }

  // (d) idle intervals must carry a cause.
  const auto check_idle = [&](const std::vector<Interval>& ivs, const std::string& device) {
    for (const auto& iv : ivs) {
      if ((iv.kind == Interval::GPU_IDLE || iv.kind == Interval::PIM_IDLE) && iv.label.empty()) {
        v.push_back({AuditViolation::UNEXPLAINED_IDLE,
                     device + " idle interval without a recorded cause at t=" +
                         std::to_string(iv.start_ns)});
      }
    }
  };
  check_idle(tl.gpu, "gpu");
  for (std::size_t rs = 0; rs < tl.ranksets.size(); ++rs)
    check_idle(tl.ranksets[rs], "rankset " + std::to_string(rs));

  return v;
}

const char* interval_kind_name(Interval::Kind k) {
  switch (k) {
    case Interval::GPU_PREFILL: return "gpu_prefill";
    case Interval::GPU_FC: return "gpu_fc";
    case Interval::GPU_IDLE: return "gpu_idle";
    case Interval::PIM_COMPUTE: return "pim_compute";
    case Interval::PIM_RECEIVE: return "pim_receive";
    case Interval::PIM_IDLE: return "pim_idle";
    case Interval::PCIE_DOWN: return "pcie_down";
    case Interval::PCIE_UP: return "pcie_up";
    case Interval::PCIE_ASYNC: return "pcie_async";
  }
  return "unknown";
}

std::string Timeline::to_json() const {
  nlohmann::json j;
  const auto dump = [&](const std::vector<Interval>& ivs) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& iv : ivs) {
      arr.push_back({{"start_ns", iv.start_ns},
                     {"end_ns", iv.end_ns},
                     {"kind", interval_kind_name(iv.kind)},
                     {"sub_batch", iv.sub_batch},
                     {"label", iv.label}});
    }
    return arr;
  };
  j["gpu"] = dump(gpu);
  j["pcie"] = dump(pcie);
  j["ranksets"] = nlohmann::json::array();
  for (const auto& rs : ranksets) j["ranksets"].push_back(dump(rs));
  return j.dump(2);
}

}  // namespace l3sim
