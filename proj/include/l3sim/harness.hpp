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
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "l3sim/config.hpp"
#include "l3sim/scheduler.hpp"
#include "l3sim/timeline.hpp"

namespace l3sim {

struct TraceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TraceRecord {
  std::uint64_t id = 0;
  double arrival_s = 0;
  std::uint64_t input_len = 0;
  std::uint64_t output_len = 0;
};

struct Trace {
  std::vector<TraceRecord> records;
  std::string provenance;
};

// JSONL records {"id":..,"input_len":..,"output_len":..,"arrival":..};
// deterministic sample of sample_n under seed (0 == take all).
Trace load_trace(const std::string& path, std::size_t sample_n = 0, std::uint64_t seed = 0);
Trace parse_trace(std::istream& in, const std::string& origin, std::size_t sample_n = 0,
                  std::uint64_t seed = 0);
void save_trace(const Trace& t, std::ostream& out);

// Lognormal lengths moment-matched to (mean, std), truncated to >= 1.
Trace synth_trace(std::size_t n, double in_mean, double in_std, double out_mean, double out_std,
                  std::uint64_t seed, const std::string& name = "synthetic");

// Replaces arrivals with a Poisson process of `rate` requests/s (default
// traces arrive all at once, closed loop).
void assign_poisson_arrivals(Trace& t, double rate, std::uint64_t seed);

struct TracePreset {
  std::string name;
  double in_mean, in_std, out_mean, out_std;
};
const std::vector<TracePreset>& trace_presets();  // openr1, dolphin, openthoughts, longbench
Trace synth_trace_preset(const std::string& preset, std::size_t n, std::uint64_t seed);

enum class Policy { L3, GPU_ONLY, HBM_PIM, RANK_PIM, CPU_OFFLOAD };
enum class SchedulerKind { L3_INTERLEAVED, PREFILL_PRIORITY, SINGLE_BATCH };

Policy policy_from_string(const std::string& s);
const char* policy_name(Policy p);
SchedulerKind scheduler_kind_from_string(const std::string& s);

/// Per-iteration latency decomposition.
struct LatencyReport {
  std::uint64_t iteration = 0;
  double t_p_ns[2] = {0, 0};
  double t_batch_ns[2] = {0, 0};
  double t_d_ns[2] = {0, 0};
  double t_comm_ns[2] = {0, 0};
  double t_overlap_ns[2] = {0, 0};
  double t_gpu_ns[2] = {0, 0};
  double t_pim_ns[2] = {0, 0};
  double predicted_gpu_ns[2] = {0, 0};
  double predicted_pim_ns[2] = {0, 0};
  double window_ns[2] = {0, 0};  // window A pairs GPU0 with PIM1, window B the converse
  double gpu_bubble_ns = 0;
  double pim_bubble_ns = 0;
  std::uint64_t decode_tokens = 0;
  std::uint64_t chunk_tokens = 0;
  bool bootstrap = false;
  bool pressure_admitted = false;
};

struct Percentiles {
  double p50 = 0, p90 = 0, p99 = 0;
};

struct RunMetrics {
  std::string policy;
  std::string trace;
  double throughput_tokens_per_s = 0;
  double makespan_s = 0;
  std::uint64_t output_tokens = 0;
  std::uint64_t iterations = 0;
  Percentiles tbt_ns;
  Percentiles ttft_ns;
  double gpu_busy_fraction = 0;
  double pim_busy_fraction = 0;
  double gpu_bubble_ns = 0;
  double pim_bubble_ns = 0;
  Bytes critical_bytes = 0;
  Bytes async_bytes = 0;
  std::uint64_t completed_requests = 0;
  std::uint64_t chunked_twice_requests = 0;  // requests chunked more than twice
  std::vector<LatencyReport> reports;
};

struct SimOptions {
  Policy policy = Policy::L3;
  SchedulerKind scheduler = SchedulerKind::L3_INTERLEAVED;
  std::uint64_t seed = 0;
  std::uint64_t max_iterations = 0;       // 0 == run to completion
  bool prewarm_decode = false;            // start every request mid-decode (skip prefill)
  bool keep_reports = true;
  bool audit = true;                      // fail fast on overlap-audit violations
  std::optional<std::string> timeline_path;  // JSON interval export
  std::optional<std::string> predictor_dump_path;  // training-window CSV export
};

struct AuditFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

RunMetrics run_simulation(const Trace& trace, const SimConfig& cfg, const SimOptions& opt = {});
// Baseline wrapper: forces the policy and its scheduling discipline.
RunMetrics baseline_run(const Trace& trace, const SimConfig& cfg, Policy which,
                        SimOptions opt = {});

// Decode-MHA latency of one iteration at equal (batch, context) under each
// policy's memory system; used for ordering checks.
double policy_decode_mha_ns(Policy p, std::size_t batch, std::uint64_t context_tokens,
                            const SimConfig& cfg);

enum class ReportFormat { CSV, JSON };
// One record per run; normalized throughput against `baseline` when present.
std::string render_report(const std::vector<RunMetrics>& runs, ReportFormat format,
                          const std::string& normalize_against = "");
void write_report(const std::vector<RunMetrics>& runs, ReportFormat format,
                  const std::string& path, const std::string& normalize_against = "");

}  // namespace l3sim
