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
#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <memory>
#include <numeric>
#include <sstream>

#include "l3sim/harness.hpp"
#include "l3sim/interconnect.hpp"

namespace l3sim {

namespace {

struct LiveRequest {
  std::uint64_t id = 0;
  double arrival_s = 0;
  std::uint64_t input_len = 0;
  std::uint64_t output_target = 0;
  std::uint64_t generated = 0;
  std::uint64_t chunk_progress = 0;
  Phase phase = Phase::QUEUED;
  double ttft_ns = -1;
  std::uint32_t partial_chunkings = 0;
  std::uint64_t context_tokens() const { return input_len + generated; }
};

double weighted_percentile(std::vector<std::pair<double, std::uint64_t>>& samples, double q) {
  if (samples.empty()) return 0;
  std::sort(samples.begin(), samples.end());
  std::uint64_t total = 0;
  for (const auto& s : samples) total += s.second;
  const double target = q * double(total);
  std::uint64_t cum = 0;
  for (const auto& s : samples) {
    cum += s.second;
    if (double(cum) >= target) return s.first;
  }
  return samples.back().first;
}

double percentile(std::vector<double> v, double q) {
  if (v.empty()) return 0;
  std::sort(v.begin(), v.end());
  const double idx = q * double(v.size() - 1);
  const std::size_t lo = std::size_t(idx);
  const std::size_t hi = std::min(v.size() - 1, lo + 1);
  const double frac = idx - double(lo);
  return v[lo] * (1 - frac) + v[hi] * frac;
}

struct MetricsAccum {
  double now_ns = 0;
  double gpu_busy_ns = 0;
  double pim_busy_ns = 0;
  double gpu_bubble_ns = 0;
  double pim_bubble_ns = 0;
  Bytes critical_bytes = 0;
  Bytes async_bytes = 0;
  std::uint64_t output_tokens = 0;
  std::uint64_t iterations = 0;
  std::vector<std::pair<double, std::uint64_t>> tbt_samples;  // (span, tokens)
  std::vector<double> ttft_samples;
};

class Sim {
 public:
  Sim(const Trace& trace, const SimConfig& cfg, const SimOptions& opt)
      : cfg_(cfg), opt_(opt), engine_(cfg), scheduler_(cfg.scheduler) {
    cfg_.validate();
    requests_.reserve(trace.records.size());
    for (const auto& r : trace.records) {
      LiveRequest lr;
      lr.id = r.id;
      lr.arrival_s = r.arrival_s;
      lr.input_len = r.input_len;
      lr.output_target = r.output_len;
      requests_.push_back(lr);
      arrival_order_.push_back(requests_.size() - 1);
    }
    std::stable_sort(arrival_order_.begin(), arrival_order_.end(),
                     [&](std::size_t a, std::size_t b) {
                       return requests_[a].arrival_s < requests_[b].arrival_s;
                     });
    capacity_ = policy_capacity();
    free_bytes_ = capacity_;
    if (!cfg_.scheduler.oracle_predictors)
      predictors_ = std::make_unique<LatencyPredictors>(cfg_.scheduler, opt.seed + 1);
    if (opt_.prewarm_decode) prewarm();
  }

  RunMetrics run(const std::string& trace_name);

 private:
  Bytes policy_capacity() const {
    switch (opt_.policy) {
      case Policy::L3:
      case Policy::RANK_PIM:
      case Policy::CPU_OFFLOAD:
        return cfg_.topology.host_capacity;
      case Policy::GPU_ONLY:
      case Policy::HBM_PIM: {
        const Bytes weights = weight_bytes(cfg_.model);
        if (weights >= cfg_.topology.gpu_capacity)
          throw TraceError("model weights (" + std::to_string(weights) +
                           " bytes) exceed gpu_capacity; GPU-resident policies cannot run");
        return cfg_.topology.gpu_capacity - weights;
      }
    }
    return 0;
  }

  Bytes admit_budget(const LiveRequest& r) const {
    return kv_bytes_per_token(cfg_.model) * (r.input_len + r.output_target);
  }

  void prewarm() {
    for (std::size_t i = 0; i < requests_.size(); ++i) {
      LiveRequest& r = requests_[i];
      const Bytes b = admit_budget(r);
      if (b > free_bytes_)
        throw TraceError("prewarm_decode: request " + std::to_string(r.id) +
                         " does not fit in capacity");
      free_bytes_ -= b;
      r.phase = Phase::DECODING;
      r.chunk_progress = r.input_len;
      r.generated = 1;
      r.ttft_ns = 0;
      acc_.output_tokens += 1;
      decode_pool_.push_back(i);
    }
    arrivals_admitted_ = requests_.size();
  }

  void admit_arrivals() {
    while (arrivals_admitted_ < arrival_order_.size()) {
      const std::size_t idx = arrival_order_[arrivals_admitted_];
      if (requests_[idx].arrival_s * 1e9 > acc_.now_ns + 1e-9) break;
      prefill_queue_.push_back(idx);
      ++arrivals_admitted_;
    }
  }

  bool pending_arrivals() const { return arrivals_admitted_ < arrival_order_.size(); }

  void skip_to_next_arrival() {
    const std::size_t idx = arrival_order_[arrivals_admitted_];
    acc_.now_ns = std::max(acc_.now_ns, requests_[idx].arrival_s * 1e9);
    admit_arrivals();
  }

  bool all_done() const {
    return decode_pool_.empty() && prefill_queue_.empty() && !pending_arrivals();
  }

  ScheduleInputs gather_inputs() const {
    ScheduleInputs in;
    in.host_free = free_bytes_;
    in.decode.reserve(decode_pool_.size());
    for (std::size_t idx : decode_pool_)
      in.decode.push_back({requests_[idx].id, requests_[idx].context_tokens()});
    in.prefill.reserve(prefill_queue_.size());
    for (std::size_t idx : prefill_queue_) {
      const LiveRequest& r = requests_[idx];
      PrefillItem item;
      item.id = r.id;
      item.remaining = r.input_len - r.chunk_progress;
      item.finished = r.chunk_progress;
      item.resident = r.phase == Phase::PREFILLING;
      item.admit_bytes = admit_budget(r);
      in.prefill.push_back(item);
    }
    return in;
  }

  // Greedy prefill-prioritized plan used by the hbm_pim and cpu_offload
  // baselines: whole prompts, no alignment chunking, bounded per iteration.
  IterationPlan greedy_plan(const ScheduleInputs& in) const {
    IterationPlan plan;
    auto [d0, d1] = split_decode(in.decode);
    for (const auto& [id, tokens] : d0) {
      plan.sub[0].decode_ids.push_back(id);
      plan.sub[0].f_d.push_back(tokens);
    }
    for (const auto& [id, tokens] : d1) {
      plan.sub[1].decode_ids.push_back(id);
      plan.sub[1].f_d.push_back(tokens);
    }
    Bytes budget = in.host_free;
    const std::size_t max_prompts = 4;
    std::size_t taken = 0;
    for (std::size_t qi = 0; qi < in.prefill.size() && taken < max_prompts; ++qi) {
      const PrefillItem& item = in.prefill[qi];
      if (!item.resident) {
        if (item.admit_bytes > budget) break;
        budget -= item.admit_bytes;
      }
      const int side = int(taken % 2);
      const std::uint32_t chunk =
          std::uint32_t((item.remaining + 15) / 16 * 16);
      plan.sub[side].prefill_ids.push_back(item.id);
      plan.sub[side].c_p.push_back(chunk);
      plan.sub[side].f_p.push_back(item.finished);
      plan.grants.push_back({qi, chunk, item.remaining, !item.resident, item.admit_bytes});
      ++taken;
    }
    return plan;
  }

  struct ExecutedWindow {
    double t_p[2], t_batch[2], t_d[2], t_comm[2], t_overlap[2];
    double t_gpu[2], t_pim[2];
    double window[2];  // window[0]: GPU0 with PIM1; window[1]: GPU1 with PIM0
    double span;
  };

  // Execute a two-sub-batch interleaved iteration and build its timeline.
  ExecutedWindow execute_interleaved(const IterationPlan& plan, Timeline* tl) {
    ExecutedWindow w{};
    const bool pim_is_dimm = opt_.policy == Policy::L3;
    const double decode_bw = opt_.policy == Policy::HBM_PIM ? cfg_.topology.hbm_pim_bw
                             : opt_.policy == Policy::CPU_OFFLOAD
                                 ? cpu_aggregate_bw(cfg_.topology, cfg_.timing)
                                 : 0;

    for (int i = 0; i < 2; ++i) {
      const SubBatch& sb = plan.sub[i];
      w.t_p[i] = engine_.t_p(sb.c_p, sb.f_p);
      w.t_batch[i] = engine_.t_batch(sb.chunk_tokens(), plan.sub[1 - i].f_d.size());
      w.t_gpu[i] = w.t_p[i] + w.t_batch[i];
      if (pim_is_dimm) {
        w.t_d[i] = engine_.t_d(sb.f_d, sb.decode_ids);
        w.t_comm[i] = engine_.t_comm(sb.f_d.size());
      } else {
        std::vector<std::uint64_t> ctx(sb.f_d.begin(), sb.f_d.end());
        w.t_d[i] = engine_.gpu().decode_mha_at_bw(ctx, decode_bw);
        w.t_comm[i] = opt_.policy == Policy::CPU_OFFLOAD
                          ? critical_transfer_latency(sb.f_d.size(), cfg_.model, cfg_.topology)
                          : 0.0;
      }
    }
    for (int i = 0; i < 2; ++i) {
      // PIM phase i receives the opposite side's prefill KV.
      const std::uint64_t other_chunks = plan.sub[1 - i].chunk_tokens();
      w.t_overlap[i] =
          pim_is_dimm ? double(other_chunks) * engine_.overlap_rate_ns_per_token() : 0.0;
      w.t_pim[i] = w.t_d[i] + w.t_comm[i] + w.t_overlap[i];
    }
    w.window[0] = std::max(w.t_gpu[0], w.t_pim[1]);
    w.window[1] = std::max(w.t_gpu[1], w.t_pim[0]);
    w.span = w.window[0] + w.window[1];

    if (tl) build_window_timeline(plan, w, *tl);
    return w;
  }

  void build_window_timeline(const IterationPlan& plan, const ExecutedWindow& w, Timeline& tl) {
    const std::uint32_t rs_count = cfg_.topology.ranksets();
    tl.ensure_ranksets(rs_count);
    double window_start = acc_.now_ns;
    for (int widx = 0; widx < 2; ++widx) {
      const int gpu_sb = widx;      // GPU runs sub-batch widx in this window
      const int pim_sb = 1 - widx;  // PIM runs the other one
      const double window_end = window_start + w.window[widx];

      if (w.t_p[gpu_sb] > 0)
        tl.gpu.push_back({window_start, window_start + w.t_p[gpu_sb], Interval::GPU_PREFILL,
                          gpu_sb, ""});
      tl.gpu.push_back({window_start + w.t_p[gpu_sb], window_start + w.t_gpu[gpu_sb],
                        Interval::GPU_FC, gpu_sb, ""});
      if (w.t_gpu[gpu_sb] + 1e-6 < w.window[widx])
        tl.gpu.push_back({window_start + w.t_gpu[gpu_sb], window_end, Interval::GPU_IDLE, gpu_sb,
                          "awaiting pim phase"});

      const SubBatch& psb = plan.sub[pim_sb];
      if (!psb.f_d.empty() && opt_.policy == Policy::L3) {
        const double down =
            double(critical_bytes_down(psb.f_d.size(), cfg_.model)) / cfg_.topology.pcie_bw * 1e9 +
            cfg_.topology.pcie_fixed_ns;
        const double up =
            double(critical_bytes_up(psb.f_d.size(), cfg_.model)) / cfg_.topology.pcie_bw * 1e9 +
            cfg_.topology.pcie_fixed_ns;
        tl.pcie.push_back({window_start, window_start + down, Interval::PCIE_DOWN, pim_sb, ""});
        const auto per_rs = engine_.t_d_per_rankset(psb.f_d, psb.decode_ids);
        std::vector<double> busy_until(rs_count, window_start + down);
        double compute_end = window_start + down;
        for (std::uint32_t rs = 0; rs < rs_count; ++rs) {
          if (per_rs[rs] <= 0) continue;
          tl.ranksets[rs].push_back({window_start + down, window_start + down + per_rs[rs],
                                     Interval::PIM_COMPUTE, pim_sb, ""});
          busy_until[rs] = window_start + down + per_rs[rs];
          compute_end = std::max(compute_end, busy_until[rs]);
        }
        tl.pcie.push_back({compute_end, compute_end + up, Interval::PCIE_UP, pim_sb, ""});
        // Async prefill KV receive for the opposite sub-batch's chunks.
        const std::uint64_t chunk_tokens = plan.sub[gpu_sb].chunk_tokens();
        if (chunk_tokens > 0) {
          std::vector<Bytes> per_rs_bytes(rs_count, 0);
          const Bytes total = kv_bytes_per_token(cfg_.model) * chunk_tokens;
          for (std::uint32_t rs = 0; rs < rs_count; ++rs) per_rs_bytes[rs] = total / rs_count;
          const auto offload = plan_async_offload(per_rs_bytes, busy_until, window_start,
                                                  window_end, cfg_.topology, cfg_.timing);
          for (const auto& task : offload.tasks) {
            tl.ranksets[task.rankset].push_back(
                {task.issue_ns, task.complete_ns, Interval::PIM_RECEIVE, gpu_sb, ""});
            tl.pcie.push_back({task.issue_ns, task.complete_ns, Interval::PCIE_ASYNC, gpu_sb, ""});
          }
        }
      } else if (!psb.f_d.empty()) {
        tl.ranksets.resize(std::max<std::size_t>(1, tl.ranksets.size()));
        tl.ranksets[0].push_back({window_start, window_start + w.t_pim[pim_sb],
                                  Interval::PIM_COMPUTE, pim_sb, ""});
      }
      window_start = window_end;
    }
  }

  void apply_grants(const IterationPlan& plan) {
    // Grants are in queue order; apply and then drop completed / requeue the
    // chunked leftover at the head.
    std::vector<std::size_t> to_remove;
    for (const auto& g : plan.grants) {
      const std::size_t idx = prefill_queue_[g.queue_index];
      LiveRequest& r = requests_[idx];
      if (g.new_admission) {
        if (g.admit_bytes > free_bytes_) throw TraceError("scheduler overdrew host capacity");
        free_bytes_ -= g.admit_bytes;
        r.phase = Phase::PREFILLING;
      }
      if (g.progress < r.input_len - r.chunk_progress) ++r.partial_chunkings;
      r.chunk_progress += g.progress;
      acc_.async_bytes += kv_bytes_per_token(cfg_.model) * g.progress;
      if (r.chunk_progress >= r.input_len) to_remove.push_back(g.queue_index);
    }
    // Remove completed prompts from the queue (descending positions).
    std::sort(to_remove.begin(), to_remove.end(), std::greater<>());
    for (std::size_t pos : to_remove) {
      const std::size_t idx = prefill_queue_[pos];
      prefill_queue_.erase(prefill_queue_.begin() + std::ptrdiff_t(pos));
      pending_decode_entries_.push_back(idx);
    }
  }

  void finish_iteration(const IterationPlan& plan, double span_ns, std::uint64_t decode_count) {
    acc_.now_ns += span_ns;
    acc_.iterations += 1;

    if (decode_count > 0) acc_.tbt_samples.push_back({span_ns, decode_count});
    std::vector<std::size_t> still_decoding;
    still_decoding.reserve(decode_pool_.size());
    for (std::size_t idx : decode_pool_) {
      LiveRequest& r = requests_[idx];
      r.generated += 1;
      acc_.output_tokens += 1;
      if (r.generated >= r.output_target) {
        r.phase = Phase::DONE;
        free_bytes_ += admit_budget(r);
      } else {
        still_decoding.push_back(idx);
      }
    }
    decode_pool_ = std::move(still_decoding);

    // Prompts that completed prefill this iteration emit their first token
    // and join the decode pool for the next iteration.
    for (std::size_t idx : pending_decode_entries_) {
      LiveRequest& r = requests_[idx];
      r.phase = Phase::DECODING;
      r.generated += 1;
      acc_.output_tokens += 1;
      r.ttft_ns = acc_.now_ns - r.arrival_s * 1e9;
      acc_.ttft_samples.push_back(r.ttft_ns);
      if (r.generated >= r.output_target) {
        r.phase = Phase::DONE;
        free_bytes_ += admit_budget(r);
      } else {
        decode_pool_.push_back(idx);
      }
    }
    pending_decode_entries_.clear();
    (void)plan;
  }

  void record_observations(const IterationPlan& plan, const ExecutedWindow& w) {
    if (!predictors_) return;
    for (int i = 0; i < 2; ++i) {
      LatencyPredictors::Observation obs;
      obs.c_p = plan.sub[i].c_p;
      obs.f_p = plan.sub[i].f_p;
      obs.f_d = plan.sub[i].f_d;
      obs.other_chunk_tokens = plan.sub[1 - i].chunk_tokens();
      obs.other_decode_count = plan.sub[1 - i].f_d.size();
      obs.observed_t_p_ns = w.t_p[i];
      obs.observed_t_batch_ns = w.t_batch[i];
      obs.observed_t_pim_ns = w.t_pim[i];
      predictors_->record(obs);
    }
  }

  RunMetrics finalize(const std::string& trace_name) {
    RunMetrics m;
    m.policy = policy_name(opt_.policy);
    m.trace = trace_name;
    m.iterations = acc_.iterations;
    m.output_tokens = acc_.output_tokens;
    m.makespan_s = acc_.now_ns / 1e9;
    m.throughput_tokens_per_s = m.makespan_s > 0 ? double(m.output_tokens) / m.makespan_s : 0;
    m.tbt_ns.p50 = weighted_percentile(acc_.tbt_samples, 0.50);
    m.tbt_ns.p90 = weighted_percentile(acc_.tbt_samples, 0.90);
    m.tbt_ns.p99 = weighted_percentile(acc_.tbt_samples, 0.99);
    m.ttft_ns.p50 = percentile(acc_.ttft_samples, 0.50);
    m.ttft_ns.p90 = percentile(acc_.ttft_samples, 0.90);
    m.ttft_ns.p99 = percentile(acc_.ttft_samples, 0.99);
    m.gpu_busy_fraction = acc_.now_ns > 0 ? acc_.gpu_busy_ns / acc_.now_ns : 0;
    m.pim_busy_fraction = acc_.now_ns > 0 ? acc_.pim_busy_ns / acc_.now_ns : 0;
    m.gpu_bubble_ns = acc_.gpu_bubble_ns;
    m.pim_bubble_ns = acc_.pim_bubble_ns;
    m.critical_bytes = acc_.critical_bytes;
    m.async_bytes = acc_.async_bytes;
    m.reports = std::move(reports_);
    for (const auto& r : requests_) {
      if (r.phase == Phase::DONE) ++m.completed_requests;
      if (r.partial_chunkings > 2) ++m.chunked_twice_requests;
    }
    return m;
  }

  RunMetrics run_interleaved(const std::string& trace_name);
  RunMetrics run_single_device(const std::string& trace_name);

  SimConfig cfg_;
  SimOptions opt_;
  EngineCostModel engine_;
  Scheduler scheduler_;
  std::unique_ptr<LatencyPredictors> predictors_;

  std::vector<LiveRequest> requests_;
  std::vector<std::size_t> arrival_order_;
  std::size_t arrivals_admitted_ = 0;
  std::deque<std::size_t> prefill_queue_;
  std::vector<std::size_t> decode_pool_;
  std::vector<std::size_t> pending_decode_entries_;
  Bytes capacity_ = 0;
  Bytes free_bytes_ = 0;
  MetricsAccum acc_;
  std::vector<LatencyReport> reports_;
  Timeline exported_;
};

RunMetrics Sim::run_interleaved(const std::string& trace_name) {
  const bool use_l3_scheduler = opt_.policy == Policy::L3 &&
                                opt_.scheduler == SchedulerKind::L3_INTERLEAVED;
  while (!all_done()) {
    admit_arrivals();
    if (decode_pool_.empty() && prefill_queue_.empty()) {
      skip_to_next_arrival();
      continue;
    }
    const ScheduleInputs in = gather_inputs();
    IterationPlan plan;
    if (use_l3_scheduler) {
      const CostModel& model =
          predictors_ ? static_cast<const CostModel&>(*predictors_) : engine_;
      plan = scheduler_.build_iteration(in, model);
    } else {
      plan = greedy_plan(in);
    }
    if (plan.grants.empty() && decode_pool_.empty()) {
      if (!prefill_queue_.empty())
        throw TraceError("request " + std::to_string(in.prefill.front().id) +
                         " cannot fit in capacity; deadlock");
      continue;
    }

    Timeline window_tl;
    ExecutedWindow w = execute_interleaved(plan, &window_tl);
    if (opt_.audit) {
      const auto violations = overlap_audit(window_tl);
      if (!violations.empty())
        throw AuditFailure("overlap audit failed: " + violations.front().detail);
    }
    if (opt_.timeline_path) {
      exported_.ensure_ranksets(window_tl.ranksets.size());
      exported_.gpu.insert(exported_.gpu.end(), window_tl.gpu.begin(), window_tl.gpu.end());
      exported_.pcie.insert(exported_.pcie.end(), window_tl.pcie.begin(), window_tl.pcie.end());
      for (std::size_t rs = 0; rs < window_tl.ranksets.size(); ++rs)
        exported_.ranksets[rs].insert(exported_.ranksets[rs].end(),
                                      window_tl.ranksets[rs].begin(),
                                      window_tl.ranksets[rs].end());
    }

    // Busy/bubble accounting: window A pairs GPU0 with PIM1.
    acc_.gpu_busy_ns += w.t_gpu[0] + w.t_gpu[1];
    acc_.pim_busy_ns += w.t_pim[0] + w.t_pim[1];
    acc_.gpu_bubble_ns += (w.window[0] - w.t_gpu[0]) + (w.window[1] - w.t_gpu[1]);
    acc_.pim_bubble_ns += (w.window[0] - w.t_pim[1]) + (w.window[1] - w.t_pim[0]);
    if (opt_.policy == Policy::L3 || opt_.policy == Policy::CPU_OFFLOAD) {
      for (int i = 0; i < 2; ++i) {
        acc_.critical_bytes += critical_bytes_down(plan.sub[i].f_d.size(), cfg_.model) +
                               critical_bytes_up(plan.sub[i].f_d.size(), cfg_.model);
      }
    }

    if (opt_.keep_reports) {
      LatencyReport rep;
      rep.iteration = acc_.iterations;
      for (int i = 0; i < 2; ++i) {
        rep.t_p_ns[i] = w.t_p[i];
        rep.t_batch_ns[i] = w.t_batch[i];
        rep.t_d_ns[i] = w.t_d[i];
        rep.t_comm_ns[i] = w.t_comm[i];
        rep.t_overlap_ns[i] = w.t_overlap[i];
        rep.t_gpu_ns[i] = w.t_gpu[i];
        rep.t_pim_ns[i] = w.t_pim[i];
        rep.predicted_gpu_ns[i] = plan.sub[i].predicted_gpu_ns;
        rep.predicted_pim_ns[i] = plan.sub[i].predicted_pim_ns;
      }
      rep.window_ns[0] = w.window[0];
      rep.window_ns[1] = w.window[1];
      rep.gpu_bubble_ns = (w.window[0] - w.t_gpu[0]) + (w.window[1] - w.t_gpu[1]);
      rep.pim_bubble_ns = (w.window[0] - w.t_pim[1]) + (w.window[1] - w.t_pim[0]);
      rep.decode_tokens = plan.sub[0].decode_tokens() + plan.sub[1].decode_tokens();
      rep.chunk_tokens = plan.sub[0].chunk_tokens() + plan.sub[1].chunk_tokens();
      rep.bootstrap = plan.bootstrap;
      rep.pressure_admitted =
          plan.sub[0].pressure_admitted || plan.sub[1].pressure_admitted;
      reports_.push_back(rep);
    }

    record_observations(plan, w);
    const std::uint64_t decode_count = decode_pool_.size();
    apply_grants(plan);
    finish_iteration(plan, w.span, decode_count);
    if (opt_.max_iterations && acc_.iterations >= opt_.max_iterations) break;
  }
  if (opt_.timeline_path) {
    std::ofstream out(*opt_.timeline_path);
    out << exported_.to_json();
  }
  if (opt_.predictor_dump_path && predictors_) {
    std::ofstream out(*opt_.predictor_dump_path);
    predictors_->dump_windows_csv(out);
  }
  return finalize(trace_name);
}

RunMetrics Sim::run_single_device(const std::string& trace_name) {
  const bool on_gpu = opt_.policy == Policy::GPU_ONLY;
  const bool dimm_pim = opt_.policy == Policy::L3;  // --scheduler single-batch on l3
  const double decode_bw =
      on_gpu ? cfg_.topology.gpu_hbm_bw * cfg_.topology.gpu_efficiency
             : rank_pim_bw(cfg_.topology, cfg_.timing, cfg_.baseline);
  while (!all_done()) {
    admit_arrivals();
    if (decode_pool_.empty() && prefill_queue_.empty()) {
      skip_to_next_arrival();
      continue;
    }
    const ScheduleInputs in = gather_inputs();
    IterationPlan plan = greedy_plan(in);
    if (plan.grants.empty() && decode_pool_.empty()) {
      if (!prefill_queue_.empty())
        throw TraceError("request " + std::to_string(in.prefill.front().id) +
                         " cannot fit in capacity; deadlock");
      continue;
    }
    // Everything serializes: prefill MHA + batched FC + decode MHA.
    std::vector<std::uint32_t> all_chunks;
    std::vector<std::uint64_t> all_finished;
    std::uint64_t chunk_tokens = 0;
    for (int i = 0; i < 2; ++i) {
      all_chunks.insert(all_chunks.end(), plan.sub[i].c_p.begin(), plan.sub[i].c_p.end());
      all_finished.insert(all_finished.end(), plan.sub[i].f_p.begin(), plan.sub[i].f_p.end());
      chunk_tokens += plan.sub[i].chunk_tokens();
    }
    std::vector<std::uint64_t> contexts, ids;
    for (std::size_t idx : decode_pool_) {
      contexts.push_back(requests_[idx].context_tokens());
      ids.push_back(requests_[idx].id);
    }

    const double t_p = engine_.t_p(all_chunks, all_finished);
    const double t_batch = engine_.t_batch(chunk_tokens, contexts.size());
    const double t_d = dimm_pim ? engine_.t_d(contexts, ids)
                                : engine_.gpu().decode_mha_at_bw(contexts, decode_bw);
    const double span = t_p + t_batch + t_d;

    acc_.gpu_busy_ns += t_p + t_batch + (on_gpu ? t_d : 0.0);
    acc_.pim_busy_ns += on_gpu ? 0.0 : t_d;
    if (!on_gpu) acc_.gpu_bubble_ns += t_d;  // GPU waits while the PIM decodes

    if (opt_.keep_reports) {
      LatencyReport rep;
      rep.iteration = acc_.iterations;
      rep.t_p_ns[0] = t_p;
      rep.t_batch_ns[0] = t_batch;
      rep.t_d_ns[0] = t_d;
      rep.t_gpu_ns[0] = t_p + t_batch;
      rep.t_pim_ns[0] = t_d;
      rep.window_ns[0] = span;
      rep.decode_tokens = contexts.size();
      rep.chunk_tokens = chunk_tokens;
      reports_.push_back(rep);
    }

    const std::uint64_t decode_count = decode_pool_.size();
    apply_grants(plan);
    finish_iteration(plan, span, decode_count);
    if (opt_.max_iterations && acc_.iterations >= opt_.max_iterations) break;
  }
  return finalize(trace_name);
}

RunMetrics Sim::run(const std::string& trace_name) {
  switch (opt_.policy) {
    case Policy::GPU_ONLY:
    case Policy::RANK_PIM:
      return run_single_device(trace_name);
    case Policy::L3:
      if (opt_.scheduler == SchedulerKind::SINGLE_BATCH) return run_single_device(trace_name);
      return run_interleaved(trace_name);
    case Policy::HBM_PIM:
    case Policy::CPU_OFFLOAD:
      return run_interleaved(trace_name);
  }
  throw TraceError("unhandled policy");
}

}  // namespace

RunMetrics run_simulation(const Trace& trace, const SimConfig& cfg, const SimOptions& opt) {
  Sim sim(trace, cfg, opt);
  return sim.run(trace.provenance);
}

RunMetrics baseline_run(const Trace& trace, const SimConfig& cfg, Policy which, SimOptions opt) {
  opt.policy = which;
  switch (which) {
    case Policy::L3:
      opt.scheduler = SchedulerKind::L3_INTERLEAVED;
      break;
    case Policy::GPU_ONLY:
    case Policy::RANK_PIM:
      opt.scheduler = SchedulerKind::SINGLE_BATCH;
      break;
    case Policy::HBM_PIM:
    case Policy::CPU_OFFLOAD:
      opt.scheduler = SchedulerKind::PREFILL_PRIORITY;
      break;
  }
  return run_simulation(trace, cfg, opt);
}

double policy_decode_mha_ns(Policy p, std::size_t batch, std::uint64_t context_tokens,
                            const SimConfig& cfg) {
  if (batch == 0) return 0;
  if (p == Policy::L3) {
    std::vector<std::pair<std::uint64_t, std::uint64_t>> pairs(batch);
    for (std::size_t i = 0; i < batch; ++i) pairs[i] = {i, context_tokens};
    return decode_mha(pairs, cfg.model, cfg.topology, cfg.timing);
  }
  const double bytes = double(batch) * double(context_tokens) * kv_bytes_per_token(cfg.model);
  double bw = 0;
  switch (p) {
    case Policy::GPU_ONLY:
      bw = cfg.topology.gpu_hbm_bw * cfg.topology.gpu_efficiency;
      break;
    case Policy::HBM_PIM:
      bw = cfg.topology.hbm_pim_bw;
      break;
    case Policy::RANK_PIM:
      bw = rank_pim_bw(cfg.topology, cfg.timing, cfg.baseline);
      break;
    case Policy::CPU_OFFLOAD:
      bw = cpu_aggregate_bw(cfg.topology, cfg.timing);
      break;
    case Policy::L3:
      break;
  }
  return bytes / bw * 1e9;
}

}  // namespace l3sim
