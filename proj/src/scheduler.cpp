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
#include "l3sim/scheduler.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "l3sim/interconnect.hpp"

namespace l3sim {

std::pair<std::vector<std::pair<std::uint64_t, std::uint64_t>>,
          std::vector<std::pair<std::uint64_t, std::uint64_t>>>
split_decode(std::span<const std::pair<std::uint64_t, std::uint64_t>> decode) {
  std::vector<std::pair<std::uint64_t, std::uint64_t>> sorted(decode.begin(), decode.end());
  std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  std::pair<std::vector<std::pair<std::uint64_t, std::uint64_t>>,
            std::vector<std::pair<std::uint64_t, std::uint64_t>>>
      out;
  std::uint64_t total0 = 0, total1 = 0;
  for (const auto& r : sorted) {
    if (total0 <= total1) {
      out.first.push_back(r);
      total0 += r.second;
    } else {
      out.second.push_back(r);
      total1 += r.second;
    }
  }
  return out;
}

EngineCostModel::EngineCostModel(const SimConfig& cfg)
    : cfg_(cfg), gpu_(cfg.model, cfg.topology) {}

double EngineCostModel::t_p(std::span<const std::uint32_t> c_p,
                            std::span<const std::uint64_t> f_p) const {
  if (c_p.empty()) return 0.0;
  return gpu_.prefill_mha(c_p, f_p).latency_ns;
}

double EngineCostModel::t_batch(std::uint64_t chunk_tokens, std::size_t other_decode_count) const {
  return gpu_.fc_batch(chunk_tokens + other_decode_count).latency_ns;
}

double EngineCostModel::t_d(std::span<const std::uint64_t> f_d,
                            std::span<const std::uint64_t> ids) const {
  std::vector<std::pair<std::uint64_t, std::uint64_t>> batch(f_d.size());
  for (std::size_t i = 0; i < f_d.size(); ++i) batch[i] = {ids[i], f_d[i]};
  return decode_mha(batch, cfg_.model, cfg_.topology, cfg_.timing);
}

std::vector<double> EngineCostModel::t_d_per_rankset(std::span<const std::uint64_t> f_d,
                                                     std::span<const std::uint64_t> ids) const {
  std::vector<std::pair<std::uint64_t, std::uint64_t>> batch(f_d.size());
  for (std::size_t i = 0; i < f_d.size(); ++i) batch[i] = {ids[i], f_d[i]};
  return decode_mha_per_rankset(batch, cfg_.model, cfg_.topology, cfg_.timing);
}

double EngineCostModel::t_comm(std::size_t decode_count) const {
  return critical_transfer_latency(decode_count, cfg_.model, cfg_.topology);
}

double EngineCostModel::overlap_rate_ns_per_token() const {
  const double bw = std::min(cfg_.topology.pcie_bw, cpu_aggregate_bw(cfg_.topology, cfg_.timing));
  return double(kv_bytes_per_token(cfg_.model)) / bw * 1e9;
}

CostModel::PimCost EngineCostModel::pim_cost(std::span<const std::uint64_t> f_d,
                                             std::span<const std::uint64_t> ids) const {
  PimCost c;
  c.base_ns = t_d(f_d, ids) + t_comm(f_d.size());
  c.per_chunk_token_ns = overlap_rate_ns_per_token();
  return c;
}

double EngineCostModel::t_gpu(std::span<const std::uint32_t> c_p,
                              std::span<const std::uint64_t> f_p,
                              std::size_t other_decode_count) const {
  std::uint64_t chunk_tokens = 0;
  for (auto c : c_p) chunk_tokens += c;
  return t_p(c_p, f_p) + t_batch(chunk_tokens, other_decode_count);
}

LatencyPredictors::LatencyPredictors(const SchedulerParams& params, std::uint64_t seed)
    : params_(params),
      gpu_prefill_model_(params.forest_trees, params.forest_depth, seed),
      gpu_batch_model_(params.forest_trees, params.forest_depth, seed + 1),
      pim_window_(params.window_size),
      prefill_window_(params.window_size),
      batch_window_(params.window_size) {}

std::vector<double> LatencyPredictors::pim_features(std::span<const std::uint64_t> f_d,
                                                    std::uint64_t other_chunk_tokens) {
  double sum = 0;
  for (auto t : f_d) sum += double(t);
  return {sum, double(f_d.size()), double(other_chunk_tokens)};
}

std::vector<double> LatencyPredictors::prefill_features(std::span<const std::uint32_t> c_p,
                                                        std::span<const std::uint64_t> f_p) {
  double sum_c = 0, sum_f = 0, work = 0;
  for (std::size_t i = 0; i < c_p.size(); ++i) {
    sum_c += c_p[i];
    sum_f += double(f_p[i]);
    work += double(c_p[i]) * (double(c_p[i]) + double(f_p[i]));
  }
  return {double(c_p.size()), sum_c, sum_f, work};
}

std::vector<double> LatencyPredictors::batch_features(std::uint64_t chunk_tokens,
                                                      std::size_t other_decode_count) {
  // The batched FC pass sees chunk tokens plus one token per decode request;
  // the total is the third, derived feature.
  return {double(chunk_tokens), double(other_decode_count),
          double(chunk_tokens) + double(other_decode_count)};
}

CostModel::PimCost LatencyPredictors::pim_cost(std::span<const std::uint64_t> f_d,
                                               std::span<const std::uint64_t> ids) const {
  (void)ids;
  if (!trained_) throw PredictorError("predictors not trained (bootstrap mode)");
  PimCost c;
  c.base_ns = pim_model_.predict(pim_features(f_d, 0));
  c.per_chunk_token_ns = std::max(0.0, pim_model_.coefficients()[2]);
  return c;
}

double LatencyPredictors::t_gpu(std::span<const std::uint32_t> c_p,
                                std::span<const std::uint64_t> f_p,
                                std::size_t other_decode_count) const {
  if (!trained_) throw PredictorError("predictors not trained (bootstrap mode)");
  std::uint64_t chunk_tokens = 0;
  for (auto c : c_p) chunk_tokens += c;
  double v = gpu_batch_model_.predict(batch_features(chunk_tokens, other_decode_count));
  if (!c_p.empty()) v += gpu_prefill_model_.predict(prefill_features(c_p, f_p));
  return v;
}

bool LatencyPredictors::ready() const { return trained_; }

void LatencyPredictors::record(const Observation& obs) {
  pim_window_.add({pim_features(obs.f_d, obs.other_chunk_tokens), obs.observed_t_pim_ns});
  prefill_window_.add({prefill_features(obs.c_p, obs.f_p), obs.observed_t_p_ns});
  batch_window_.add(
      {batch_features([&] {
         std::uint64_t s = 0;
         for (auto c : obs.c_p) s += c;
         return s;
       }(), obs.other_decode_count),
       obs.observed_t_batch_ns});
  maybe_retrain();
}

void LatencyPredictors::dump_windows_csv(std::ostream& out) const {
  const auto emit = [&out](const char* name, const SampleWindow& w) {
    const auto fx = w.features();
    const auto ty = w.targets();
    for (std::size_t i = 0; i < fx.size(); ++i) {
      out << name << "," << ty[i];
      for (double f : fx[i]) out << "," << f;
      out << "\n";
    }
  };
  out << "model,target_ns,features...\n";
  emit("pim_linear", pim_window_);
  emit("gpu_prefill_rfr", prefill_window_);
  emit("gpu_batch_rfr", batch_window_);
}

void LatencyPredictors::maybe_retrain() {
  const bool due = !trained_ ? pim_window_.size() >= params_.bootstrap_min
                             : pim_window_.since_train() >= params_.retrain_stride;
  if (!due) return;
  const auto fx = pim_window_.features();
  pim_model_.fit(fx, pim_window_.targets());
  gpu_prefill_model_.fit(prefill_window_.features(), prefill_window_.targets());
  gpu_batch_model_.fit(batch_window_.features(), batch_window_.targets());
  pim_window_.mark_trained();
  prefill_window_.mark_trained();
  batch_window_.mark_trained();
  trained_ = true;
}

std::uint32_t Scheduler::round_up_chunk(std::uint64_t tokens) const {
  const std::uint64_t m = params_.chunk_multiple;
  const std::uint64_t r = (tokens + m - 1) / m * m;
  return static_cast<std::uint32_t>(r);
}

IterationPlan Scheduler::build_iteration(const ScheduleInputs& in, const CostModel& model) const {
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
  std::size_t cursor = 0;

  const auto try_take = [&](std::size_t index) -> bool {
    const PrefillItem& item = in.prefill[index];
    if (item.remaining == 0) return false;
    if (!item.resident) {
      if (item.admit_bytes > budget) return false;
      budget -= item.admit_bytes;
    }
    return true;
  };

  if (!model.ready()) {
    // Cold start: fixed default chunk, pass-through placement, flagged
    // unaligned so downstream accounting knows alignment was not attempted.
    plan.bootstrap = true;
    plan.sub[0].bootstrap = plan.sub[1].bootstrap = true;
    if (cursor < in.prefill.size() && try_take(cursor)) {
      const PrefillItem& item = in.prefill[cursor];
      const std::uint32_t full = round_up_chunk(item.remaining);
      const std::uint32_t chunk = std::min<std::uint32_t>(params_.default_chunk, full);
      const int side = plan.sub[0].decode_tokens() <= plan.sub[1].decode_tokens() ? 0 : 1;
      plan.sub[side].prefill_ids.push_back(item.id);
      plan.sub[side].c_p.push_back(chunk);
      plan.sub[side].f_p.push_back(item.finished);
      if (chunk < full) plan.sub[side].chunked_index = 0;
      plan.grants.push_back({cursor, chunk, std::min<std::uint64_t>(chunk, item.remaining),
                             !item.resident, item.admit_bytes});
      ++cursor;
    }
    return plan;
  }

  const CostModel::PimCost pim[2] = {model.pim_cost(plan.sub[0].f_d, plan.sub[0].decode_ids),
                          model.pim_cost(plan.sub[1].f_d, plan.sub[1].decode_ids)};

  struct Taken {
    std::size_t queue_index;
    bool new_admission;
  };
  std::vector<Taken> taken[2];

  // Steps 3: grow sub-batch 1's GPU side until it exceeds sub-batch 0's PIM
  // side, then the same for sub-batch 0 against sub-batch 1.
  for (const int side : {1, 0}) {
    SubBatch& sb = plan.sub[side];
    const CostModel::PimCost& other_pim = pim[1 - side];
    const std::size_t other_len = plan.sub[1 - side].f_d.size();
    while (cursor < in.prefill.size()) {
      const double gpu_now = model.t_gpu(sb.c_p, sb.f_p, other_len);
      const double pim_now = other_pim.at(sb.chunk_tokens());
      if (gpu_now > pim_now) break;
      if (!try_take(cursor)) break;
      const PrefillItem& item = in.prefill[cursor];
      sb.prefill_ids.push_back(item.id);
      sb.c_p.push_back(round_up_chunk(item.remaining));
      sb.f_p.push_back(item.finished);
      taken[side].push_back({cursor, !item.resident});
      ++cursor;
    }
  }

  // Step 4: the last prefill request of each sub-batch is chunked to pull
  // T_GPU as close as possible to the other side's T_PIM.
  for (const int side : {1, 0}) {
    SubBatch& sb = plan.sub[side];
    if (sb.c_p.empty()) continue;
    const CostModel::PimCost& other_pim = pim[1 - side];
    const std::size_t other_len = plan.sub[1 - side].f_d.size();
    const std::size_t last = sb.c_p.size() - 1;
    const std::uint32_t full = sb.c_p[last];
    std::uint64_t prefix = 0;
    for (std::size_t i = 0; i < last; ++i) prefix += sb.c_p[i];

    std::uint32_t best_chunk = full;
    double best_gap = std::abs(model.t_gpu(sb.c_p, sb.f_p, other_len) -
                               other_pim.at(prefix + full));
    std::vector<std::uint32_t> scratch(sb.c_p.begin(), sb.c_p.end());
    for (std::uint32_t c = params_.chunk_multiple; c < full; c += params_.chunk_multiple) {
      scratch[last] = c;
      const double gap =
          std::abs(model.t_gpu(scratch, sb.f_p, other_len) - other_pim.at(prefix + c));
      if (gap < best_gap - 1e-9) {
        best_gap = gap;
        best_chunk = c;
      }
    }
    if (best_chunk < full) {
      sb.c_p[last] = best_chunk;
      sb.chunked_index = std::int32_t(last);
    }
  }

  // Starvation guard: when the stop rule admitted nothing (GPU already ahead
  // of the PIM side) but prefill work and budget exist, admit one default
  // chunk so the decode pool keeps refilling.
  if (taken[0].empty() && taken[1].empty() && cursor < in.prefill.size() && try_take(cursor)) {
    const PrefillItem& item = in.prefill[cursor];
    const std::uint32_t full = round_up_chunk(item.remaining);
    const std::uint32_t chunk = std::min<std::uint32_t>(params_.default_chunk, full);
    const int side =
        model.t_gpu(plan.sub[0].c_p, plan.sub[0].f_p, plan.sub[1].f_d.size()) <=
                model.t_gpu(plan.sub[1].c_p, plan.sub[1].f_p, plan.sub[0].f_d.size())
            ? 0
            : 1;
    SubBatch& sb = plan.sub[side];
    sb.prefill_ids.push_back(item.id);
    sb.c_p.push_back(chunk);
    sb.f_p.push_back(item.finished);
    sb.pressure_admitted = true;
    if (chunk < full) sb.chunked_index = std::int32_t(sb.c_p.size() - 1);
    taken[side].push_back({cursor, !item.resident});
    ++cursor;
  }

  // Emit grants in queue order.
  for (const int side : {1, 0}) {
    const SubBatch& sb = plan.sub[side];
    for (std::size_t i = 0; i < taken[side].size(); ++i) {
      const auto& t = taken[side][i];
      const PrefillItem& item = in.prefill[t.queue_index];
      const std::uint32_t chunk = sb.c_p[i];
      plan.grants.push_back({t.queue_index, chunk,
                             std::min<std::uint64_t>(chunk, item.remaining), t.new_admission,
                             item.admit_bytes});
    }
  }
  std::sort(plan.grants.begin(), plan.grants.end(),
            [](const ChunkGrant& a, const ChunkGrant& b) { return a.queue_index < b.queue_index; });

  // Final predicted values.
  for (const int side : {0, 1}) {
    plan.sub[side].predicted_gpu_ns = model.t_gpu(plan.sub[side].c_p, plan.sub[side].f_p,
                                                  plan.sub[1 - side].f_d.size());
    plan.sub[side].predicted_pim_ns = pim[side].at(plan.sub[1 - side].chunk_tokens());
  }
  return plan;
}

}  // namespace l3sim
