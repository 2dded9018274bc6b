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
#include "l3sim/pim_engine.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "l3sim/fp16.hpp"

namespace l3sim {

PimEngine::PimEngine(const LlmModel& m, const HwTopology& topo, const DdrTiming& timing,
                     RankPuParams rank_pu, BankPuParams bank_pu)
    : model_(m), topo_(topo), timing_(timing), rank_pu_(rank_pu), bank_pu_(bank_pu) {
  if (m.head_dim() % topo.chips_per_rank != 0)
    throw PimError("head_dim must divide across chips_per_rank");
  const std::uint32_t elems_per_read = 8 / m.precision_bytes;  // one 64-bit row-buffer read
  const std::uint32_t elems_per_chip = m.head_dim() / topo.chips_per_rank;
  if (elems_per_chip % elems_per_read != 0)
    throw PimError("per-chip head slice must divide into 64-bit reads");
  reads_per_group_ = elems_per_chip / elems_per_read;
  const std::uint32_t bytes_per_token_chip = elems_per_chip * m.precision_bytes;
  groups_per_row_ = std::max<std::uint32_t>(1, topo.row_bytes_per_chip / bytes_per_token_chip);
  // The softmax chunk is the set of partials one group emits: one per logic bank.
  rank_pu_.softmax_chunk = topo.logic_banks();
}

std::uint32_t PimEngine::token_groups(std::uint64_t tokens) const {
  const std::uint32_t banks = topo_.logic_banks();
  return static_cast<std::uint32_t>((tokens + banks - 1) / banks);
}

std::uint64_t PimEngine::buffer_token_capacity() const {
  return rank_pu_.buffer_bytes / model_.precision_bytes;
}

double PimEngine::score_chunk_interval_cycles() const {
  return double(reads_per_group_) * timing_.ccdl;
}

namespace {

struct Walk {
  std::uint64_t end = 0;       // last read window closes here
  std::uint64_t last_act = 0;  // ACT cycle of the final row
  std::uint64_t last_rd = 0;   // issue cycle of the final read
  std::uint64_t acts = 0;
  std::uint64_t reads = 0;
};

// Row walk of one all-bank broadcast phase starting with an ACT at
// `start`: RCD to the first read, reads at CCDL spacing, PRE/ACT between row
// segments honoring RAS / RTP / RP / RC.
Walk walk_phase(std::uint64_t groups, std::uint32_t groups_per_row, std::uint32_t reads_per_group,
                const DdrTiming& t, std::uint64_t start) {
  Walk w;
  std::uint64_t t_act = start;
  bool first = true;
  while (groups > 0) {
    const std::uint64_t in_row = std::min<std::uint64_t>(groups, groups_per_row);
    if (!first) {
      const std::uint64_t t_pre = std::max(t_act + t.ras, w.last_rd + t.rtp);
      t_act = std::max(t_pre + t.rp, t_act + t.rc);
    }
    const std::uint64_t n_reads = in_row * reads_per_group;
    w.last_rd = t_act + t.rcd + (n_reads - 1) * t.ccdl;
    w.end = w.last_rd + t.ccdl;
    w.last_act = t_act;
    w.acts += 1;
    w.reads += n_reads;
    groups -= in_row;
    first = false;
  }
  return w;
}

}  // namespace

double PimEngine::score_deficit_cycles() const {
  // Bank PUs emit one chunk (logic_banks x chips partials) per group
  // interval; the rank PU must fetch it over the internal burst path and the
  // softmax unit must sustain one chunk per interval.
  const double interval = score_chunk_interval_cycles();
  const double elems_per_burst = double(timing_.bl) * topo_.bus_bits / (8.0 * model_.precision_bytes);
  const double burst_cycles = std::max(1.0, timing_.bl / 2.0);
  const double fetch_cycles =
      std::ceil(double(topo_.logic_banks()) * topo_.chips_per_rank / elems_per_burst) *
      burst_cycles;
  const double su_cycles = double(rank_pu_.softmax_chunk) * rank_pu_.su_cycles_per_elem;
  return std::max({0.0, fetch_cycles - interval, su_cycles - interval});
}

double PimEngine::context_deficit_cycles() const {
  // The rank PU broadcasts normalized scores; each round consumes
  // logic_banks / v_spread fresh elements.
  const double interval = score_chunk_interval_cycles();
  const double elems_per_burst = double(timing_.bl) * topo_.bus_bits / (8.0 * model_.precision_bytes);
  const double burst_cycles = std::max(1.0, timing_.bl / 2.0);
  const double prep_rate = elems_per_burst / (burst_cycles * topo_.chips_per_rank);
  const double needed_per_round = double(topo_.logic_banks()) / topo_.v_spread;
  return std::max(0.0, needed_per_round / prep_rate - interval);
}

PimKernelResult PimEngine::score_phase(std::uint64_t tokens) const {
  PimKernelResult r;
  if (tokens == 0) return r;
  const std::uint64_t groups = token_groups(tokens);
  const Walk w = walk_phase(groups, groups_per_row_, reads_per_group_, timing_, 0);
  const double bubble = groups > 1 ? score_deficit_cycles() * double(groups - 1) : 0.0;
  r.latency_ns = (double(w.end) + bubble) * timing_.tck_ns;
  r.bubble_ns = bubble * timing_.tck_ns;
  r.acts = w.acts;
  r.reads = w.reads;
  return r;
}

PimKernelResult PimEngine::context_phase(std::uint64_t tokens) const {
  PimKernelResult r;
  if (tokens == 0) return r;
  const std::uint64_t groups = token_groups(tokens);
  const Walk w = walk_phase(groups, groups_per_row_, reads_per_group_, timing_, 0);
  const double bubble = groups > 1 ? context_deficit_cycles() * double(groups - 1) : 0.0;
  r.latency_ns = (double(w.end) + bubble) * timing_.tck_ns;
  r.bubble_ns = bubble * timing_.tck_ns;
  r.acts = w.acts;
  r.reads = w.reads;
  return r;
}

double PimEngine::softmax_drain_cycles() const {
  return double(rank_pu_.su_pipeline_depth) +
         double(rank_pu_.softmax_chunk) * rank_pu_.su_cycles_per_elem;
}

PimKernelResult PimEngine::fused_head(std::uint64_t tokens) const {
  PimKernelResult r;
  if (tokens == 0) return r;

  const std::uint64_t cap = buffer_token_capacity();
  const std::uint64_t tiles = (tokens + cap - 1) / cap;
  // Re-normalizing the running output between tiles: rescale D_h accumulators
  // through the adder lanes.
  const double inter_tile_cycles =
      double(rank_pu_.su_pipeline_depth) + double(model_.head_dim()) / rank_pu_.adder_lanes;

  double cursor = 0;
  double bubble_cycles = 0;
  std::uint64_t remaining = tokens;
  for (std::uint64_t tile = 0; tile < tiles; ++tile) {
    const std::uint64_t n = std::min<std::uint64_t>(remaining, cap);
    remaining -= n;
    const std::uint64_t groups = token_groups(n);

    const Walk sc = walk_phase(groups, groups_per_row_, reads_per_group_, timing_, std::uint64_t(cursor));
    // K rows close, V rows open; the first context MAC additionally waits for
    // the softmax drain (last chunk through the unit, first chunk normalized).
    const std::uint64_t t_pre = std::max(sc.last_act + timing_.ras, sc.last_rd + timing_.rtp);
    const std::uint64_t act_floor = std::max(t_pre + timing_.rp, sc.last_act + timing_.rc);
    const std::uint64_t drain_floor = sc.end + std::uint64_t(std::ceil(softmax_drain_cycles()));
    const std::uint64_t ctx_act = std::max(act_floor, drain_floor > timing_.rcd
                                                          ? drain_floor - timing_.rcd
                                                          : act_floor);
    const Walk cx = walk_phase(groups, groups_per_row_, reads_per_group_, timing_, ctx_act);

    cursor = double(cx.end);
    if (tile + 1 < tiles) cursor += inter_tile_cycles;
    if (groups > 1)
      bubble_cycles += (score_deficit_cycles() + context_deficit_cycles()) * double(groups - 1);
    r.acts += sc.acts + cx.acts;
    r.reads += sc.reads + cx.reads;
  }
  cursor += double(rank_pu_.final_agg_cycles);

  r.bubble_ns = bubble_cycles * timing_.tck_ns;
  r.latency_ns = (cursor + bubble_cycles) * timing_.tck_ns;
  return r;
}

std::vector<PimCommand> PimEngine::command_stream(std::uint64_t tokens,
                                                  bool score_then_context) const {
  std::vector<PimCommand> cmds;
  if (tokens == 0) return cmds;
  const std::uint64_t groups = token_groups(tokens);

  const auto emit_phase = [&](std::uint64_t base_row, std::uint64_t start) {
    Walk w;
    std::uint64_t remaining = groups;
    std::uint64_t t_act = start;
    std::uint64_t row = base_row;
    bool first = true;
    while (remaining > 0) {
      const std::uint64_t in_row = std::min<std::uint64_t>(remaining, groups_per_row_);
      if (!first) {
        const std::uint64_t t_pre = std::max(t_act + timing_.ras, w.last_rd + timing_.rtp);
        cmds.push_back({t_pre, PimCommand::PRE, -1, int(row - 1)});
        t_act = std::max(t_pre + timing_.rp, t_act + timing_.rc);
      }
      cmds.push_back({t_act, PimCommand::ACT, -1, int(row)});
      std::uint64_t rd = t_act + timing_.rcd;
      for (std::uint64_t i = 0; i < in_row * reads_per_group_; ++i) {
        cmds.push_back({rd, PimCommand::RD, -1, int(row)});
        rd += timing_.ccdl;
      }
      w.last_rd = rd - timing_.ccdl;
      w.end = rd;
      w.last_act = t_act;
      remaining -= in_row;
      ++row;
      first = false;
    }
    return w;
  };

  const Walk sc = emit_phase(0, 0);
  if (score_then_context) {
    const std::uint64_t t_pre = std::max(sc.last_act + timing_.ras, sc.last_rd + timing_.rtp);
    cmds.push_back({t_pre, PimCommand::PRE, -1, -1});
    const std::uint64_t act_floor = std::max(t_pre + timing_.rp, sc.last_act + timing_.rc);
    const std::uint64_t drain_floor = sc.end + std::uint64_t(std::ceil(softmax_drain_cycles()));
    const std::uint64_t ctx_act = std::max(act_floor, drain_floor > timing_.rcd
                                                          ? drain_floor - timing_.rcd
                                                          : act_floor);
    emit_phase(topo_.rows_per_bank / 2, ctx_act);
  }
  return cmds;
}

std::vector<double> PimEngine::score_values(std::span<const double> q, std::span<const double> k,
                                            std::uint64_t tokens, AccumMode mode) const {
  const std::uint32_t dh = model_.head_dim();
  if (q.size() != dh || k.size() != tokens * dh)
    throw PimError("score_values: dimension mismatch");
  std::vector<double> s(tokens, 0.0);
  if (mode == AccumMode::FP64) {
    // Ideal-arithmetic mode: canonical left-to-right accumulation.
    for (std::uint64_t t = 0; t < tokens; ++t) {
      double acc = 0;
      for (std::uint32_t j = 0; j < dh; ++j) acc += q[j] * k[t * dh + j];
      s[t] = acc;
    }
    return s;
  }
  // fp16: each chip folds its head slice left to right; the rank PU adder
  // tree combines per-chip partials pairwise.
  const std::uint32_t chips = topo_.chips_per_rank;
  const std::uint32_t per_chip = dh / chips;
  std::vector<double> partials(chips);
  for (std::uint64_t t = 0; t < tokens; ++t) {
    for (std::uint32_t c = 0; c < chips; ++c) {
      double acc = 0;
      for (std::uint32_t j = 0; j < per_chip; ++j) {
        const double prod = round_fp16(q[c * per_chip + j] * k[t * dh + c * per_chip + j]);
        acc = round_fp16(acc + prod);
      }
      partials[c] = acc;
    }
    std::uint32_t width = chips;
    while (width > 1) {
      for (std::uint32_t i = 0; i < width / 2; ++i)
        partials[i] = round_fp16(partials[2 * i] + partials[2 * i + 1]);
      if (width % 2) partials[width / 2] = partials[width - 1];
      width = (width + 1) / 2;
    }
    s[t] = partials[0];
  }
  return s;
}

std::vector<double> PimEngine::context_values(std::span<const double> s,
                                              std::span<const double> v, std::uint64_t tokens,
                                              AccumMode mode) const {
  const std::uint32_t dh = model_.head_dim();
  if (s.size() != tokens || v.size() != tokens * dh)
    throw PimError("context_values: dimension mismatch");
  std::vector<double> o(dh, 0.0);
  if (mode == AccumMode::FP64) {
    for (std::uint64_t t = 0; t < tokens; ++t)
      for (std::uint32_t j = 0; j < dh; ++j) o[j] += s[t] * v[t * dh + j];
    return o;
  }
  // fp16: each output element accumulates token contributions inside the bank
  // PU owning that (token stripe, segment); the rank PU sums the per-bank
  // partials in bank order.
  const std::uint32_t spread = topo_.v_spread;
  const std::uint32_t sets = topo_.logic_banks() / spread;
  const std::uint32_t granule_elems = 8 / model_.precision_bytes;
  const std::uint32_t per_chip = dh / topo_.chips_per_rank;
  std::vector<double> bank_partials(topo_.logic_banks());
  for (std::uint32_t j = 0; j < dh; ++j) {
    const std::uint32_t seg = (j % per_chip) / granule_elems;
    std::fill(bank_partials.begin(), bank_partials.end(), 0.0);
    for (std::uint64_t t = 0; t < tokens; ++t) {
      const std::uint32_t bank = std::uint32_t(t % sets) * spread + seg % spread;
      const double prod = round_fp16(s[t] * v[t * dh + j]);
      bank_partials[bank] = round_fp16(bank_partials[bank] + prod);
    }
    double acc = 0;
    for (std::uint32_t b = 0; b < topo_.logic_banks(); ++b)
      acc = round_fp16(acc + bank_partials[b]);
    o[j] = acc;
  }
  return o;
}

std::vector<double> PimEngine::attend(std::span<const double> q, std::span<const double> k,
                                      std::span<const double> v, std::uint64_t tokens,
                                      AccumMode mode) const {
  auto scores = score_values(q, k, tokens, mode);
  // FP64 (ideal arithmetic) runs the softmax as a single pass; FP16 models
  // the chunked unit and broadcasts fp16 values.
  const std::uint32_t chunk =
      mode == AccumMode::FP64 ? std::uint32_t(std::max<std::uint64_t>(1, tokens))
                              : rank_pu_.softmax_chunk;
  auto [normalized, latency] = softmax_chunks(scores, chunk, timing_, rank_pu_);
  (void)latency;
  if (mode == AccumMode::FP16)
    for (auto& x : normalized) x = round_fp16(x);
  return context_values(normalized, v, tokens, mode);
}

std::pair<std::vector<double>, double> softmax_chunks(std::span<const double> scores,
                                                      std::uint32_t chunk, const DdrTiming& timing,
                                                      const RankPuParams& pu) {
  if (chunk < 1) throw PimError("softmax_chunks: chunk must be >= 1");
  for (double x : scores)
    if (!std::isfinite(x)) throw PimError("softmax_chunks: non-finite score input");
  std::vector<double> out(scores.size());
  if (scores.empty()) return {out, 0.0};

  // Online max rescaling over chunks, final normalization once all chunks
  // are through.
  double running_max = -std::numeric_limits<double>::infinity();
  double z = 0.0;
  for (std::size_t base = 0; base < scores.size(); base += chunk) {
    const std::size_t end = std::min(scores.size(), base + chunk);
    double local_max = -std::numeric_limits<double>::infinity();
    for (std::size_t i = base; i < end; ++i) local_max = std::max(local_max, scores[i]);
    const double new_max = std::max(running_max, local_max);
    z *= std::exp(running_max - new_max);
    for (std::size_t i = base; i < end; ++i) z += std::exp(scores[i] - new_max);
    running_max = new_max;
  }
  for (std::size_t i = 0; i < scores.size(); ++i) out[i] = std::exp(scores[i] - running_max) / z;

  const std::uint64_t n_chunks = (scores.size() + chunk - 1) / chunk;
  const double cycles =
      double(pu.su_pipeline_depth) + double(n_chunks) * chunk * pu.su_cycles_per_elem;
  return {out, cycles * timing.tck_ns};
}

RefreshManager::Decision RefreshManager::issue_to_budget(double now_ns, std::uint32_t budget) {
  Decision d;
  if (now_ns <= covered_until_ns_) return d;
  const double elapsed = now_ns - covered_until_ns_;
  const auto whole = static_cast<std::uint64_t>(elapsed / timing_.trefi_ns);
  if (whole > budget) {
    d.issued = static_cast<std::uint32_t>(whole - budget);
    d.charged_ns = d.issued * timing_.trfc_ns;
    covered_until_ns_ += double(d.issued) * timing_.trefi_ns;
  }
  return d;
}

RefreshManager::Decision RefreshManager::on_head_complete(double now_ns,
                                                          double projected_next_head_ns) {
  // Catch up every whole interval accrued so far, then pull in enough extra
  // that the coming head cannot push the deferral past the budget.
  Decision d = issue_to_budget(now_ns, 0);
  if (projected_next_head_ns > double(kMaxDeferred) * timing_.trefi_ns) {
    const double overflow = projected_next_head_ns - double(kMaxDeferred) * timing_.trefi_ns;
    const auto extra = static_cast<std::uint32_t>(std::ceil(overflow / timing_.trefi_ns));
    d.issued += extra;
    d.charged_ns += extra * timing_.trfc_ns;
    covered_until_ns_ += double(extra) * timing_.trefi_ns;
  }
  return d;
}

RefreshManager::Decision RefreshManager::on_idle_check(double now_ns) {
  return issue_to_budget(now_ns, kMaxDeferred);
}

std::uint32_t RefreshManager::outstanding(double now_ns) const {
  if (now_ns <= covered_until_ns_) return 0;
  return static_cast<std::uint32_t>((now_ns - covered_until_ns_) / timing_.trefi_ns);
}

std::vector<double> decode_mha_per_rankset(
    std::span<const std::pair<std::uint64_t, std::uint64_t>> batch, const LlmModel& m,
    const HwTopology& topo, const DdrTiming& timing, const RankPuParams& rank_pu) {
  const std::uint32_t rs_count = topo.ranksets();
  std::vector<double> per_rankset(rs_count, 0.0);
  if (batch.empty()) return per_rankset;

  PimEngine engine(m, topo, timing, rank_pu);
  const std::uint32_t heads_per_channel = (m.heads + topo.channels - 1) / topo.channels;
  const std::uint32_t full_rounds = m.layers / rs_count;
  const std::uint32_t remainder = m.layers % rs_count;

  for (const auto& [request, tokens] : batch) {
    if (tokens == 0) continue;
    const double head_ns = engine.fused_head(tokens).latency_ns;
    const std::uint32_t base = static_cast<std::uint32_t>(request % rs_count);
    for (std::uint32_t rs = 0; rs < rs_count; ++rs) {
      const std::uint32_t offset = (rs + rs_count - base) % rs_count;
      const std::uint32_t layers_here = full_rounds + (offset < remainder ? 1 : 0);
      per_rankset[rs] += double(layers_here) * heads_per_channel * head_ns;
    }
  }
  // Steady-state refresh charge: one tRFC per tREFI of busy time; the
  // per-head RefreshManager discipline keeps the deferral within budget.
  const double refresh_factor = 1.0 + timing.trfc_ns / timing.trefi_ns;
  for (auto& v : per_rankset) v *= refresh_factor;
  return per_rankset;
}

double decode_mha(std::span<const std::pair<std::uint64_t, std::uint64_t>> batch,
                  const LlmModel& m, const HwTopology& topo, const DdrTiming& timing,
                  const RankPuParams& rank_pu) {
  const auto per_rankset = decode_mha_per_rankset(batch, m, topo, timing, rank_pu);
  double worst = 0;
  for (double v : per_rankset) worst = std::max(worst, v);
  return worst;
}

}  // namespace l3sim
