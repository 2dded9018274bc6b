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
#include "l3sim/kv_mapping.hpp"

namespace l3sim {

namespace {

// Each (request, layer, head) owns a virtual row region inside its bank set;
// K regions live in the lower half of the row space, V regions in the upper
// half. Region slots are hashed -- the model tracks aggregate capacity in
// bytes, not per-row occupancy.
std::uint32_t region_slot(std::uint64_t request, std::uint32_t layer, std::uint32_t head,
                          std::uint32_t slots) {
  std::uint64_t h = request * 0x9e3779b97f4a7c15ull;
  h ^= (std::uint64_t(layer) << 32) | head;
  h *= 0xc2b2ae3d27d4eb4full;
  h ^= h >> 29;
  return slots ? static_cast<std::uint32_t>(h % slots) : 0;
}

std::uint32_t rows_per_region(const HwTopology& topo, const LlmModel& m) {
  const std::uint32_t bytes_per_chip = std::max<std::uint32_t>(
      1, m.head_dim() / topo.chips_per_rank * m.precision_bytes);
  const std::uint64_t tokens_per_bank =
      (std::uint64_t(topo.max_tokens_per_head) + topo.logic_banks() - 1) / topo.logic_banks();
  const std::uint32_t per_row = std::max<std::uint32_t>(1, topo.row_bytes_per_chip / bytes_per_chip);
  return static_cast<std::uint32_t>((tokens_per_bank + per_row - 1) / per_row);
}

}  // namespace

std::uint32_t rankset_for_layer(std::uint64_t request_id, std::uint32_t layer,
                                const HwTopology& topo) {
  const std::uint32_t rs = topo.ranksets();
  const std::uint32_t base = static_cast<std::uint32_t>(request_id % rs);
  return (base + layer) % rs;
}

std::uint32_t channel_for_head(std::uint32_t head, const HwTopology& topo) {
  return head % topo.channels;
}

std::uint32_t k_bytes_per_chip_per_token(const HwTopology& topo, const LlmModel& m) {
  if (m.head_dim() % topo.chips_per_rank != 0)
    throw MappingError("head_dim " + std::to_string(m.head_dim()) +
                       " not divisible across chips_per_rank " +
                       std::to_string(topo.chips_per_rank));
  return m.head_dim() / topo.chips_per_rank * m.precision_bytes;
}

std::uint32_t k_tokens_per_row(const HwTopology& topo, const LlmModel& m) {
  const std::uint32_t per_token = k_bytes_per_chip_per_token(topo, m);
  if (per_token > topo.row_bytes_per_chip)
    throw MappingError("one token's K bytes exceed the bank row");
  return topo.row_bytes_per_chip / per_token;
}

KSpan place_k_vector(std::uint64_t token, std::uint32_t head, std::uint32_t layer,
                     std::uint64_t request, const HwTopology& topo, const LlmModel& m) {
  if (head >= m.heads || layer >= m.layers) throw MappingError("head/layer out of range");
  if (token >= topo.max_tokens_per_head)
    throw MappingError("token " + std::to_string(token) +
                       " exceeds the per-head row budget (max_tokens_per_head=" +
                       std::to_string(topo.max_tokens_per_head) + "); needs extra rows");
  const std::uint32_t banks = topo.logic_banks();
  const std::uint32_t per_token = k_bytes_per_chip_per_token(topo, m);
  const std::uint32_t per_row = k_tokens_per_row(topo, m);
  const std::uint32_t region_rows = rows_per_region(topo, m);
  const std::uint32_t k_rows = topo.rows_per_bank / 2;
  const std::uint32_t slots = std::max<std::uint32_t>(1, k_rows / region_rows);

  const std::uint64_t slot = token / banks;  // stacking slot within the bank
  KSpan span;
  span.base.rankset = rankset_for_layer(request, layer, topo);
  span.base.channel = channel_for_head(head, topo);
  span.base.rank = span.base.rankset;
  span.base.chip = kAllChips;
  span.base.bank = static_cast<std::uint32_t>(token % banks);
  span.base.row = region_slot(request, layer, head, slots) * region_rows +
                  static_cast<std::uint32_t>(slot / per_row);
  span.base.col_offset = static_cast<std::uint32_t>(slot % per_row) * per_token;
  span.bytes_per_chip = per_token;
  return span;
}

VSpan place_v_vector(std::uint64_t token, std::uint32_t head, std::uint32_t layer,
                     std::uint64_t request, const HwTopology& topo, const LlmModel& m) {
  if (head >= m.heads || layer >= m.layers) throw MappingError("head/layer out of range");
  if (token >= topo.max_tokens_per_head)
    throw MappingError("token exceeds the per-head row budget; needs extra rows");
  const std::uint32_t banks = topo.logic_banks();
  const std::uint32_t spread = topo.v_spread;
  const std::uint32_t per_token = k_bytes_per_chip_per_token(topo, m);  // same volume as K
  const std::uint32_t burst_bytes = topo.bus_bits / 8 / topo.chips_per_rank * topo.chips_per_rank;
  // Burst granule per chip: one column command's worth (8 bytes on a 64-bit
  // internal fetch for x8 chips).
  const std::uint32_t granule = 8;
  if (per_token % granule != 0)
    throw MappingError("V vector does not divide into burst granules");
  (void)burst_bytes;
  const std::uint32_t segments = per_token / granule;
  if (segments % spread != 0 && spread % segments != 0 && segments > spread)
    throw MappingError("V segments do not stripe evenly over v_spread banks");

  const std::uint32_t sets = banks / spread;            // concurrent token groups
  const std::uint32_t set = static_cast<std::uint32_t>(token % sets);
  const std::uint64_t slot = token / sets;              // stacking slot within the set
  const std::uint32_t segs_per_bank = (segments + spread - 1) / spread;
  const std::uint32_t bytes_per_bank = segs_per_bank * granule;
  const std::uint32_t per_row = std::max<std::uint32_t>(1, topo.row_bytes_per_chip / bytes_per_bank);
  const std::uint32_t region_rows = rows_per_region(topo, m);
  const std::uint32_t v_rows = topo.rows_per_bank - topo.rows_per_bank / 2;
  const std::uint32_t slots = std::max<std::uint32_t>(1, v_rows / region_rows);
  const std::uint32_t region_base = topo.rows_per_bank / 2 +
                                    region_slot(request, layer, head, slots) * region_rows;

  VSpan span;
  span.segments.reserve(segments);
  for (std::uint32_t s = 0; s < segments; ++s) {
    VSegment seg;
    seg.addr.rankset = rankset_for_layer(request, layer, topo);
    seg.addr.channel = channel_for_head(head, topo);
    seg.addr.rank = seg.addr.rankset;
    seg.addr.chip = kAllChips;
    seg.addr.bank = set * spread + s % spread;
    seg.addr.row = region_base + static_cast<std::uint32_t>(slot / per_row);
    seg.addr.col_offset = static_cast<std::uint32_t>(slot % per_row) * bytes_per_bank +
                          (s / spread) * granule;
    seg.bytes_per_chip = granule;
    span.segments.push_back(seg);
  }
  return span;
}

void KvPlacement::add_tokens(std::uint64_t request, std::uint64_t tokens) {
  if (tokens == 0) return;
  if (rankset_bytes_.empty()) rankset_bytes_.assign(topo_.ranksets(), 0);
  const std::uint64_t start = tokens_[request];
  tokens_[request] = start + tokens;
  // 2 (K and V) * D_e * precision per token per layer; layers rotate ranksets.
  const Bytes per_token_layer = Bytes(2) * model_.embedding * model_.precision_bytes;
  const std::uint32_t rs = topo_.ranksets();
  const std::uint32_t full_rounds = model_.layers / rs;
  for (std::uint32_t r = 0; r < rs; ++r)
    rankset_bytes_[r] += per_token_layer * full_rounds * tokens;
  for (std::uint32_t layer = full_rounds * rs; layer < model_.layers; ++layer)
    rankset_bytes_[rankset_for_layer(request, layer, topo_)] += per_token_layer * tokens;
  total_bytes_ += kv_bytes_per_token(model_) * tokens;
}

void KvPlacement::remove_request(std::uint64_t request) {
  auto it = tokens_.find(request);
  if (it == tokens_.end()) return;
  const std::uint64_t tokens = it->second;
  const Bytes per_token_layer = Bytes(2) * model_.embedding * model_.precision_bytes;
  const std::uint32_t rs = topo_.ranksets();
  const std::uint32_t full_rounds = model_.layers / rs;
  for (std::uint32_t r = 0; r < rs; ++r)
    rankset_bytes_[r] -= per_token_layer * full_rounds * tokens;
  for (std::uint32_t layer = full_rounds * rs; layer < model_.layers; ++layer)
    rankset_bytes_[rankset_for_layer(request, layer, topo_)] -= per_token_layer * tokens;
  total_bytes_ -= kv_bytes_per_token(model_) * tokens;
  tokens_.erase(it);
}

std::uint64_t KvPlacement::tokens_of(std::uint64_t request) const {
  auto it = tokens_.find(request);
  return it == tokens_.end() ? 0 : it->second;
}

Bytes KvPlacement::rankset_bytes(std::uint32_t rankset) const {
  return rankset < rankset_bytes_.size() ? rankset_bytes_[rankset] : 0;
}

PlacementStats placement_stats(const KvPlacement& p) {
  const HwTopology& topo = p.topology();
  const LlmModel& m = p.model();
  PlacementStats st;
  st.rankset_bytes.assign(topo.ranksets(), 0);
  st.rankset_tokens.assign(topo.ranksets(), 0);
  st.channel_bytes.assign(topo.channels, 0);

  for (std::uint32_t r = 0; r < topo.ranksets(); ++r) st.rankset_bytes[r] = p.rankset_bytes(r);

  const Bytes per_token_layer_head =
      Bytes(2) * m.head_dim() * m.precision_bytes;  // K+V of one head
  for (const auto& [request, tokens] : p.requests()) {
    for (std::uint32_t layer = 0; layer < m.layers; ++layer) {
      const std::uint32_t rs = rankset_for_layer(request, layer, topo);
      st.rankset_tokens[rs] += tokens;
    }
    (void)per_token_layer_head;
  }
  // Per-channel bytes: heads rotate channels; layers contribute equally.
  const Bytes total = p.total_bytes();
  if (m.heads > 0 && total > 0) {
    const Bytes per_head = total / m.heads;
    for (std::uint32_t h = 0; h < m.heads; ++h)
      st.channel_bytes[channel_for_head(h, topo)] += per_head;
  }
  for (std::uint32_t c = 0; c < topo.channels; ++c)
    if (st.channel_bytes[c] == 0 && total > 0) st.idle_channels.push_back(c);

  if (!st.rankset_bytes.empty()) {
    st.max_rankset_bytes = *std::max_element(st.rankset_bytes.begin(), st.rankset_bytes.end());
    st.min_rankset_bytes = *std::min_element(st.rankset_bytes.begin(), st.rankset_bytes.end());
  }
  return st;
}

}  // namespace l3sim
