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
#include <map>
#include <stdexcept>
#include <vector>

#include "l3sim/config.hpp"

namespace l3sim {

struct MappingError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

constexpr std::int32_t kAllChips = -1;  // logic-bank span across every chip of the rank

struct BankAddress {
  std::uint32_t rankset = 0;
  std::uint32_t channel = 0;
  std::uint32_t rank = 0;       // rank index within the channel (== rankset)
  std::int32_t chip = kAllChips;
  std::uint32_t bank = 0;       // logic bank id
  std::uint32_t row = 0;
  std::uint32_t col_offset = 0;  // byte offset within the row, per chip
};

/// K vector of one token: one logic bank, contiguous columns in every chip,
/// identical (row, col) across chips.
struct KSpan {
  BankAddress base;
  std::uint32_t bytes_per_chip = 0;
};

/// V vector of one token: burst-sized segments striped over a v_spread-wide
/// bank set, identical per-segment offsets for tokens v_spread apart.
struct VSegment {
  BankAddress addr;
  std::uint32_t bytes_per_chip = 0;
};

struct VSpan {
  std::vector<VSegment> segments;
};

// Layer -> rankset round robin, staggered by request so concurrent requests
// do not all land layer 0 on rankset 0.
std::uint32_t rankset_for_layer(std::uint64_t request_id, std::uint32_t layer,
                                const HwTopology& topo);

std::uint32_t channel_for_head(std::uint32_t head, const HwTopology& topo);

KSpan place_k_vector(std::uint64_t token, std::uint32_t head, std::uint32_t layer,
                     std::uint64_t request, const HwTopology& topo, const LlmModel& m);

VSpan place_v_vector(std::uint64_t token, std::uint32_t head, std::uint32_t layer,
                     std::uint64_t request, const HwTopology& topo, const LlmModel& m);

std::uint32_t k_bytes_per_chip_per_token(const HwTopology& topo, const LlmModel& m);
std::uint32_t k_tokens_per_row(const HwTopology& topo, const LlmModel& m);

/// Aggregate registry of where requests' KV bytes live. Token addresses are
/// recomputed on demand via the pure placement functions; the registry tracks
/// per-request token counts and per-rankset/channel byte totals.
class KvPlacement {
 public:
  KvPlacement(const LlmModel& m, const HwTopology& topo) : model_(m), topo_(topo) {}

  // Appends `tokens` new tokens for `request` (prefill chunk or decode step).
  void add_tokens(std::uint64_t request, std::uint64_t tokens);
  void remove_request(std::uint64_t request);

  std::uint64_t tokens_of(std::uint64_t request) const;
  Bytes total_bytes() const { return total_bytes_; }
  Bytes rankset_bytes(std::uint32_t rankset) const;
  const std::map<std::uint64_t, std::uint64_t>& requests() const { return tokens_; }

  const LlmModel& model() const { return model_; }
  const HwTopology& topology() const { return topo_; }

 private:
  LlmModel model_;
  HwTopology topo_;
  std::map<std::uint64_t, std::uint64_t> tokens_;
  std::vector<Bytes> rankset_bytes_;
  Bytes total_bytes_ = 0;
};

struct PlacementStats {
  std::vector<Bytes> rankset_bytes;
  std::vector<std::uint64_t> rankset_tokens;   // token-layer pairs resident per rankset
  std::vector<Bytes> channel_bytes;
  std::vector<std::uint64_t> idle_channels;    // channels serving no head
  Bytes max_rankset_bytes = 0;
  Bytes min_rankset_bytes = 0;
  Bytes imbalance() const { return max_rankset_bytes - min_rankset_bytes; }
};

PlacementStats placement_stats(const KvPlacement& p);

}  // namespace l3sim
