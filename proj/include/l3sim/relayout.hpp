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
#include <stdexcept>
#include <string>
#include <vector>

#include "l3sim/config.hpp"

namespace l3sim {

struct RelayoutError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// One beat of a write burst: bus_bits bits, bit i travels on chip lane
/// i / chip_io_bits.
struct BurstBeat {
  std::vector<std::uint8_t> bits;  // one entry per bus bit, values 0/1
  std::uint32_t beat_index = 0;

  std::uint32_t width() const { return static_cast<std::uint32_t>(bits.size()); }
};

BurstBeat beat_from_u64(std::uint64_t payload, std::uint32_t bus_bits, std::uint32_t beat_index);
std::uint64_t beat_to_u64(const BurstBeat& beat);

// The buffer-chip permutation over a group of `ratio` beats, where
// ratio = elem_bits / chip_io_bits. Position indexing within the group is
// beat * bus_bits + bus_position.
//
// Input convention (host memory order): elements are packed consecutively
// across the bus, so an element straddles `ratio` adjacent chip lanes within
// one beat. Output convention: element e is rebuilt in chip lane
// e % chips, with its bit slices spread over the group's beats; writing
// beat k to per-chip burst position k then leaves every element whole inside
// a single chip. Ratio 1 yields the identity.
struct RelayoutMap {
  std::uint32_t bus_bits = 0;
  std::uint32_t chip_io_bits = 0;
  std::uint32_t elem_bits = 0;
  std::uint32_t ratio = 0;                 // beats per group
  std::vector<std::uint32_t> forward;      // forward[src] = dst
  std::vector<std::uint32_t> inverse;      // inverse[dst] = src

  std::uint32_t group_bits() const { return ratio * bus_bits; }
};

RelayoutMap make_relayout_map(std::uint32_t elem_bits, std::uint32_t chip_io_bits,
                              std::uint32_t bus_bits);

// Forward / inverse permutation over one buffered group of beats.
std::vector<BurstBeat> relayout_group(const std::vector<BurstBeat>& beats, std::uint32_t elem_bits,
                                      std::uint32_t chip_io_bits);
std::vector<BurstBeat> inverse_relayout(const std::vector<BurstBeat>& beats,
                                        std::uint32_t elem_bits, std::uint32_t chip_io_bits);

// Ratio-2 convenience wrapper (fp16 on x8 chips).
std::pair<BurstBeat, BurstBeat> relayout_pair(const BurstBeat& a, const BurstBeat& b,
                                              std::uint32_t elem_bits, std::uint32_t chip_io_bits);

/// Where each stored bit came from, for residency checking.
struct BitOrigin {
  std::uint32_t element = 0;  // element index within the group
  std::uint16_t bit = 0;      // bit index within the element
};

/// Per-chip contents after writing one group of beats, beat k landing at
/// per-chip burst position k.
struct ChipImage {
  std::uint32_t chip_count = 0;
  std::uint32_t elem_bits = 0;
  std::vector<std::vector<BitOrigin>> chips;  // [chip][stored position]
};

// Build the image a group write produces. `relayouted` selects whether the
// buffer chip permutation ran; the stored origins always refer to the host's
// element numbering.
ChipImage image_from_group(std::uint32_t elem_bits, std::uint32_t chip_io_bits,
                           std::uint32_t bus_bits, bool relayouted);

struct ResidencyViolation {
  std::uint32_t element = 0;
  std::vector<std::uint32_t> chips_touched;
};

// Empty iff every element's bits lie within exactly one chip.
std::vector<ResidencyViolation> chip_residency_check(const ChipImage& img);

/// SPD timing values as reported to the host vs the real device behaviour.
/// reported_wl < actual_wl so the host launches write data early enough to
/// absorb the relayout cycles; reported_wr > actual_wr so follow-on commands
/// are not issued early.
struct SpoofedSpd {
  std::uint32_t reported_wl = 0;
  std::uint32_t actual_wl = 0;
  std::uint32_t reported_wr = 0;
  std::uint32_t actual_wr = 0;
};

SpoofedSpd spoofed_timing(const DdrTiming& actual, std::uint32_t relayout_cycles = 1);

// Completion cycle of one write burst (data fully in the banks), counted from
// the WR command. Baseline: WL + BL. Relayouted path: host starts the burst at
// reported_wl, the buffer chip adds relayout_cycles.
std::uint64_t write_completion_cycles(const DdrTiming& t);
std::uint64_t relayouted_write_completion_cycles(const DdrTiming& t, const SpoofedSpd& spd,
                                                 std::uint32_t relayout_cycles);

// Earliest PRE issue cycle after the WR command, host's view vs device need.
std::uint64_t precharge_after_write_cycles(const DdrTiming& t);
std::uint64_t spoofed_precharge_after_write_cycles(const DdrTiming& t, const SpoofedSpd& spd);

// Hex dump of per-chip bytes for a raw group (relayout-dump CLI).
std::string dump_chip_image_hex(const std::vector<BurstBeat>& group, std::uint32_t chip_io_bits);

}  // namespace l3sim
