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
#include "l3sim/relayout.hpp"

#include <iomanip>
#include <sstream>

namespace l3sim {

BurstBeat beat_from_u64(std::uint64_t payload, std::uint32_t bus_bits, std::uint32_t beat_index) {
  if (bus_bits > 64) throw RelayoutError("beat_from_u64 supports at most 64 bus bits");
  BurstBeat b;
  b.beat_index = beat_index;
  b.bits.resize(bus_bits);
  for (std::uint32_t i = 0; i < bus_bits; ++i) b.bits[i] = (payload >> i) & 1u;
  return b;
}

std::uint64_t beat_to_u64(const BurstBeat& beat) {
  if (beat.width() > 64) throw RelayoutError("beat_to_u64 supports at most 64 bus bits");
  std::uint64_t v = 0;
  for (std::uint32_t i = 0; i < beat.width(); ++i)
    if (beat.bits[i]) v |= (std::uint64_t(1) << i);
  return v;
}

RelayoutMap make_relayout_map(std::uint32_t elem_bits, std::uint32_t chip_io_bits,
                              std::uint32_t bus_bits) {
  if (elem_bits == 0 || chip_io_bits == 0 || bus_bits == 0)
    throw RelayoutError("relayout: widths must be > 0");
  if (bus_bits % chip_io_bits != 0)
    throw RelayoutError("relayout: bus_bits not a multiple of chip_io_bits");
  if (elem_bits < chip_io_bits) {
    // Elements narrower than one chip lane never straddle chips; the
    // permutation degenerates to the identity over a single beat.
    if (chip_io_bits % elem_bits != 0)
      throw RelayoutError("relayout: chip_io_bits not a multiple of elem_bits");
    RelayoutMap map;
    map.bus_bits = bus_bits;
    map.chip_io_bits = chip_io_bits;
    map.elem_bits = elem_bits;
    map.ratio = 1;
    map.forward.resize(bus_bits);
    map.inverse.resize(bus_bits);
    for (std::uint32_t i = 0; i < bus_bits; ++i) map.forward[i] = map.inverse[i] = i;
    return map;
  }
  if (elem_bits % chip_io_bits != 0)
    throw RelayoutError("relayout: elem_bits (" + std::to_string(elem_bits) +
                        ") is not a multiple of chip_io_bits (" + std::to_string(chip_io_bits) +
                        ")");
  const std::uint32_t ratio = elem_bits / chip_io_bits;
  if (ratio > 4) throw RelayoutError("relayout: ratios above 4 are unsupported");
  const std::uint32_t chips = bus_bits / chip_io_bits;
  if (ratio > chips) throw RelayoutError("relayout: element wider than the whole bus group");

  RelayoutMap map;
  map.bus_bits = bus_bits;
  map.chip_io_bits = chip_io_bits;
  map.elem_bits = elem_bits;
  map.ratio = ratio;
  const std::uint32_t total = ratio * bus_bits;
  map.forward.assign(total, 0);
  map.inverse.assign(total, 0);

  // One group carries `chips` elements. Element e, bit j:
  //   source: beat e / (chips/ratio), lane (e % (chips/ratio)) * ratio + j / chip_io
  //   dest:   beat j / chip_io,       lane e
  const std::uint32_t elems_per_beat = chips / ratio;
  for (std::uint32_t e = 0; e < chips; ++e) {
    for (std::uint32_t j = 0; j < elem_bits; ++j) {
      const std::uint32_t src_beat = e / elems_per_beat;
      const std::uint32_t src_lane = (e % elems_per_beat) * ratio + j / chip_io_bits;
      const std::uint32_t src = src_beat * bus_bits + src_lane * chip_io_bits + j % chip_io_bits;
      const std::uint32_t dst_beat = j / chip_io_bits;
      const std::uint32_t dst = dst_beat * bus_bits + e * chip_io_bits + j % chip_io_bits;
      map.forward[src] = dst;
      map.inverse[dst] = src;
    }
  }
  return map;
}

namespace {

std::vector<BurstBeat> apply_map(const std::vector<BurstBeat>& beats, const RelayoutMap& map,
                                 bool forward) {
  if (beats.size() != map.ratio)
    throw RelayoutError("relayout: expected " + std::to_string(map.ratio) + " beats, got " +
                        std::to_string(beats.size()));
  for (const auto& b : beats)
    if (b.width() != map.bus_bits)
      throw RelayoutError("relayout: beat width " + std::to_string(b.width()) +
                          " != bus width " + std::to_string(map.bus_bits));
  std::vector<BurstBeat> out(beats.size());
  for (std::uint32_t k = 0; k < map.ratio; ++k) {
    out[k].beat_index = beats[k].beat_index;
    out[k].bits.assign(map.bus_bits, 0);
  }
  const auto& perm = forward ? map.forward : map.inverse;
  for (std::uint32_t src = 0; src < map.group_bits(); ++src) {
    const std::uint32_t dst = perm[src];
    out[dst / map.bus_bits].bits[dst % map.bus_bits] = beats[src / map.bus_bits].bits[src % map.bus_bits];
  }
  return out;
}

}  // namespace

std::vector<BurstBeat> relayout_group(const std::vector<BurstBeat>& beats, std::uint32_t elem_bits,
                                      std::uint32_t chip_io_bits) {
  if (beats.empty()) throw RelayoutError("relayout: empty group");
  return apply_map(beats, make_relayout_map(elem_bits, chip_io_bits, beats[0].width()), true);
}

std::vector<BurstBeat> inverse_relayout(const std::vector<BurstBeat>& beats,
                                        std::uint32_t elem_bits, std::uint32_t chip_io_bits) {
  if (beats.empty()) throw RelayoutError("relayout: empty group");
  return apply_map(beats, make_relayout_map(elem_bits, chip_io_bits, beats[0].width()), false);
}

std::pair<BurstBeat, BurstBeat> relayout_pair(const BurstBeat& a, const BurstBeat& b,
                                              std::uint32_t elem_bits,
                                              std::uint32_t chip_io_bits) {
  if (a.width() != b.width()) throw RelayoutError("relayout_pair: mismatched beat widths");
  if (elem_bits != 2 * chip_io_bits)
    throw RelayoutError("relayout_pair handles ratio 2; use relayout_group otherwise");
  auto out = relayout_group({a, b}, elem_bits, chip_io_bits);
  return {out[0], out[1]};
}

ChipImage image_from_group(std::uint32_t elem_bits, std::uint32_t chip_io_bits,
                           std::uint32_t bus_bits, bool relayouted) {
  const RelayoutMap map = make_relayout_map(elem_bits, chip_io_bits, bus_bits);
  const std::uint32_t chips = bus_bits / chip_io_bits;
  const std::uint32_t elems_per_beat = bus_bits / elem_bits;

  ChipImage img;
  img.chip_count = chips;
  img.elem_bits = elem_bits;
  img.chips.assign(chips, std::vector<BitOrigin>(map.ratio * chip_io_bits));

  for (std::uint32_t src = 0; src < map.group_bits(); ++src) {
    const std::uint32_t src_beat = src / bus_bits;
    const std::uint32_t src_pos = src % bus_bits;
    BitOrigin origin;
    origin.element = src_beat * elems_per_beat + src_pos / elem_bits;
    origin.bit = static_cast<std::uint16_t>(src_pos % elem_bits);
    const std::uint32_t dst = relayouted ? map.forward[src] : src;
    const std::uint32_t dst_beat = dst / bus_bits;
    const std::uint32_t dst_pos = dst % bus_bits;
    const std::uint32_t chip = dst_pos / chip_io_bits;
    img.chips[chip][dst_beat * chip_io_bits + dst_pos % chip_io_bits] = origin;
  }
  return img;
}

std::vector<ResidencyViolation> chip_residency_check(const ChipImage& img) {
  std::vector<std::vector<std::uint32_t>> touched;  // element -> chips
  for (std::uint32_t c = 0; c < img.chip_count; ++c) {
    for (const BitOrigin& o : img.chips[c]) {
      if (o.element >= touched.size()) touched.resize(o.element + 1);
      auto& chips = touched[o.element];
      if (chips.empty() || chips.back() != c) chips.push_back(c);
    }
  }
  std::vector<ResidencyViolation> violations;
  for (std::uint32_t e = 0; e < touched.size(); ++e) {
    if (touched[e].size() > 1) violations.push_back({e, touched[e]});
  }
  return violations;
}

SpoofedSpd spoofed_timing(const DdrTiming& actual, std::uint32_t relayout_cycles) {
  if (relayout_cycles >= actual.wl)
    throw RelayoutError("spoofed_timing: relayout_cycles (" + std::to_string(relayout_cycles) +
                        ") >= WL (" + std::to_string(actual.wl) + ")");
  SpoofedSpd s;
  s.actual_wl = actual.wl;
  s.actual_wr = actual.wr;
  s.reported_wl = actual.wl - relayout_cycles;
  s.reported_wr = actual.wr + relayout_cycles;
  return s;
}

std::uint64_t write_completion_cycles(const DdrTiming& t) { return std::uint64_t(t.wl) + t.bl; }

std::uint64_t relayouted_write_completion_cycles(const DdrTiming& t, const SpoofedSpd& spd,
                                                 std::uint32_t relayout_cycles) {
  // Host launches the burst at reported_wl; the buffer chip holds the data
  // for relayout_cycles before it lands in the banks.
  return std::uint64_t(spd.reported_wl) + relayout_cycles + t.bl;
}

std::uint64_t precharge_after_write_cycles(const DdrTiming& t) {
  return std::uint64_t(t.wl) + t.bl + t.wr;
}

std::uint64_t spoofed_precharge_after_write_cycles(const DdrTiming& t, const SpoofedSpd& spd) {
  (void)t;
  return std::uint64_t(spd.reported_wl) + t.bl + spd.reported_wr;
}

std::string dump_chip_image_hex(const std::vector<BurstBeat>& group, std::uint32_t chip_io_bits) {
  if (group.empty()) return "";
  const std::uint32_t bus = group[0].width();
  const std::uint32_t chips = bus / chip_io_bits;
  std::ostringstream os;
  for (std::uint32_t c = 0; c < chips; ++c) {
    os << "chip" << std::setw(2) << std::setfill('0') << c << ":";
    for (std::uint32_t k = 0; k < group.size(); ++k) {
      std::uint64_t v = 0;
      for (std::uint32_t b = 0; b < chip_io_bits; ++b)
        if (group[k].bits[c * chip_io_bits + b]) v |= (std::uint64_t(1) << b);
      os << " " << std::hex << std::setw((chip_io_bits + 3) / 4) << std::setfill('0') << v
         << std::dec;
    }
    os << "\n";
  }
  return os.str();
}

}  // namespace l3sim
