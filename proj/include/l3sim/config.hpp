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
#include <stdexcept>
#include <string>

namespace l3sim {

using Bytes = std::uint64_t;

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Transformer shape constants. head_dim is derived (embedding / heads).
struct LlmModel {
  std::string name = "unnamed";
  std::uint32_t layers = 0;           // decoder layers
  std::uint32_t heads = 0;            // attention heads
  std::uint32_t embedding = 0;        // model width
  std::uint32_t precision_bytes = 2;  // bytes per element (fp16 = 2)
  std::uint32_t ffn_expansion = 4;

  std::uint32_t head_dim() const { return heads ? embedding / heads : 0; }
  void validate() const;
};

// KV footprint per generated token, all layers: 2 * layers * embedding * precision.
Bytes kv_bytes_per_token(const LlmModel& m);

// Dense weight bytes (QKV-gen 3E^2 + proj E^2 + FFN 2*ffn*E^2 per layer).
Bytes weight_bytes(const LlmModel& m);

// FC FLOPs per token per full forward pass (2 flops per weight element).
double fc_flops_per_token(const LlmModel& m);

/// Host memory geometry plus the GPU/PCIe envelope of the simulated node.
struct HwTopology {
  // Host DIMM geometry.
  std::uint32_t channels = 16;
  std::uint32_t dimms_per_channel = 2;
  std::uint32_t ranks_per_dimm = 2;
  std::uint32_t chips_per_rank = 8;
  std::uint32_t bank_groups = 4;
  std::uint32_t banks_per_group = 4;
  std::uint32_t chip_io_bits = 8;
  std::uint32_t bus_bits = 64;
  std::uint32_t row_bytes_per_chip = 1024;
  std::uint32_t rows_per_bank = 65536;
  std::uint32_t v_spread = 4;  // banks sharing one V vector, power of two
  std::uint32_t max_tokens_per_head = 131072;

  // GPU side.
  std::uint32_t gpu_count = 8;
  double gpu_tflops_fp16 = 156.0;  // aggregate; the headline DGX figure, not datasheet
  double gpu_hbm_bw = 16.3e12;     // bytes/s aggregate
  double hbm_pim_bw = 260.8e12;    // bytes/s, HBM-PIM baseline
  double gpu_efficiency = 0.6;
  double gpu_launch_overhead_ns = 5000.0;
  double nvlink_bw = 600e9;  // bytes/s, tensor-parallel all-reduce path

  // Interconnect.
  double pcie_bw = 32e9;  // bytes/s per direction
  double pcie_fixed_ns = 5000.0;

  // Capacities.
  Bytes host_capacity = Bytes(2) << 40;    // 2 TiB
  Bytes gpu_capacity = Bytes(640) << 30;   // 640 GiB

  std::uint32_t ranksets() const { return dimms_per_channel * ranks_per_dimm; }
  std::uint32_t ranks_per_channel() const { return ranksets(); }
  std::uint32_t banks_per_chip() const { return bank_groups * banks_per_group; }
  std::uint32_t logic_banks() const { return banks_per_chip(); }
  std::uint32_t total_ranks() const { return channels * ranks_per_channel(); }
  void validate() const;
};

/// DDR timing set. Cycle-denominated fields are in tCK units.
/// rrd / cdlr carry the same-bank-group and cross-bank-group variants
/// (the "4/8" and "4/12" pairs); the PIM engine uses the long variants
/// for its broadcast command streams.
struct DdrTiming {
  double tck_ns = 0.625;  // DDR4-3200
  std::uint32_t bl = 4;
  std::uint32_t ccd = 4;
  std::uint32_t rrd_s = 4;
  std::uint32_t rrd_l = 8;
  std::uint32_t rcd = 22;
  std::uint32_t ras = 52;
  std::uint32_t rp = 22;
  std::uint32_t rc = 74;
  std::uint32_t cl = 22;
  std::uint32_t wl = 16;
  std::uint32_t cdlr_s = 4;
  std::uint32_t cdlr_l = 12;
  std::uint32_t wr = 24;
  std::uint32_t ccdl = 8;
  std::uint32_t rtp = 12;
  double trefi_ns = 7800.0;
  double trfc_ns = 350.0;

  double ns(std::uint64_t cycles) const { return static_cast<double>(cycles) * tck_ns; }
  void validate() const;
};

struct SchedulerParams {
  std::uint32_t chunk_multiple = 16;
  std::uint32_t default_chunk = 512;   // bootstrap chunk before predictors train
  std::uint32_t window_size = 512;     // predictor training window
  std::uint32_t retrain_stride = 128;
  std::uint32_t bootstrap_min = 8;
  std::uint32_t forest_trees = 32;
  std::uint32_t forest_depth = 8;
  bool oracle_predictors = false;  // predict via the engines themselves
  void validate() const;
};

struct BaselineParams {
  double rank_pim_bw_mult = 4.0;  // rank-level PIM vs host CPU bandwidth
  void validate() const;
};

struct SimConfig {
  LlmModel model;
  HwTopology topology;
  DdrTiming timing;
  SchedulerParams scheduler;
  BaselineParams baseline;
  void validate() const;
};

// Config files are stanza-structured text ([model] / [topology] / [timing] /
// [scheduler] / [baseline]) with a mandatory `version = 1` header line.
// Unknown keys and stanzas are errors. Bandwidths and capacities accept unit
// suffixes ("16.3TB/s", "2TB", "512GB").
SimConfig load_config(const std::string& path);
SimConfig parse_config(std::istream& in, const std::string& origin);
void save_config(const SimConfig& cfg, std::ostream& out);
std::string config_to_string(const SimConfig& cfg);

// Aggregate all-bank PIM bandwidth:
//   channels * ranks_per_channel * chips_per_rank * banks_per_chip * 8B / (CCDL * tCK)
double pim_aggregate_bw(const HwTopology& t, const DdrTiming& d);

// Aggregate external channel bandwidth: channels * bus_bytes * 2 / tCK.
double cpu_aggregate_bw(const HwTopology& t, const DdrTiming& d);

// Rank-level PIM bandwidth used by the rank_pim baseline.
double rank_pim_bw(const HwTopology& t, const DdrTiming& d, const BaselineParams& b);

// "16.3TB/s" / "512GB" / "4096" -> bytes (per second). Throws ConfigError.
double parse_quantity(const std::string& text);

}  // namespace l3sim
