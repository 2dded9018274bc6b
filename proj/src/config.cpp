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
#include "l3sim/config.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace l3sim {

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

[[noreturn]] void fail(const std::string& origin, int line, const std::string& msg) {
  std::ostringstream os;
  os << origin << ":" << line << ": " << msg;
  throw ConfigError(os.str());
}

}  // namespace

void LlmModel::validate() const {
  if (layers < 1 || heads < 1 || embedding < 1)
    throw ConfigError("model: layers, heads and embedding must be >= 1");
  if (precision_bytes != 1 && precision_bytes != 2 && precision_bytes != 4)
    throw ConfigError("model: precision_bytes must be one of {1, 2, 4}");
  if (ffn_expansion < 1) throw ConfigError("model: ffn_expansion must be >= 1");
  if (embedding % heads != 0 || head_dim() * heads != embedding)
    throw ConfigError("model: D_h x N_h != D_e (embedding=" + std::to_string(embedding) +
                      " not divisible into heads=" + std::to_string(heads) + ")");
}

Bytes kv_bytes_per_token(const LlmModel& m) {
  return Bytes(2) * m.layers * m.embedding * m.precision_bytes;
}

Bytes weight_bytes(const LlmModel& m) {
  const Bytes e2 = Bytes(m.embedding) * m.embedding;
  const Bytes per_layer = (4 + 2 * Bytes(m.ffn_expansion)) * e2;  // QKV+proj = 4E^2, FFN = 2*ffn*E^2
  return per_layer * m.layers * m.precision_bytes;
}

double fc_flops_per_token(const LlmModel& m) {
  const double e2 = double(m.embedding) * double(m.embedding);
  return 2.0 * (4.0 + 2.0 * m.ffn_expansion) * e2 * m.layers;
}

void HwTopology::validate() const {
  if (channels < 1 || dimms_per_channel < 1 || ranks_per_dimm < 1 || chips_per_rank < 1 ||
      bank_groups < 1 || banks_per_group < 1)
    throw ConfigError("topology: all geometry counts must be >= 1");
  if (chips_per_rank * chip_io_bits != bus_bits)
    throw ConfigError("topology: chips_per_rank x chip_io_bits != bus_bits (" +
                      std::to_string(chips_per_rank) + " x " + std::to_string(chip_io_bits) +
                      " != " + std::to_string(bus_bits) + ")");
  if (v_spread < 1 || (v_spread & (v_spread - 1)) != 0 || v_spread > logic_banks())
    throw ConfigError("topology: v_spread must be a power of two <= banks per rank");
  if (gpu_count < 1) throw ConfigError("topology: gpu_count must be >= 1");
  if (gpu_tflops_fp16 <= 0 || gpu_hbm_bw <= 0 || hbm_pim_bw <= 0 || pcie_bw <= 0 || nvlink_bw <= 0)
    throw ConfigError("topology: all bandwidths must be > 0");
  if (host_capacity == 0 || gpu_capacity == 0)
    throw ConfigError("topology: capacities must be > 0");
  if (gpu_efficiency <= 0.0 || gpu_efficiency > 1.0)
    throw ConfigError("topology: gpu_efficiency must be in (0, 1]");
  if (row_bytes_per_chip == 0 || rows_per_bank == 0)
    throw ConfigError("topology: row geometry must be > 0");
}

void DdrTiming::validate() const {
  if (tck_ns <= 0) throw ConfigError("timing: tck_ns must be > 0");
  for (auto [v, n] : {std::pair<std::uint32_t, const char*>{bl, "bl"},
                      {ccd, "ccd"},
                      {rrd_s, "rrd_s"},
                      {rrd_l, "rrd_l"},
                      {rcd, "rcd"},
                      {ras, "ras"},
                      {rp, "rp"},
                      {rc, "rc"},
                      {cl, "cl"},
                      {wl, "wl"},
                      {cdlr_s, "cdlr_s"},
                      {cdlr_l, "cdlr_l"},
                      {wr, "wr"},
                      {ccdl, "ccdl"},
                      {rtp, "rtp"}}) {
    if (v == 0) throw ConfigError(std::string("timing: ") + n + " must be > 0");
  }
  if (rc < ras + rp)
    throw ConfigError("timing: RC >= RAS + RP violated (" + std::to_string(rc) + " < " +
                      std::to_string(ras) + " + " + std::to_string(rp) + ")");
  if (trefi_ns <= 0 || trfc_ns <= 0) throw ConfigError("timing: refresh intervals must be > 0");
}

void SchedulerParams::validate() const {
  if (chunk_multiple == 0 || default_chunk == 0 || default_chunk % chunk_multiple != 0)
    throw ConfigError("scheduler: default_chunk must be a positive multiple of chunk_multiple");
  if (window_size == 0 || retrain_stride == 0 || retrain_stride > window_size)
    throw ConfigError("scheduler: invalid training window");
  if (forest_trees == 0 || forest_depth == 0)
    throw ConfigError("scheduler: forest parameters must be > 0");
}

void BaselineParams::validate() const {
  if (rank_pim_bw_mult <= 0) throw ConfigError("baseline: rank_pim_bw_mult must be > 0");
}

void SimConfig::validate() const {
  model.validate();
  topology.validate();
  timing.validate();
  scheduler.validate();
  baseline.validate();
}

double pim_aggregate_bw(const HwTopology& t, const DdrTiming& d) {
  const double units =
      double(t.channels) * t.ranks_per_channel() * t.chips_per_rank * t.banks_per_chip();
  return units * 8.0 / (double(d.ccdl) * d.tck_ns) * 1e9;
}

double cpu_aggregate_bw(const HwTopology& t, const DdrTiming& d) {
  return double(t.channels) * (t.bus_bits / 8.0) * 2.0 / d.tck_ns * 1e9;
}

double rank_pim_bw(const HwTopology& t, const DdrTiming& d, const BaselineParams& b) {
  return b.rank_pim_bw_mult * cpu_aggregate_bw(t, d);
}

double parse_quantity(const std::string& text) {
  std::string s = trim(text);
  if (s.empty()) throw ConfigError("empty quantity");
  // Strip a trailing "/s" if present; bandwidths and sizes share units.
  if (s.size() > 2 && s.compare(s.size() - 2, 2, "/s") == 0) s = s.substr(0, s.size() - 2);
  size_t pos = 0;
  double value = 0;
  try {
    value = std::stod(s, &pos);
  } catch (const std::exception&) {
    throw ConfigError("unparseable quantity '" + text + "'");
  }
  std::string unit = trim(s.substr(pos));
  for (auto& c : unit) c = char(std::toupper(static_cast<unsigned char>(c)));
  double mult = 1.0;
  if (unit.empty() || unit == "B")
    mult = 1.0;
  else if (unit == "KB")
    mult = 1e3;
  else if (unit == "MB")
    mult = 1e6;
  else if (unit == "GB")
    mult = 1e9;
  else if (unit == "TB")
    mult = 1e12;
  else if (unit == "KIB")
    mult = 1024.0;
  else if (unit == "MIB")
    mult = 1024.0 * 1024;
  else if (unit == "GIB")
    mult = 1024.0 * 1024 * 1024;
  else if (unit == "TIB")
    mult = 1024.0 * 1024 * 1024 * 1024;
  else
    throw ConfigError("unknown unit '" + unit + "' in '" + text + "'");
  return value * mult;
}

namespace {

struct Setter {
  std::function<void(const std::string&)> set;
};

using KeyMap = std::map<std::string, Setter>;

std::uint32_t to_u32(const std::string& v) {
  const double q = parse_quantity(v);
  if (q < 0 || q > 4294967295.0 || std::floor(q) != q)
    throw ConfigError("expected integer, got '" + v + "'");
  return static_cast<std::uint32_t>(q);
}

Bytes to_bytes(const std::string& v) {
  const double q = parse_quantity(v);
  if (q < 0) throw ConfigError("expected nonnegative size, got '" + v + "'");
  return static_cast<Bytes>(q);
}

bool to_bool(const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("expected bool, got '" + v + "'");
}

KeyMap model_keys(LlmModel& m) {
  return {
      {"name", {[&m](const std::string& v) { m.name = v; }}},
      {"layers", {[&m](const std::string& v) { m.layers = to_u32(v); }}},
      {"heads", {[&m](const std::string& v) { m.heads = to_u32(v); }}},
      {"embedding", {[&m](const std::string& v) { m.embedding = to_u32(v); }}},
      {"precision_bytes", {[&m](const std::string& v) { m.precision_bytes = to_u32(v); }}},
      {"ffn_expansion", {[&m](const std::string& v) { m.ffn_expansion = to_u32(v); }}},
  };
}

KeyMap topology_keys(HwTopology& t) {
  return {
      {"channels", {[&t](const std::string& v) { t.channels = to_u32(v); }}},
      {"dimms_per_channel", {[&t](const std::string& v) { t.dimms_per_channel = to_u32(v); }}},
      {"ranks_per_dimm", {[&t](const std::string& v) { t.ranks_per_dimm = to_u32(v); }}},
      {"chips_per_rank", {[&t](const std::string& v) { t.chips_per_rank = to_u32(v); }}},
      {"bank_groups", {[&t](const std::string& v) { t.bank_groups = to_u32(v); }}},
      {"banks_per_group", {[&t](const std::string& v) { t.banks_per_group = to_u32(v); }}},
      {"chip_io_bits", {[&t](const std::string& v) { t.chip_io_bits = to_u32(v); }}},
      {"bus_bits", {[&t](const std::string& v) { t.bus_bits = to_u32(v); }}},
      {"row_bytes_per_chip", {[&t](const std::string& v) { t.row_bytes_per_chip = to_u32(v); }}},
      {"rows_per_bank", {[&t](const std::string& v) { t.rows_per_bank = to_u32(v); }}},
      {"v_spread", {[&t](const std::string& v) { t.v_spread = to_u32(v); }}},
      {"max_tokens_per_head", {[&t](const std::string& v) { t.max_tokens_per_head = to_u32(v); }}},
      {"gpu_count", {[&t](const std::string& v) { t.gpu_count = to_u32(v); }}},
      {"gpu_tflops_fp16", {[&t](const std::string& v) { t.gpu_tflops_fp16 = parse_quantity(v); }}},
      {"gpu_hbm_bw", {[&t](const std::string& v) { t.gpu_hbm_bw = parse_quantity(v); }}},
      {"hbm_pim_bw", {[&t](const std::string& v) { t.hbm_pim_bw = parse_quantity(v); }}},
      {"gpu_efficiency", {[&t](const std::string& v) { t.gpu_efficiency = parse_quantity(v); }}},
      {"gpu_launch_overhead_ns",
       {[&t](const std::string& v) { t.gpu_launch_overhead_ns = parse_quantity(v); }}},
      {"nvlink_bw", {[&t](const std::string& v) { t.nvlink_bw = parse_quantity(v); }}},
      {"pcie_bw", {[&t](const std::string& v) { t.pcie_bw = parse_quantity(v); }}},
      {"pcie_fixed_ns", {[&t](const std::string& v) { t.pcie_fixed_ns = parse_quantity(v); }}},
      {"host_capacity", {[&t](const std::string& v) { t.host_capacity = to_bytes(v); }}},
      {"gpu_capacity", {[&t](const std::string& v) { t.gpu_capacity = to_bytes(v); }}},
  };
}

KeyMap timing_keys(DdrTiming& d) {
  return {
      {"tck_ns", {[&d](const std::string& v) { d.tck_ns = parse_quantity(v); }}},
      {"bl", {[&d](const std::string& v) { d.bl = to_u32(v); }}},
      {"ccd", {[&d](const std::string& v) { d.ccd = to_u32(v); }}},
      {"rrd_s", {[&d](const std::string& v) { d.rrd_s = to_u32(v); }}},
      {"rrd_l", {[&d](const std::string& v) { d.rrd_l = to_u32(v); }}},
      {"rcd", {[&d](const std::string& v) { d.rcd = to_u32(v); }}},
      {"ras", {[&d](const std::string& v) { d.ras = to_u32(v); }}},
      {"rp", {[&d](const std::string& v) { d.rp = to_u32(v); }}},
      {"rc", {[&d](const std::string& v) { d.rc = to_u32(v); }}},
      {"cl", {[&d](const std::string& v) { d.cl = to_u32(v); }}},
      {"wl", {[&d](const std::string& v) { d.wl = to_u32(v); }}},
      {"cdlr_s", {[&d](const std::string& v) { d.cdlr_s = to_u32(v); }}},
      {"cdlr_l", {[&d](const std::string& v) { d.cdlr_l = to_u32(v); }}},
      {"wr", {[&d](const std::string& v) { d.wr = to_u32(v); }}},
      {"ccdl", {[&d](const std::string& v) { d.ccdl = to_u32(v); }}},
      {"rtp", {[&d](const std::string& v) { d.rtp = to_u32(v); }}},
      {"trefi_ns", {[&d](const std::string& v) { d.trefi_ns = parse_quantity(v); }}},
      {"trfc_ns", {[&d](const std::string& v) { d.trfc_ns = parse_quantity(v); }}},
  };
}

KeyMap scheduler_keys(SchedulerParams& s) {
  return {
      {"chunk_multiple", {[&s](const std::string& v) { s.chunk_multiple = to_u32(v); }}},
      {"default_chunk", {[&s](const std::string& v) { s.default_chunk = to_u32(v); }}},
      {"window_size", {[&s](const std::string& v) { s.window_size = to_u32(v); }}},
      {"retrain_stride", {[&s](const std::string& v) { s.retrain_stride = to_u32(v); }}},
      {"bootstrap_min", {[&s](const std::string& v) { s.bootstrap_min = to_u32(v); }}},
      {"forest_trees", {[&s](const std::string& v) { s.forest_trees = to_u32(v); }}},
      {"forest_depth", {[&s](const std::string& v) { s.forest_depth = to_u32(v); }}},
      {"oracle_predictors", {[&s](const std::string& v) { s.oracle_predictors = to_bool(v); }}},
  };
}

KeyMap baseline_keys(BaselineParams& b) {
  return {
      {"rank_pim_bw_mult", {[&b](const std::string& v) { b.rank_pim_bw_mult = parse_quantity(v); }}},
  };
}

}  // namespace

SimConfig parse_config(std::istream& in, const std::string& origin) {
  SimConfig cfg;
  std::map<std::string, KeyMap> stanzas;
  stanzas["model"] = model_keys(cfg.model);
  stanzas["topology"] = topology_keys(cfg.topology);
  stanzas["timing"] = timing_keys(cfg.timing);
  stanzas["scheduler"] = scheduler_keys(cfg.scheduler);
  stanzas["baseline"] = baseline_keys(cfg.baseline);

  std::string line, stanza;
  bool saw_version = false;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') fail(origin, lineno, "malformed stanza header '" + line + "'");
      if (!saw_version) fail(origin, lineno, "missing 'version = 1' header before first stanza");
      stanza = trim(line.substr(1, line.size() - 2));
      if (stanzas.find(stanza) == stanzas.end())
        fail(origin, lineno, "unknown stanza [" + stanza + "]");
      continue;
    }
    size_t eq = line.find('=');
    if (eq == std::string::npos) fail(origin, lineno, "expected 'key = value', got '" + line + "'");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (!value.empty() && value.front() == '"' && value.back() == '"' && value.size() >= 2)
      value = value.substr(1, value.size() - 2);
    if (stanza.empty()) {
      if (key == "version") {
        if (value != "1") fail(origin, lineno, "unsupported config version '" + value + "'");
        saw_version = true;
        continue;
      }
      fail(origin, lineno, "key '" + key + "' outside any stanza (expected 'version' header)");
    }
    auto& keys = stanzas[stanza];
    auto it = keys.find(key);
    if (it == keys.end()) fail(origin, lineno, "unknown key '" + key + "' in stanza [" + stanza + "]");
    try {
      it->second.set(value);
    } catch (const ConfigError& e) {
      fail(origin, lineno, std::string(e.what()));
    }
  }
  if (!saw_version) throw ConfigError(origin + ": missing 'version = 1' header");
  cfg.validate();
  return cfg;
}

SimConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  return parse_config(in, path);
}

void save_config(const SimConfig& cfg, std::ostream& out) {
  out << "version = 1\n\n";
  out << "[model]\n";
  out << "name = \"" << cfg.model.name << "\"\n";
  out << "layers = " << cfg.model.layers << "\n";
  out << "heads = " << cfg.model.heads << "\n";
  out << "embedding = " << cfg.model.embedding << "\n";
  out << "precision_bytes = " << cfg.model.precision_bytes << "\n";
  out << "ffn_expansion = " << cfg.model.ffn_expansion << "\n\n";

  const HwTopology& t = cfg.topology;
  out << "[topology]\n";
  out << "channels = " << t.channels << "\n";
  out << "dimms_per_channel = " << t.dimms_per_channel << "\n";
  out << "ranks_per_dimm = " << t.ranks_per_dimm << "\n";
  out << "chips_per_rank = " << t.chips_per_rank << "\n";
  out << "bank_groups = " << t.bank_groups << "\n";
  out << "banks_per_group = " << t.banks_per_group << "\n";
  out << "chip_io_bits = " << t.chip_io_bits << "\n";
  out << "bus_bits = " << t.bus_bits << "\n";
  out << "row_bytes_per_chip = " << t.row_bytes_per_chip << "\n";
  out << "rows_per_bank = " << t.rows_per_bank << "\n";
  out << "v_spread = " << t.v_spread << "\n";
  out << "max_tokens_per_head = " << t.max_tokens_per_head << "\n";
  out << "gpu_count = " << t.gpu_count << "\n";
  out << "gpu_tflops_fp16 = " << t.gpu_tflops_fp16 << "\n";
  out << "gpu_hbm_bw = " << t.gpu_hbm_bw << "\n";
  out << "hbm_pim_bw = " << t.hbm_pim_bw << "\n";
  out << "gpu_efficiency = " << t.gpu_efficiency << "\n";
  out << "gpu_launch_overhead_ns = " << t.gpu_launch_overhead_ns << "\n";
  out << "nvlink_bw = " << t.nvlink_bw << "\n";
  out << "pcie_bw = " << t.pcie_bw << "\n";
  out << "pcie_fixed_ns = " << t.pcie_fixed_ns << "\n";
  out << "host_capacity = " << t.host_capacity << "\n";
  out << "gpu_capacity = " << t.gpu_capacity << "\n\n";

  const DdrTiming& d = cfg.timing;
  out << "[timing]\n";
  out << "tck_ns = " << d.tck_ns << "\n";
  out << "bl = " << d.bl << "\n";
  out << "ccd = " << d.ccd << "\n";
  out << "rrd_s = " << d.rrd_s << "\n";
  out << "rrd_l = " << d.rrd_l << "\n";
  out << "rcd = " << d.rcd << "\n";
  out << "ras = " << d.ras << "\n";
  out << "rp = " << d.rp << "\n";
  out << "rc = " << d.rc << "\n";
  out << "cl = " << d.cl << "\n";
  out << "wl = " << d.wl << "\n";
  out << "cdlr_s = " << d.cdlr_s << "\n";
  out << "cdlr_l = " << d.cdlr_l << "\n";
  out << "wr = " << d.wr << "\n";
  out << "ccdl = " << d.ccdl << "\n";
  out << "rtp = " << d.rtp << "\n";
  out << "trefi_ns = " << d.trefi_ns << "\n";
  out << "trfc_ns = " << d.trfc_ns << "\n\n";

  const SchedulerParams& s = cfg.scheduler;
  out << "[scheduler]\n";
  out << "chunk_multiple = " << s.chunk_multiple << "\n";
  out << "default_chunk = " << s.default_chunk << "\n";
  out << "window_size = " << s.window_size << "\n";
  out << "retrain_stride = " << s.retrain_stride << "\n";
  out << "bootstrap_min = " << s.bootstrap_min << "\n";
  out << "forest_trees = " << s.forest_trees << "\n";
  out << "forest_depth = " << s.forest_depth << "\n";
  out << "oracle_predictors = " << (s.oracle_predictors ? "true" : "false") << "\n\n";

  out << "[baseline]\n";
  out << "rank_pim_bw_mult = " << cfg.baseline.rank_pim_bw_mult << "\n";
}

std::string config_to_string(const SimConfig& cfg) {
  std::ostringstream os;
  os.precision(17);
  save_config(cfg, os);
  return os.str();
}

}  // namespace l3sim
