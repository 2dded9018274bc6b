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
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>

#include "CLI11.hpp"
#include "l3sim/harness.hpp"
#include "l3sim/interconnect.hpp"
#include "l3sim/kv_mapping.hpp"
#include "l3sim/pim_engine.hpp"
#include "l3sim/relayout.hpp"

namespace {

using namespace l3sim;

Trace resolve_trace(const std::string& trace_path, const std::string& synth_preset,
                    std::size_t n, std::uint64_t seed, double poisson_rate) {
  Trace t;
  if (!trace_path.empty())
    t = load_trace(trace_path, n, seed);
  else if (!synth_preset.empty())
    t = synth_trace_preset(synth_preset, n ? n : 1000, seed);
  else
    throw TraceError("provide --trace FILE or --synth PRESET");
  if (poisson_rate > 0) assign_poisson_arrivals(t, poisson_rate, seed + 1);
  return t;
}

int cmd_run(const std::string& config_path, const std::string& trace_path,
            const std::string& synth_preset, std::size_t sample_n, const std::string& policy,
            const std::string& scheduler, std::uint64_t seed, const std::string& out_dir,
            const std::string& format, const std::string& timeline, const std::string& normalize,
            double poisson_rate, const std::string& predictor_dump) {
  const SimConfig cfg = load_config(config_path);
  const Trace trace = resolve_trace(trace_path, synth_preset, sample_n, seed, poisson_rate);

  SimOptions opt;
  opt.policy = policy_from_string(policy);
  opt.seed = seed;
  if (!timeline.empty()) opt.timeline_path = timeline;
  if (!predictor_dump.empty()) opt.predictor_dump_path = predictor_dump;

  std::vector<RunMetrics> runs;
  if (scheduler.empty()) {
    runs.push_back(baseline_run(trace, cfg, opt.policy, opt));
  } else {
    opt.scheduler = scheduler_kind_from_string(scheduler);
    runs.push_back(run_simulation(trace, cfg, opt));
  }

  const ReportFormat fmt = format == "json" ? ReportFormat::JSON : ReportFormat::CSV;
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    const std::string path =
        out_dir + "/summary." + (fmt == ReportFormat::JSON ? "json" : "csv");
    write_report(runs, fmt, path, normalize);
    std::cout << "wrote " << path << "\n";
  }
  std::cout << render_report(runs, fmt, normalize);
  return 0;
}

int cmd_sweep(const std::string& config_path, const std::string& trace_path,
              const std::string& synth_preset, std::size_t sample_n,
              const std::vector<std::uint32_t>& ranksets, const std::vector<std::string>& caps,
              const std::string& policy, std::uint64_t seed, const std::string& out_dir,
              const std::string& format) {
  const SimConfig base_cfg = load_config(config_path);
  const Trace trace = resolve_trace(trace_path, synth_preset, sample_n, seed, 0.0);
  std::vector<RunMetrics> runs;
  std::vector<Bytes> capacities;
  if (caps.empty()) capacities.push_back(base_cfg.topology.host_capacity);
  for (const auto& c : caps) capacities.push_back(Bytes(parse_quantity(c)));
  std::vector<std::uint32_t> rs = ranksets;
  if (rs.empty()) rs.push_back(base_cfg.topology.ranksets());

  for (Bytes capacity : capacities) {
    for (std::uint32_t r : rs) {
      SimConfig cfg = base_cfg;
      cfg.topology.host_capacity = capacity;
      // Factor the rankset count into dimms x ranks (prefer square-ish).
      std::uint32_t dimms = 1;
      for (std::uint32_t d = 1; d * d <= r; ++d)
        if (r % d == 0) dimms = d;
      cfg.topology.dimms_per_channel = dimms;
      cfg.topology.ranks_per_dimm = r / dimms;
      cfg.validate();
      SimOptions opt;
      opt.seed = seed;
      opt.keep_reports = false;
      RunMetrics m = baseline_run(trace, cfg, policy_from_string(policy), opt);
      m.trace += "/rs" + std::to_string(r) + "/cap" + std::to_string(capacity >> 30) + "GiB";
      runs.push_back(std::move(m));
    }
  }
  const ReportFormat fmt = format == "json" ? ReportFormat::JSON : ReportFormat::CSV;
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    const std::string path = out_dir + "/sweep." + (fmt == ReportFormat::JSON ? "json" : "csv");
    write_report(runs, fmt, path);
    std::cout << "wrote " << path << "\n";
  }
  std::cout << render_report(runs, fmt);
  return 0;
}

int cmd_relayout_dump(std::uint32_t elem_bits, std::uint32_t chip_io_bits, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const std::uint32_t bus = 64;
  const auto map = make_relayout_map(elem_bits, chip_io_bits, bus);
  std::vector<BurstBeat> group;
  for (std::uint32_t k = 0; k < map.ratio; ++k) group.push_back(beat_from_u64(rng(), bus, k));
  const auto after = relayout_group(group, elem_bits, chip_io_bits);
  std::cout << "before relayout:\n" << dump_chip_image_hex(group, chip_io_bits);
  std::cout << "after relayout:\n" << dump_chip_image_hex(after, chip_io_bits);
  const auto img = image_from_group(elem_bits, chip_io_bits, bus, true);
  std::cout << "residency violations: " << chip_residency_check(img).size() << "\n";
  return 0;
}

int cmd_placement_dump(const std::string& config_path, std::uint64_t requests,
                       std::uint64_t tokens, const std::string& out_path) {
  const SimConfig cfg = load_config(config_path);
  std::ostream* out = &std::cout;
  std::ofstream file;
  if (!out_path.empty()) {
    file.open(out_path);
    if (!file) throw TraceError("cannot write '" + out_path + "'");
    out = &file;
  }
  *out << "request,layer,head,token,rankset,channel,bank,row,col\n";
  for (std::uint64_t r = 0; r < requests; ++r)
    for (std::uint32_t layer = 0; layer < cfg.model.layers; ++layer)
      for (std::uint32_t head = 0; head < cfg.model.heads; ++head)
        for (std::uint64_t tok = 0; tok < tokens; ++tok) {
          const KSpan k = place_k_vector(tok, head, layer, r, cfg.topology, cfg.model);
          *out << r << "," << layer << "," << head << "," << tok << "," << k.base.rankset << ","
               << k.base.channel << "," << k.base.bank << "," << k.base.row << ","
               << k.base.col_offset << "\n";
        }
  return 0;
}

int cmd_pim_trace(const std::string& config_path, std::uint64_t tokens, bool score_only,
                  const std::string& out_path) {
  const SimConfig cfg = load_config(config_path);
  PimEngine engine(cfg.model, cfg.topology, cfg.timing);
  const auto cmds = engine.command_stream(tokens, !score_only);
  std::ostream* out = &std::cout;
  std::ofstream file;
  if (!out_path.empty()) {
    file.open(out_path);
    if (!file) throw TraceError("cannot write '" + out_path + "'");
    out = &file;
  }
  *out << "cycle,cmd,bank,row\n";
  for (const auto& c : cmds) {
    const char* name = c.kind == PimCommand::ACT   ? "ACT"
                       : c.kind == PimCommand::RD  ? "RD"
                       : c.kind == PimCommand::PRE ? "PRE"
                                                   : "REF";
    *out << c.cycle << "," << name << "," << c.bank << "," << c.row << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"simrun: GPU + DIMM-PIM LLM inference simulator"};
  app.require_subcommand(0, 1);
  app.fallthrough();  // global flags may follow the subcommand name

  std::string config_path, trace_path, synth_preset, policy = "l3", scheduler;
  std::string out_dir, format = "csv", timeline, normalize;
  std::size_t sample_n = 0;
  std::uint64_t seed = 7;

  app.add_option("--config", config_path, "configuration file");
  app.add_option("--trace", trace_path, "JSONL trace file");
  app.add_option("--synth", synth_preset,
                 "synthetic trace preset (openr1, dolphin, openthoughts, longbench)");
  app.add_option("--n", sample_n, "sample n requests from the trace / synthesize n requests");
  app.add_option("--policy", policy, "l3, gpu_only, hbm_pim, rank_pim, cpu_offload");
  app.add_option("--scheduler", scheduler,
                 "l3, prefill-priority, single-batch (overrides the policy default)");
  app.add_option("--seed", seed, "sampling seed");
  app.add_option("--out", out_dir, "output directory for reports");
  app.add_option("--format", format, "csv or json");
  app.add_option("--timeline", timeline, "write per-device interval timeline JSON here");
  app.add_option("--normalize", normalize, "normalize throughput against this policy's run");
  double poisson_rate = 0.0;
  std::string predictor_dump;
  app.add_option("--poisson-rate", poisson_rate,
                 "arrival rate in requests/s (default: all requests at t=0)");
  app.add_option("--predictor-dump", predictor_dump,
                 "write the predictor training windows to this CSV");

  auto* sweep = app.add_subcommand("sweep", "run a rankset/capacity grid");
  std::vector<std::uint32_t> sweep_rs;
  std::vector<std::string> sweep_caps;
  sweep->add_option("--ranksets", sweep_rs, "rankset counts, e.g. 2,4,8,16")->delimiter(',');
  sweep->add_option("--capacities", sweep_caps, "host capacities, e.g. 512GB,4TB")
      ->delimiter(',');

  auto* rdump = app.add_subcommand("relayout-dump", "print before/after chip images in hex");
  std::uint32_t elem_bits = 16, chip_io_bits = 8;
  rdump->add_option("--elem-bits", elem_bits, "element width in bits");
  rdump->add_option("--chip-io-bits", chip_io_bits, "per-chip IO width in bits");

  auto* pdump = app.add_subcommand("placement-dump", "emit K placement CSV");
  std::uint64_t dump_requests = 1, dump_tokens = 32;
  std::string dump_out;
  pdump->add_option("--requests", dump_requests, "requests to place");
  pdump->add_option("--tokens", dump_tokens, "tokens per head");
  pdump->add_option("--out-file", dump_out, "CSV path (stdout if omitted)");

  auto* ptrace = app.add_subcommand("pim-trace", "dump the DDR command stream as CSV");
  std::uint64_t trace_tokens = 64;
  bool score_only = false;
  std::string ptrace_out;
  ptrace->add_option("--tokens", trace_tokens, "tokens on the rank");
  ptrace->add_flag("--score-only", score_only, "emit only the score phase");
  ptrace->add_option("--out-file", ptrace_out, "CSV path (stdout if omitted)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*sweep)
      return cmd_sweep(config_path, trace_path, synth_preset, sample_n, sweep_rs, sweep_caps,
                       policy, seed, out_dir, format);
    if (*rdump) return cmd_relayout_dump(elem_bits, chip_io_bits, seed);
    if (*pdump) return cmd_placement_dump(config_path, dump_requests, dump_tokens, dump_out);
    if (*ptrace) return cmd_pim_trace(config_path, trace_tokens, score_only, ptrace_out);
    return cmd_run(config_path, trace_path, synth_preset, sample_n, policy, scheduler, seed,
                   out_dir, format, timeline, normalize, poisson_rate, predictor_dump);
  } catch (const AuditFailure& e) {
    std::cerr << "audit failure: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
