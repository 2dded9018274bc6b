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
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "l3sim/config.hpp"
#include "l3sim/gpu_engine.hpp"
#include "l3sim/harness.hpp"
#include "l3sim/interconnect.hpp"
#include "l3sim/kv_mapping.hpp"
#include "l3sim/pim_engine.hpp"
#include "l3sim/predictor.hpp"
#include "l3sim/relayout.hpp"
#include "l3sim/scheduler.hpp"

namespace py = pybind11;
using namespace l3sim;

namespace {

SimConfig config_from_text(const std::string& text) {
  std::istringstream in(text);
  return parse_config(in, "<string>");
}

}  // namespace

PYBIND11_MODULE(l3sim, m) {
  m.doc() = "Trace-driven simulator of LLM inference split across a GPU cluster "
            "and PIM-enhanced DIMM host memory";

  py::class_<LlmModel>(m, "LlmModel")
      .def(py::init<>())
      .def_readwrite("name", &LlmModel::name)
      .def_readwrite("layers", &LlmModel::layers)
      .def_readwrite("heads", &LlmModel::heads)
      .def_readwrite("embedding", &LlmModel::embedding)
      .def_readwrite("precision_bytes", &LlmModel::precision_bytes)
      .def_readwrite("ffn_expansion", &LlmModel::ffn_expansion)
      .def_property_readonly("head_dim", &LlmModel::head_dim)
      .def("validate", &LlmModel::validate);

  py::class_<HwTopology>(m, "HwTopology")
      .def(py::init<>())
      .def_readwrite("channels", &HwTopology::channels)
      .def_readwrite("dimms_per_channel", &HwTopology::dimms_per_channel)
      .def_readwrite("ranks_per_dimm", &HwTopology::ranks_per_dimm)
      .def_readwrite("chips_per_rank", &HwTopology::chips_per_rank)
      .def_readwrite("bank_groups", &HwTopology::bank_groups)
      .def_readwrite("banks_per_group", &HwTopology::banks_per_group)
      .def_readwrite("chip_io_bits", &HwTopology::chip_io_bits)
      .def_readwrite("bus_bits", &HwTopology::bus_bits)
      .def_readwrite("v_spread", &HwTopology::v_spread)
      .def_readwrite("gpu_count", &HwTopology::gpu_count)
      .def_readwrite("gpu_tflops_fp16", &HwTopology::gpu_tflops_fp16)
      .def_readwrite("gpu_hbm_bw", &HwTopology::gpu_hbm_bw)
      .def_readwrite("hbm_pim_bw", &HwTopology::hbm_pim_bw)
      .def_readwrite("pcie_bw", &HwTopology::pcie_bw)
      .def_readwrite("host_capacity", &HwTopology::host_capacity)
      .def_readwrite("gpu_capacity", &HwTopology::gpu_capacity)
      .def_property_readonly("ranksets", &HwTopology::ranksets)
      .def_property_readonly("logic_banks", &HwTopology::logic_banks)
      .def("validate", &HwTopology::validate);

  py::class_<DdrTiming>(m, "DdrTiming")
      .def(py::init<>())
      .def_readwrite("tck_ns", &DdrTiming::tck_ns)
      .def_readwrite("bl", &DdrTiming::bl)
      .def_readwrite("rcd", &DdrTiming::rcd)
      .def_readwrite("ras", &DdrTiming::ras)
      .def_readwrite("rp", &DdrTiming::rp)
      .def_readwrite("rc", &DdrTiming::rc)
      .def_readwrite("wl", &DdrTiming::wl)
      .def_readwrite("wr", &DdrTiming::wr)
      .def_readwrite("ccdl", &DdrTiming::ccdl)
      .def_readwrite("rtp", &DdrTiming::rtp)
      .def_readwrite("trefi_ns", &DdrTiming::trefi_ns)
      .def_readwrite("trfc_ns", &DdrTiming::trfc_ns);

  py::class_<SchedulerParams>(m, "SchedulerParams")
      .def(py::init<>())
      .def_readwrite("chunk_multiple", &SchedulerParams::chunk_multiple)
      .def_readwrite("default_chunk", &SchedulerParams::default_chunk)
      .def_readwrite("oracle_predictors", &SchedulerParams::oracle_predictors);

  py::class_<SimConfig>(m, "SimConfig")
      .def(py::init<>())
      .def_readwrite("model", &SimConfig::model)
      .def_readwrite("topology", &SimConfig::topology)
      .def_readwrite("timing", &SimConfig::timing)
      .def_readwrite("scheduler", &SimConfig::scheduler)
      .def("validate", &SimConfig::validate)
      .def("to_text", &config_to_string);

  m.def("load_config", &load_config, py::arg("path"));
  m.def("config_from_text", &config_from_text, py::arg("text"));
  m.def("kv_bytes_per_token", &kv_bytes_per_token);
  m.def("weight_bytes", &weight_bytes);
  m.def("pim_aggregate_bw", &pim_aggregate_bw);
  m.def("cpu_aggregate_bw", &cpu_aggregate_bw);
  m.def("parse_quantity", &parse_quantity);

  // Relayout.
  m.def(
      "relayout_group_u64",
      [](const std::vector<std::uint64_t>& beats, std::uint32_t elem_bits,
         std::uint32_t chip_io_bits) {
        std::vector<BurstBeat> group;
        for (std::size_t k = 0; k < beats.size(); ++k)
          group.push_back(beat_from_u64(beats[k], 64, std::uint32_t(k)));
        std::vector<std::uint64_t> out;
        for (const auto& b : relayout_group(group, elem_bits, chip_io_bits))
          out.push_back(beat_to_u64(b));
        return out;
      },
      py::arg("beats"), py::arg("elem_bits"), py::arg("chip_io_bits"));
  m.def(
      "inverse_relayout_u64",
      [](const std::vector<std::uint64_t>& beats, std::uint32_t elem_bits,
         std::uint32_t chip_io_bits) {
        std::vector<BurstBeat> group;
        for (std::size_t k = 0; k < beats.size(); ++k)
          group.push_back(beat_from_u64(beats[k], 64, std::uint32_t(k)));
        std::vector<std::uint64_t> out;
        for (const auto& b : inverse_relayout(group, elem_bits, chip_io_bits))
          out.push_back(beat_to_u64(b));
        return out;
      },
      py::arg("beats"), py::arg("elem_bits"), py::arg("chip_io_bits"));
  m.def(
      "residency_violations",
      [](std::uint32_t elem_bits, std::uint32_t chip_io_bits, std::uint32_t bus_bits,
         bool relayouted) {
        return chip_residency_check(image_from_group(elem_bits, chip_io_bits, bus_bits, relayouted))
            .size();
      },
      py::arg("elem_bits"), py::arg("chip_io_bits"), py::arg("bus_bits") = 64,
      py::arg("relayouted") = true);

  // KV mapping.
  m.def("rankset_for_layer", &rankset_for_layer);
  m.def("channel_for_head", &channel_for_head);
  m.def(
      "place_k_vector",
      [](std::uint64_t token, std::uint32_t head, std::uint32_t layer, std::uint64_t request,
         const HwTopology& topo, const LlmModel& model) {
        const KSpan s = place_k_vector(token, head, layer, request, topo, model);
        py::dict d;
        d["rankset"] = s.base.rankset;
        d["channel"] = s.base.channel;
        d["bank"] = s.base.bank;
        d["row"] = s.base.row;
        d["col_offset"] = s.base.col_offset;
        d["bytes_per_chip"] = s.bytes_per_chip;
        return d;
      },
      py::arg("token"), py::arg("head"), py::arg("layer"), py::arg("request"), py::arg("topology"),
      py::arg("model"));

  // PIM engine.
  py::class_<PimKernelResult>(m, "PimKernelResult")
      .def_readonly("latency_ns", &PimKernelResult::latency_ns)
      .def_readonly("acts", &PimKernelResult::acts)
      .def_readonly("reads", &PimKernelResult::reads)
      .def_readonly("bubble_ns", &PimKernelResult::bubble_ns);

  py::enum_<AccumMode>(m, "AccumMode")
      .value("FP16", AccumMode::FP16)
      .value("FP64", AccumMode::FP64);

  py::class_<PimEngine>(m, "PimEngine")
      .def(py::init<const LlmModel&, const HwTopology&, const DdrTiming&>(), py::arg("model"),
           py::arg("topology"), py::arg("timing"))
      .def("score_phase", &PimEngine::score_phase)
      .def("context_phase", &PimEngine::context_phase)
      .def("fused_head", &PimEngine::fused_head)
      .def("buffer_token_capacity", &PimEngine::buffer_token_capacity)
      .def(
          "attend",
          [](const PimEngine& e, const std::vector<double>& q, const std::vector<double>& k,
             const std::vector<double>& v, std::uint64_t tokens, AccumMode mode) {
            return e.attend(q, k, v, tokens, mode);
          },
          py::arg("q"), py::arg("k"), py::arg("v"), py::arg("tokens"),
          py::arg("mode") = AccumMode::FP16);

  m.def(
      "softmax_chunks",
      [](const std::vector<double>& scores, std::uint32_t chunk, const DdrTiming& timing) {
        return softmax_chunks(scores, chunk, timing);
      },
      py::arg("scores"), py::arg("chunk"), py::arg("timing") = DdrTiming());
  m.def(
      "decode_mha",
      [](const std::vector<std::pair<std::uint64_t, std::uint64_t>>& batch, const LlmModel& model,
         const HwTopology& topo, const DdrTiming& timing) {
        return decode_mha(batch, model, topo, timing);
      },
      py::arg("batch"), py::arg("model"), py::arg("topology"), py::arg("timing") = DdrTiming());

  // GPU engine.
  py::class_<GpuOpCost>(m, "GpuOpCost")
      .def_readonly("flops", &GpuOpCost::flops)
      .def_readonly("bytes", &GpuOpCost::bytes)
      .def_readonly("latency_ns", &GpuOpCost::latency_ns)
      .def_property_readonly(
          "bound", [](const GpuOpCost& c) { return c.bound == GpuOpCost::COMPUTE ? "compute" : "memory"; });

  py::class_<GpuEngine>(m, "GpuEngine")
      .def(py::init<const LlmModel&, const HwTopology&>(), py::arg("model"), py::arg("topology"))
      .def(
          "prefill_mha",
          [](const GpuEngine& g, const std::vector<std::uint32_t>& chunks,
             const std::vector<std::uint64_t>& finished) { return g.prefill_mha(chunks, finished); },
          py::arg("chunks"), py::arg("finished"))
      .def("fc_batch", &GpuEngine::fc_batch);

  m.def("critical_transfer_latency", &critical_transfer_latency, py::arg("decode_count"),
        py::arg("model"), py::arg("topology"));

  // Scheduler pieces.
  m.def(
      "split_decode",
      [](const std::vector<std::pair<std::uint64_t, std::uint64_t>>& decode) {
        return split_decode(decode);
      },
      py::arg("decode"));
  m.def(
      "relative_error",
      [](const std::vector<double>& obs, const std::vector<double>& pred) {
        return relative_error(obs, pred);
      },
      py::arg("observed"), py::arg("predicted"));

  // Harness.
  py::class_<TraceRecord>(m, "TraceRecord")
      .def_readonly("id", &TraceRecord::id)
      .def_readonly("arrival_s", &TraceRecord::arrival_s)
      .def_readonly("input_len", &TraceRecord::input_len)
      .def_readonly("output_len", &TraceRecord::output_len);

  py::class_<Trace>(m, "Trace")
      .def_readonly("records", &Trace::records)
      .def_readonly("provenance", &Trace::provenance);

  py::class_<Percentiles>(m, "Percentiles")
      .def_readonly("p50", &Percentiles::p50)
      .def_readonly("p90", &Percentiles::p90)
      .def_readonly("p99", &Percentiles::p99);

  py::class_<RunMetrics>(m, "RunMetrics")
      .def_readonly("policy", &RunMetrics::policy)
      .def_readonly("trace", &RunMetrics::trace)
      .def_readonly("throughput_tokens_per_s", &RunMetrics::throughput_tokens_per_s)
      .def_readonly("makespan_s", &RunMetrics::makespan_s)
      .def_readonly("output_tokens", &RunMetrics::output_tokens)
      .def_readonly("iterations", &RunMetrics::iterations)
      .def_readonly("tbt_ns", &RunMetrics::tbt_ns)
      .def_readonly("ttft_ns", &RunMetrics::ttft_ns)
      .def_readonly("gpu_bubble_ns", &RunMetrics::gpu_bubble_ns)
      .def_readonly("pim_bubble_ns", &RunMetrics::pim_bubble_ns)
      .def_readonly("critical_bytes", &RunMetrics::critical_bytes)
      .def_readonly("async_bytes", &RunMetrics::async_bytes)
      .def_readonly("completed_requests", &RunMetrics::completed_requests);

  m.def("load_trace", &load_trace, py::arg("path"), py::arg("sample_n") = 0, py::arg("seed") = 0);
  m.def("synth_trace", &synth_trace, py::arg("n"), py::arg("in_mean"), py::arg("in_std"),
        py::arg("out_mean"), py::arg("out_std"), py::arg("seed"),
        py::arg("name") = "synthetic");
  m.def("synth_trace_preset", &synth_trace_preset, py::arg("preset"), py::arg("n"),
        py::arg("seed"));

  m.def(
      "run_simulation",
      [](const Trace& trace, const SimConfig& cfg, const std::string& policy,
         std::uint64_t max_iterations, bool prewarm_decode) {
        SimOptions opt;
        opt.policy = policy_from_string(policy);
        opt.max_iterations = max_iterations;
        opt.prewarm_decode = prewarm_decode;
        opt.keep_reports = false;
        return baseline_run(trace, cfg, opt.policy, opt);
      },
      py::arg("trace"), py::arg("config"), py::arg("policy") = "l3",
      py::arg("max_iterations") = 0, py::arg("prewarm_decode") = false);
  m.def("policy_decode_mha_ns", &policy_decode_mha_ns, py::arg("policy"), py::arg("batch"),
        py::arg("context_tokens"), py::arg("config"));
  py::enum_<Policy>(m, "Policy")
      .value("L3", Policy::L3)
      .value("GPU_ONLY", Policy::GPU_ONLY)
      .value("HBM_PIM", Policy::HBM_PIM)
      .value("RANK_PIM", Policy::RANK_PIM)
      .value("CPU_OFFLOAD", Policy::CPU_OFFLOAD);

  py::register_exception<ConfigError>(m, "ConfigError");
  py::register_exception<TraceError>(m, "TraceError");
  py::register_exception<PimError>(m, "PimError");
}
