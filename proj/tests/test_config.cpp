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
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <sstream>

#include "doctest.h"
#include "l3sim/config.hpp"

using namespace l3sim;

namespace {

const char* kDgxGpt175b = R"(version = 1

[model]
name = "gpt-175b"
layers = 96
heads = 96
embedding = 12288
precision_bytes = 2

[topology]
channels = 16
dimms_per_channel = 2
ranks_per_dimm = 2
chips_per_rank = 8
bank_groups = 4
banks_per_group = 4
chip_io_bits = 8
bus_bits = 64
gpu_count = 8
gpu_tflops_fp16 = 156
gpu_hbm_bw = 16.3TB/s
hbm_pim_bw = 260.8TB/s
pcie_bw = 32GB/s
host_capacity = 2TB
gpu_capacity = 640GB

[timing]
tck_ns = 0.625
bl = 4
ccd = 4
rrd_s = 4
rrd_l = 8
rcd = 22
ras = 52
rp = 22
rc = 74
cl = 22
wl = 16
cdlr_s = 4
cdlr_l = 12
wr = 24
ccdl = 8
rtp = 12
)";

SimConfig parse(const std::string& text) {
  std::istringstream in(text);
  return parse_config(in, "test");
}

}  // namespace

TEST_CASE("gpt-175b stanza parses with derived head dim") {
  const SimConfig cfg = parse(kDgxGpt175b);
  CHECK(cfg.model.layers == 96);
  CHECK(cfg.model.heads == 96);
  CHECK(cfg.model.embedding == 12288);
  CHECK(cfg.model.head_dim() == 128);
  CHECK(cfg.topology.ranksets() == 4);
  CHECK(cfg.topology.logic_banks() == 16);
  CHECK(cfg.timing.tck_ns == doctest::Approx(0.625));
}

TEST_CASE("head divisibility violation names the relation") {
  std::string bad = kDgxGpt175b;
  const auto pos = bad.find("embedding = 12288");
  bad.replace(pos, 17, "embedding = 12289");
  CHECK_THROWS_WITH_AS(parse(bad), doctest::Contains("D_h x N_h != D_e"), ConfigError);
}

TEST_CASE("unknown keys and stanzas are rejected") {
  CHECK_THROWS_AS(parse(std::string(kDgxGpt175b) + "\nbogus_key = 3\n"), ConfigError);
  CHECK_THROWS_AS(parse(std::string(kDgxGpt175b) + "\n[mystery]\nx = 1\n"), ConfigError);
}

TEST_CASE("version header is mandatory") {
  CHECK_THROWS_AS(parse("[model]\nlayers = 4\n"), ConfigError);
}

TEST_CASE("kv bytes per token") {
  const SimConfig cfg = parse(kDgxGpt175b);
  CHECK(kv_bytes_per_token(cfg.model) == 4718592);  // 2*96*12288*2

  LlmModel opt66b;
  opt66b.layers = 64;
  opt66b.heads = 72;
  opt66b.embedding = 9216;
  opt66b.precision_bytes = 2;
  opt66b.validate();
  CHECK(kv_bytes_per_token(opt66b) == 2359296);  // 2*64*9216*2

  LlmModel tiny;
  tiny.layers = 1;
  tiny.heads = 1;
  tiny.embedding = 1;
  tiny.precision_bytes = 1;
  CHECK(kv_bytes_per_token(tiny) == 2);
}

TEST_CASE("kv bytes is linear in layers, embedding and precision") {
  LlmModel m;
  m.layers = 24;
  m.heads = 16;
  m.embedding = 2048;
  m.precision_bytes = 2;
  const Bytes base = kv_bytes_per_token(m);
  LlmModel m2 = m;
  m2.layers *= 2;
  CHECK(kv_bytes_per_token(m2) == 2 * base);
  m2 = m;
  m2.embedding *= 2;
  CHECK(kv_bytes_per_token(m2) == 2 * base);
  m2 = m;
  m2.precision_bytes = 4;
  CHECK(kv_bytes_per_token(m2) == 2 * base);
}

TEST_CASE("aggregate pim bandwidth hits the golden numbers") {
  const SimConfig cfg = parse(kDgxGpt175b);
  const double pim = pim_aggregate_bw(cfg.topology, cfg.timing);
  // 16 ch x 4 ranks x 8 chips x 16 banks x 8B / (8 * 0.625ns) = 13.1072 TB/s
  CHECK(pim == doctest::Approx(13.1072e12).epsilon(1e-9));
  CHECK(pim == doctest::Approx(13.0e12).epsilon(0.01));  // within 1% of the headline figure

  const double cpu = cpu_aggregate_bw(cfg.topology, cfg.timing);
  CHECK(cpu == doctest::Approx(409.6e9).epsilon(1e-9));
  CHECK(cpu == doctest::Approx(406e9).epsilon(0.02));

  CHECK(pim / cpu == doctest::Approx(32.0).epsilon(1e-9));
  CHECK(pim / cpu > 30.0);
}

TEST_CASE("pim bandwidth scales linearly in channels and ranks") {
  const SimConfig cfg = parse(kDgxGpt175b);
  HwTopology t = cfg.topology;
  const double base = pim_aggregate_bw(t, cfg.timing);
  t.channels *= 2;
  CHECK(pim_aggregate_bw(t, cfg.timing) == doctest::Approx(2 * base));
  t = cfg.topology;
  t.ranks_per_dimm *= 2;
  CHECK(pim_aggregate_bw(t, cfg.timing) == doctest::Approx(2 * base));
  t = cfg.topology;
  t.dimms_per_channel *= 2;
  CHECK(pim_aggregate_bw(t, cfg.timing) == doctest::Approx(2 * base));
}

TEST_CASE("timing consistency is enforced") {
  std::string bad = kDgxGpt175b;
  const auto pos = bad.find("rc = 74");
  bad.replace(pos, 7, "rc = 70");  // < RAS + RP
  CHECK_THROWS_WITH_AS(parse(bad), doctest::Contains("RC >= RAS + RP"), ConfigError);
}

TEST_CASE("chips times io width must equal the bus") {
  std::string bad = kDgxGpt175b;
  const auto pos = bad.find("chips_per_rank = 8");
  bad.replace(pos, 18, "chips_per_rank = 4");
  CHECK_THROWS_AS(parse(bad), ConfigError);
}

TEST_CASE("quantity parsing understands unit suffixes") {
  CHECK(parse_quantity("16.3TB/s") == doctest::Approx(16.3e12));
  CHECK(parse_quantity("512GB") == doctest::Approx(512e9));
  CHECK(parse_quantity("4096") == doctest::Approx(4096));
  CHECK(parse_quantity("1GiB") == doctest::Approx(1073741824.0));
  CHECK_THROWS_AS(parse_quantity("12 parsecs"), ConfigError);
}

TEST_CASE("save then reload round-trips the configuration") {
  const SimConfig cfg = parse(kDgxGpt175b);
  const std::string text = config_to_string(cfg);
  std::istringstream in(text);
  const SimConfig again = parse_config(in, "roundtrip");
  CHECK(config_to_string(again) == text);
  CHECK(again.model.embedding == cfg.model.embedding);
  CHECK(again.topology.host_capacity == cfg.topology.host_capacity);
  CHECK(again.timing.ccdl == cfg.timing.ccdl);
}

TEST_CASE("defaults fill unspecified scheduler and baseline stanzas") {
  const SimConfig cfg = parse(kDgxGpt175b);
  CHECK(cfg.scheduler.chunk_multiple == 16);
  CHECK(cfg.scheduler.default_chunk == 512);
  CHECK(cfg.scheduler.window_size == 512);
  CHECK(cfg.baseline.rank_pim_bw_mult == doctest::Approx(4.0));
  CHECK(cfg.timing.trefi_ns == doctest::Approx(7800.0));
  CHECK(cfg.timing.trfc_ns == doctest::Approx(350.0));
  CHECK(cfg.topology.pcie_bw == doctest::Approx(32e9));
}
