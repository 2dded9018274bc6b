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
#include <random>

#include "doctest.h"
#include "l3sim/fp16.hpp"
#include "l3sim/pim_engine.hpp"
#include "oracles/ddr_oracle.hpp"
#include "oracles/reference_attention.hpp"

using namespace l3sim;

namespace {

LlmModel gpt175b() {
  LlmModel m;
  m.layers = 96;
  m.heads = 96;
  m.embedding = 12288;
  m.precision_bytes = 2;
  return m;
}

struct Fixture {
  LlmModel m = gpt175b();
  HwTopology t;
  DdrTiming d;
  PimEngine engine{m, t, d};
};

std::vector<double> random_vec(std::mt19937_64& rng, std::size_t n, double scale = 1.0) {
  std::normal_distribution<double> dist(0.0, scale);
  std::vector<double> v(n);
  for (auto& x : v) x = round_fp16(dist(rng));  // fp16-representable inputs
  return v;
}

}  // namespace

TEST_CASE("score latency: 16 tokens is one activation plus four reads") {
  Fixture f;
  const auto r = f.engine.score_phase(16);
  // RCD 22 cycles (13.75 ns) + 4 reads x CCDL 8 x 0.625 ns = 33.75 ns.
  CHECK(r.latency_ns == doctest::Approx(33.75));
  CHECK(r.acts == 1);
  CHECK(r.reads == 4);
  CHECK(r.bubble_ns == 0.0);
}

TEST_CASE("score latency of zero tokens is zero") {
  Fixture f;
  const auto r = f.engine.score_phase(0);
  CHECK(r.latency_ns == 0.0);
  CHECK(f.engine.fused_head(0).latency_ns == 0.0);
}

TEST_CASE("closed form matches the command-stream oracle exactly") {
  Fixture f;
  for (std::uint64_t tokens :
       {1ull, 15ull, 16ull, 17ull, 255ull, 256ull, 512ull, 513ull, 1024ull, 8192ull, 100000ull}) {
    const auto oracle = test::oracle_phase(tokens, f.t.logic_banks(), 32, 4, f.d);
    const auto got = f.engine.score_phase(tokens);
    CHECK(got.latency_ns == doctest::Approx(f.d.ns(oracle.end_cycle)));
    CHECK(got.acts == oracle.acts);
    CHECK(got.reads == oracle.reads);
    // Context is read-symmetric.
    CHECK(f.engine.context_phase(tokens).latency_ns == got.latency_ns);
  }
}

TEST_CASE("1024 tokens: 64 groups across two rows per bank") {
  Fixture f;
  const auto r = f.engine.score_phase(1024);
  CHECK(r.acts == 2);
  CHECK(r.reads == 64 * 4);
  const auto oracle = test::oracle_phase(1024, 16, 32, 4, f.d);
  CHECK(r.latency_ns == doctest::Approx(f.d.ns(oracle.end_cycle)));
}

TEST_CASE("emitted command stream is legal under the DDR state machine") {
  Fixture f;
  for (std::uint64_t tokens : {16ull, 512ull, 2048ull, 33000ull}) {
    const auto cmds = f.engine.command_stream(tokens, /*score_then_context=*/true);
    CHECK_NOTHROW(test::verify_stream_legal(cmds, f.d));
  }
}

TEST_CASE("softmax chunks: uniform, overflow and single-pass cases") {
  Fixture f;
  const std::vector<double> uniform{0, 0, 0, 0};
  auto [out, latency] = softmax_chunks(uniform, 2, f.d);
  for (double v : out) CHECK(v == doctest::Approx(0.25));
  CHECK(latency > 0);

  std::vector<double> hot(64, 0.0);
  hot[0] = 1000.0;
  const auto [hot_out, hot_lat] = softmax_chunks(hot, 16, f.d);
  const auto ref = test::reference_softmax(hot);
  for (std::size_t i = 0; i < hot.size(); ++i)
    CHECK(hot_out[i] == doctest::Approx(ref[i]).epsilon(1e-3));

  std::mt19937_64 rng(5);
  std::vector<double> x(300);
  for (auto& v : x) v = std::normal_distribution<double>(0, 3)(rng);
  const auto [chunked, lat1] = softmax_chunks(x, 16, f.d);
  const auto [single, lat2] = softmax_chunks(x, 300, f.d);
  const auto ref2 = test::reference_softmax(x);
  for (std::size_t i = 0; i < x.size(); ++i) {
    CHECK(chunked[i] == doctest::Approx(ref2[i]).epsilon(1e-3));
    CHECK(single[i] == doctest::Approx(ref2[i]).epsilon(1e-12));
  }
  CHECK(lat2 < lat1);  // fewer chunk passes through the unit

  CHECK_THROWS_AS(softmax_chunks(std::vector<double>{1.0, std::nan("")}, 4, f.d), PimError);
}

TEST_CASE("fused pipeline is bubble-free across the token sweep") {
  Fixture f;
  for (std::uint64_t tokens : {16ull, 256ull, 4096ull, 65536ull, 131072ull}) {
    const auto r = f.engine.fused_head(tokens);
    CHECK(r.bubble_ns == 0.0);
    CHECK(r.latency_ns > 0.0);
  }
}

TEST_CASE("a starved command bus surfaces as reported bubbles") {
  Fixture f;
  DdrTiming tight = f.d;
  tight.ccdl = 1;  // command interval shorter than the rank PU fetch window
  PimEngine engine(f.m, f.t, tight);
  const auto r = engine.score_phase(1024);
  CHECK(r.bubble_ns > 0.0);
}

TEST_CASE("functional equivalence against reference attention") {
  Fixture f;
  std::mt19937_64 rng(17);
  for (int inst = 0; inst < 25; ++inst) {
    const std::uint64_t tokens = 1 + rng() % 512;
    const auto q = random_vec(rng, 128, 0.5);
    const auto k = random_vec(rng, tokens * 128, 0.5);
    const auto v = random_vec(rng, tokens * 128, 0.5);
    const auto ref = test::reference_attention(q, k, v, tokens, 128);

    const auto fp64 = f.engine.attend(q, k, v, tokens, AccumMode::FP64);
    for (std::size_t j = 0; j < 128; ++j) CHECK(fp64[j] == ref[j]);  // canonical order, exact

    const auto fp16 = f.engine.attend(q, k, v, tokens, AccumMode::FP16);
    double worst = 0;
    double scale = 0;
    for (std::size_t j = 0; j < 128; ++j) scale = std::max(scale, std::fabs(ref[j]));
    for (std::size_t j = 0; j < 128; ++j)
      worst = std::max(worst, std::fabs(fp16[j] - ref[j]) / std::max(scale, 1e-9));
    CHECK(worst < 1e-2);
  }
}

TEST_CASE("functional selection: one-hot scores return the matching V row") {
  Fixture f;
  std::mt19937_64 rng(23);
  const std::uint64_t tokens = 32;
  const auto v = random_vec(rng, tokens * 128);
  std::vector<double> s(tokens, 0.0);
  s[0] = 1.0;
  const auto out = f.engine.context_values(s, v, tokens, AccumMode::FP16);
  for (std::size_t j = 0; j < 128; ++j) CHECK(out[j] == doctest::Approx(v[j]));
}

TEST_CASE("decode latency is monotone in token count") {
  Fixture f;
  double prev = 0;
  for (std::uint64_t tokens = 1000; tokens <= 150000; tokens += 7000) {
    const double lat = f.engine.fused_head(tokens).latency_ns;
    CHECK(lat > prev);
    prev = lat;
  }
}

TEST_CASE("buffer capacity: exceeding 128K tokens triggers the repeated-fetch path") {
  Fixture f;
  CHECK(f.engine.buffer_token_capacity() == 131072);
  const double below = f.engine.fused_head(131072).latency_ns;
  const double above = f.engine.fused_head(131073).latency_ns;
  // Crossing the buffer boundary pays an extra activation set and the
  // inter-tile renormalization: strictly more than one group's worth.
  CHECK(above > below + f.d.ns(f.d.rcd));
}

TEST_CASE("decode_mha: empty batch, linearity, and rankset balance") {
  Fixture f;
  CHECK(decode_mha({}, f.m, f.t, f.d) == 0.0);

  for (std::uint64_t tokens : {1000ull, 4000ull, 16000ull}) {
    std::vector<std::pair<std::uint64_t, std::uint64_t>> one{{0, tokens}};
    std::vector<std::pair<std::uint64_t, std::uint64_t>> two{{0, 2 * tokens}};
    const double a = decode_mha(one, f.m, f.t, f.d);
    const double b = decode_mha(two, f.m, f.t, f.d);
    CHECK(b / a == doctest::Approx(2.0).epsilon(0.05));
  }

  // Balanced request sets keep per-rankset sums within one head kernel.
  std::vector<std::pair<std::uint64_t, std::uint64_t>> batch;
  for (std::uint64_t r = 0; r < 8; ++r) batch.push_back({r, 6000});
  const auto per_rs = decode_mha_per_rankset(batch, f.m, f.t, f.d);
  const double head = f.engine.fused_head(6000).latency_ns;
  const double lo = *std::min_element(per_rs.begin(), per_rs.end());
  const double hi = *std::max_element(per_rs.begin(), per_rs.end());
  CHECK(hi - lo <= head + 1e-6);
}

TEST_CASE("refresh deferral: idle rank forces issue past eight intervals") {
  Fixture f;
  RefreshManager mgr(f.d);
  const double trefi = f.d.trefi_ns;
  CHECK(mgr.on_idle_check(8.5 * trefi).issued == 0);
  CHECK(mgr.outstanding(8.5 * trefi) == 8);
  const auto d = mgr.on_idle_check(9.0 * trefi + 1);
  CHECK(d.issued == 1);
  CHECK(d.charged_ns == doctest::Approx(f.d.trfc_ns));
  CHECK(mgr.outstanding(9.0 * trefi + 1) <= 8);
}

TEST_CASE("refresh: short heads pay near schedule, long heads batch") {
  Fixture f;
  const double trefi = f.d.trefi_ns;
  {
    RefreshManager mgr(f.d);
    double now = 0;
    std::uint32_t total = 0;
    for (int i = 0; i < 100; ++i) {
      now += trefi / 10;  // heads much shorter than a refresh interval
      const auto d = mgr.on_head_complete(now, trefi / 10);
      total += d.issued;
      CHECK(d.issued <= 1);
      CHECK(mgr.outstanding(now) == 0);
    }
    CHECK(total == 10);
  }
  {
    RefreshManager mgr(f.d);
    const auto d = mgr.on_head_complete(3 * trefi, 3 * trefi);
    CHECK(d.issued == 3);
    CHECK(d.charged_ns == doctest::Approx(3 * f.d.trfc_ns));
  }
  {
    // A single head longer than the whole budget forces pull-ins.
    RefreshManager mgr(f.d);
    const auto d = mgr.on_head_complete(0.0, 12 * trefi);
    CHECK(d.issued >= 4);
  }
}

TEST_CASE("score values error on dimension mismatch") {
  Fixture f;
  std::vector<double> q(128, 0.0), k(127, 0.0);
  CHECK_THROWS_AS(f.engine.score_values(q, k, 1, AccumMode::FP64), PimError);
}
