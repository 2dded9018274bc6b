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
#include <algorithm>
#include <numeric>

#include "doctest.h"
#include "l3sim/scheduler.hpp"

using namespace l3sim;

namespace {

using DecodeSet = std::vector<std::pair<std::uint64_t, std::uint64_t>>;

std::uint64_t total(const DecodeSet& s) {
  std::uint64_t t = 0;
  for (const auto& [id, tokens] : s) t += tokens;
  return t;
}

/// Frozen affine cost model: deterministic fixtures for the fill/chunk logic.
struct FakeModel : CostModel {
  double gpu_per_chunk_token = 10.0;
  double gpu_per_decode = 5.0;
  double pim_per_decode_token = 1.0;
  double overlap_per_chunk_token = 0.5;

  PimCost pim_cost(std::span<const std::uint64_t> f_d,
                   std::span<const std::uint64_t>) const override {
    double sum = 0;
    for (auto t : f_d) sum += double(t);
    return {sum * pim_per_decode_token, overlap_per_chunk_token};
  }
  double t_gpu(std::span<const std::uint32_t> c_p, std::span<const std::uint64_t>,
               std::size_t other_decode_count) const override {
    double c = 0;
    for (auto x : c_p) c += x;
    return gpu_per_chunk_token * c + gpu_per_decode * double(other_decode_count);
  }
};

struct NotReadyModel : FakeModel {
  bool ready() const override { return false; }
};

SchedulerParams params() {
  SchedulerParams p;
  return p;
}

}  // namespace

TEST_CASE("split example: 2k 3k 4k 5k divides into 7k and 7k") {
  const DecodeSet in{{0, 2000}, {1, 3000}, {2, 4000}, {3, 5000}};
  const auto [a, b] = split_decode(in);
  CHECK(total(a) == 7000);
  CHECK(total(b) == 7000);
  // Longest-first: 5k seeds one side, 2k closes it.
  const DecodeSet expect_a{{3, 5000}, {0, 2000}};
  const DecodeSet expect_b{{2, 4000}, {1, 3000}};
  CHECK(a == expect_a);
  CHECK(b == expect_b);
}

TEST_CASE("single decode request lands alone") {
  const DecodeSet in{{42, 777}};
  const auto [a, b] = split_decode(in);
  CHECK(a.size() == 1);
  CHECK(b.empty());
}

TEST_CASE("five unit requests split 3 and 2") {
  const DecodeSet in{{0, 1}, {1, 1}, {2, 1}, {3, 1}, {4, 1}};
  const auto [a, b] = split_decode(in);
  CHECK(total(a) == 3);
  CHECK(total(b) == 2);
}

TEST_CASE("greedy gap never exceeds the largest element: exhaustive small sets") {
  for (int mask = 1; mask < (1 << 6); ++mask) {
    DecodeSet in;
    std::uint64_t largest = 0;
    for (int i = 0; i < 6; ++i) {
      if (mask & (1 << i)) {
        const std::uint64_t tokens = (i + 1) * 37 % 97 + 1;
        in.push_back({std::uint64_t(i), tokens});
        largest = std::max(largest, tokens);
      }
    }
    const auto [a, b] = split_decode(in);
    const std::uint64_t ta = total(a), tb = total(b);
    CHECK((ta > tb ? ta - tb : tb - ta) <= largest);
  }
}

TEST_CASE("deterministic tie-break on request id") {
  const DecodeSet in{{5, 100}, {1, 100}, {3, 100}};
  const auto [a, b] = split_decode(in);
  REQUIRE(!a.empty());
  CHECK(a.front().first == 1);  // lowest id first among equals
  const auto [a2, b2] = split_decode(in);
  CHECK(a == a2);
  CHECK(b == b2);
}

TEST_CASE("fill stops once T_GPU exceeds the opposite T_PIM") {
  // One decode request of 10k tokens: T_PIM0 = 10000. Full prompts of 256
  // tokens cost 2560 each on the GPU, so four land in sub-batch 1 before the
  // stop rule fires, and the fourth is chunked back toward alignment.
  Scheduler sched(params());
  FakeModel model;
  ScheduleInputs in;
  in.decode = {{0, 10000}};
  in.host_free = Bytes(1) << 40;
  for (std::uint64_t i = 0; i < 10; ++i)
    in.prefill.push_back({100 + i, 256, 0, false, Bytes(1) << 20});

  const auto plan = sched.build_iteration(in, model);
  const SubBatch& sb1 = plan.sub[1];
  REQUIRE(!sb1.c_p.empty());
  CHECK(sb1.c_p.size() <= 5);
  // At most one partial chunk, and it is the last entry.
  int partial = 0;
  for (std::size_t i = 0; i < sb1.c_p.size(); ++i)
    if (sb1.c_p[i] < 256) ++partial;
  CHECK(partial <= 1);
  if (sb1.chunked_index >= 0) CHECK(sb1.chunked_index == std::int32_t(sb1.c_p.size()) - 1);

  // Alignment within one 16-token step of the frozen model.
  const double step_delta = 16 * model.gpu_per_chunk_token - 16 * model.overlap_per_chunk_token;
  const double gap = std::fabs(plan.sub[1].predicted_gpu_ns - plan.sub[1].predicted_pim_ns);
  (void)gap;
  const double gpu1 = model.t_gpu(sb1.c_p, sb1.f_p, plan.sub[0].f_d.size());
  const double pim0 = model.pim_cost(plan.sub[0].f_d, plan.sub[0].decode_ids)
                          .at(sb1.chunk_tokens());
  CHECK(std::fabs(gpu1 - pim0) <= step_delta + 1e-9);
}

TEST_CASE("one long prefill is chunked and the leftover requeued") {
  Scheduler sched(params());
  FakeModel model;
  ScheduleInputs in;
  in.decode = {{0, 10000}};
  in.host_free = Bytes(1) << 40;
  in.prefill.push_back({7, 8192, 0, false, Bytes(1) << 20});

  const auto plan = sched.build_iteration(in, model);
  const SubBatch& sb1 = plan.sub[1];
  REQUIRE(sb1.c_p.size() == 1);
  CHECK(sb1.chunked_index == 0);
  CHECK(sb1.c_p[0] < 8192);
  CHECK(sb1.c_p[0] % 16 == 0);
  REQUIRE(plan.grants.size() == 1);
  CHECK(plan.grants[0].progress == sb1.c_p[0]);
  CHECK(plan.grants[0].progress < 8192);  // remainder goes back to the queue head
}

TEST_CASE("empty prefill queue leaves decode-only sub-batches") {
  Scheduler sched(params());
  FakeModel model;
  ScheduleInputs in;
  in.decode = {{0, 5000}, {1, 4000}};
  in.host_free = Bytes(1) << 40;
  const auto plan = sched.build_iteration(in, model);
  CHECK(plan.sub[0].c_p.empty());
  CHECK(plan.sub[1].c_p.empty());
  CHECK(plan.grants.empty());
}

TEST_CASE("host memory full admits no new prefill") {
  Scheduler sched(params());
  FakeModel model;
  ScheduleInputs in;
  in.decode = {{0, 10000}};
  in.host_free = 100;  // smaller than any admission budget
  in.prefill.push_back({7, 4096, 0, false, Bytes(1) << 30});
  const auto plan = sched.build_iteration(in, model);
  CHECK(plan.grants.empty());
  CHECK(plan.sub[0].c_p.empty());
  CHECK(plan.sub[1].c_p.empty());
}

TEST_CASE("resident mid-prefill requests bypass the admission budget") {
  Scheduler sched(params());
  FakeModel model;
  ScheduleInputs in;
  in.decode = {{0, 10000}};
  in.host_free = 0;
  in.prefill.push_back({7, 4096, 2048, true, 0});
  const auto plan = sched.build_iteration(in, model);
  CHECK(!plan.grants.empty());
}

TEST_CASE("bootstrap mode admits the fixed default chunk") {
  Scheduler sched(params());
  NotReadyModel model;
  ScheduleInputs in;
  in.decode = {{0, 1000}};
  in.host_free = Bytes(1) << 40;
  in.prefill.push_back({7, 8192, 0, false, Bytes(1) << 20});
  const auto plan = sched.build_iteration(in, model);
  CHECK(plan.bootstrap);
  REQUIRE(plan.grants.size() == 1);
  CHECK(plan.grants[0].chunk == 512);
}

TEST_CASE("pressure admission keeps prefill alive when the GPU is already ahead") {
  Scheduler sched(params());
  FakeModel model;
  model.gpu_per_decode = 1e6;  // decode FC alone dwarfs the PIM side
  ScheduleInputs in;
  in.decode = {{0, 100}, {1, 90}};
  in.host_free = Bytes(1) << 40;
  in.prefill.push_back({7, 4096, 0, false, Bytes(1) << 20});
  const auto plan = sched.build_iteration(in, model);
  REQUIRE(plan.grants.size() == 1);
  CHECK((plan.sub[0].pressure_admitted || plan.sub[1].pressure_admitted));
}

TEST_CASE("grants arrive in queue order") {
  Scheduler sched(params());
  FakeModel model;
  ScheduleInputs in;
  in.decode = {{0, 50000}, {1, 45000}};
  in.host_free = Bytes(1) << 40;
  for (std::uint64_t i = 0; i < 20; ++i)
    in.prefill.push_back({100 + i, 512, 0, false, Bytes(1) << 20});
  const auto plan = sched.build_iteration(in, model);
  REQUIRE(plan.grants.size() >= 2);
  for (std::size_t i = 1; i < plan.grants.size(); ++i)
    CHECK(plan.grants[i].queue_index > plan.grants[i - 1].queue_index);
}
