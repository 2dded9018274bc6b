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
#include <string>
#include <vector>

namespace l3sim {

struct Interval {
  double start_ns = 0;
  double end_ns = 0;
  enum Kind {
    GPU_PREFILL,
    GPU_FC,
    GPU_IDLE,
    PIM_COMPUTE,
    PIM_RECEIVE,
    PIM_IDLE,
    PCIE_DOWN,
    PCIE_UP,
    PCIE_ASYNC,
  } kind = GPU_FC;
  int sub_batch = -1;
  std::string label;  // idle intervals carry their cause here
};

const char* interval_kind_name(Interval::Kind k);

/// Per-device interval streams for one run or one iteration window.
struct Timeline {
  std::vector<Interval> gpu;
  std::vector<Interval> pcie;
  std::vector<std::vector<Interval>> ranksets;

  void ensure_ranksets(std::size_t n) {
    if (ranksets.size() < n) ranksets.resize(n);
  }
  std::string to_json() const;
};

}  // namespace l3sim
