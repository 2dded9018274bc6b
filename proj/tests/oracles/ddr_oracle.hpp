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

// Test-only DDR command-stream oracle: a literal per-command state machine
// that issues the broadcast ACT/RD/PRE stream of one all-bank PIM phase at
// the earliest legal cycle, tracking every timing constraint explicitly.
// The engine's closed-form latencies must match this walk exactly.

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "l3sim/config.hpp"
#include "l3sim/pim_engine.hpp"

namespace l3sim::test {

struct OracleResult {
  std::uint64_t end_cycle = 0;
  std::uint64_t acts = 0;
  std::uint64_t reads = 0;
};

class LogicBankMachine {
 public:
  explicit LogicBankMachine(const DdrTiming& t) : t_(t) {}

  std::uint64_t earliest_act() const {
    std::uint64_t c = now_;
    if (has_act_) c = std::max(c, last_act_ + t_.rc);      // ACT-to-ACT
    if (row_open_) c = std::max(c, earliest_pre() + t_.rp);  // must close first
    if (has_pre_) c = std::max(c, last_pre_ + t_.rp);
    return c;
  }
  std::uint64_t earliest_pre() const {
    std::uint64_t c = now_;
    if (has_act_) c = std::max(c, last_act_ + t_.ras);  // row open at least RAS
    if (has_rd_) c = std::max(c, last_rd_ + t_.rtp);    // read-to-precharge
    return c;
  }
  std::uint64_t earliest_rd() const {
    if (!row_open_) throw std::logic_error("RD with no open row");
    std::uint64_t c = std::max(now_, last_act_ + t_.rcd);
    if (has_rd_) c = std::max(c, last_rd_ + t_.ccdl);
    return c;
  }

  void act(std::uint64_t cycle) {
    if (cycle < earliest_act()) throw std::logic_error("ACT too early");
    last_act_ = cycle;
    has_act_ = true;
    row_open_ = true;
    has_rd_ = false;
    now_ = cycle;
  }
  void pre(std::uint64_t cycle) {
    if (!row_open_) throw std::logic_error("PRE with no open row");
    if (cycle < earliest_pre()) throw std::logic_error("PRE too early");
    last_pre_ = cycle;
    has_pre_ = true;
    row_open_ = false;
    now_ = cycle;
  }
  void rd(std::uint64_t cycle) {
    if (cycle < earliest_rd()) throw std::logic_error("RD too early");
    last_rd_ = cycle;
    has_rd_ = true;
    now_ = cycle;
  }
  bool row_open() const { return row_open_; }

 private:
  DdrTiming t_;
  std::uint64_t now_ = 0;
  std::uint64_t last_act_ = 0, last_pre_ = 0, last_rd_ = 0;
  bool has_act_ = false, has_pre_ = false, has_rd_ = false;
  bool row_open_ = false;
};

// Earliest-issue walk of one phase: `groups` token groups, stacking
// `groups_per_row` to a row, `reads_per_group` broadcast reads each.
inline OracleResult oracle_phase(std::uint64_t tokens, std::uint32_t logic_banks,
                                 std::uint32_t groups_per_row, std::uint32_t reads_per_group,
                                 const DdrTiming& t) {
  OracleResult r;
  if (tokens == 0) return r;
  LogicBankMachine bank(t);
  std::uint64_t groups = (tokens + logic_banks - 1) / logic_banks;
  std::uint64_t in_row = 0;
  std::uint64_t last_rd = 0;
  for (std::uint64_t g = 0; g < groups; ++g) {
    if (g == 0 || in_row == groups_per_row) {
      if (bank.row_open()) bank.pre(bank.earliest_pre());
      bank.act(bank.earliest_act());
      ++r.acts;
      in_row = 0;
    }
    for (std::uint32_t i = 0; i < reads_per_group; ++i) {
      last_rd = bank.earliest_rd();
      bank.rd(last_rd);
      ++r.reads;
    }
    ++in_row;
  }
  r.end_cycle = last_rd + t.ccdl;
  return r;
}

// Replays an emitted command stream through the legality machine; throws on
// any constraint violation.
inline void verify_stream_legal(const std::vector<PimCommand>& cmds, const DdrTiming& t) {
  LogicBankMachine bank(t);
  std::uint64_t prev_cycle = 0;
  for (const auto& c : cmds) {
    if (c.cycle < prev_cycle) throw std::logic_error("command stream not time-ordered");
    prev_cycle = c.cycle;
    switch (c.kind) {
      case PimCommand::ACT:
        bank.act(c.cycle);
        break;
      case PimCommand::RD:
        bank.rd(c.cycle);
        break;
      case PimCommand::PRE:
        bank.pre(c.cycle);
        break;
      case PimCommand::REF:
        break;
    }
  }
}

}  // namespace l3sim::test
