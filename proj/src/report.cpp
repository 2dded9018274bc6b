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
#include <fstream>
#include <iostream>
#include <sstream>

#include "json.hpp"
#include "l3sim/harness.hpp"

namespace l3sim {

namespace {

double normalizer(const std::vector<RunMetrics>& runs, const std::string& baseline, bool* found) {
  *found = false;
  if (baseline.empty()) return 1.0;
  for (const auto& r : runs) {
    if (r.policy == baseline && r.throughput_tokens_per_s > 0) {
      *found = true;
      return r.throughput_tokens_per_s;
    }
  }
  return 1.0;
}

}  // namespace

std::string render_report(const std::vector<RunMetrics>& runs, ReportFormat format,
                          const std::string& normalize_against) {
  bool have_baseline = false;
  const double base = normalizer(runs, normalize_against, &have_baseline);
  if (!normalize_against.empty() && !have_baseline)
    std::cerr << "warning: baseline policy '" << normalize_against
              << "' not among the runs; reporting absolute throughput\n";

  if (format == ReportFormat::CSV) {
    std::ostringstream os;
    os << "policy,trace,throughput_tokens_per_s,normalized_throughput,tbt_p50_ns,tbt_p99_ns,"
          "ttft_p50_ns,ttft_p99_ns,gpu_bubble_ns,pim_bubble_ns,critical_bytes,async_bytes,"
          "iterations,completed_requests\n";
    for (const auto& r : runs) {
      os << r.policy << "," << r.trace << "," << r.throughput_tokens_per_s << ","
         << (have_baseline ? r.throughput_tokens_per_s / base : r.throughput_tokens_per_s) << ","
         << r.tbt_ns.p50 << "," << r.tbt_ns.p99 << "," << r.ttft_ns.p50 << "," << r.ttft_ns.p99
         << "," << r.gpu_bubble_ns << "," << r.pim_bubble_ns << "," << r.critical_bytes << ","
         << r.async_bytes << "," << r.iterations << "," << r.completed_requests << "\n";
    }
    return os.str();
  }

  nlohmann::json j = nlohmann::json::array();
  for (const auto& r : runs) {
    j.push_back({{"policy", r.policy},
                 {"trace", r.trace},
                 {"throughput_tokens_per_s", r.throughput_tokens_per_s},
                 {"normalized_throughput",
                  have_baseline ? r.throughput_tokens_per_s / base : r.throughput_tokens_per_s},
                 {"tbt_p50_ns", r.tbt_ns.p50},
                 {"tbt_p99_ns", r.tbt_ns.p99},
                 {"ttft_p50_ns", r.ttft_ns.p50},
                 {"ttft_p99_ns", r.ttft_ns.p99},
                 {"gpu_bubble_ns", r.gpu_bubble_ns},
                 {"pim_bubble_ns", r.pim_bubble_ns},
                 {"critical_bytes", r.critical_bytes},
                 {"async_bytes", r.async_bytes},
                 {"iterations", r.iterations},
                 {"completed_requests", r.completed_requests}});
  }
  return j.dump(2) + "\n";
}

void write_report(const std::vector<RunMetrics>& runs, ReportFormat format,
                  const std::string& path, const std::string& normalize_against) {
  std::ofstream out(path);
  if (!out) throw TraceError("cannot write report to '" + path + "'");
  out << render_report(runs, format, normalize_against);
}

}  // namespace l3sim
