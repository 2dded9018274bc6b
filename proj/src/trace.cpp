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
#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "json.hpp"
#include "l3sim/harness.hpp"

namespace l3sim {

namespace {

// Portable Fisher-Yates: identical shuffles across standard libraries.
template <typename T>
void deterministic_shuffle(std::vector<T>& v, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (std::size_t i = v.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(v[i - 1], v[j]);
  }
}

// Acklam's rational approximation of the inverse normal CDF (|err| < 1.15e-9).
double inverse_normal_cdf(double p) {
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                             2.445134137142996e+00, 3.754408661907416e+00};
  const double plow = 0.02425, phigh = 1 - plow;
  if (p < plow) {
    const double q = std::sqrt(-2 * std::log(p));
    return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
  }
  if (p > phigh) {
    const double q = std::sqrt(-2 * std::log(1 - p));
    return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
  }
  const double q = p - 0.5, r = q * q;
  return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
         (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1);
}

// Stratified lognormal quantiles shuffled into request order. The quantile
// grid clips the extreme tail, so sigma is re-solved against the discretized
// moments: the emitted set then matches the target mean and std by
// construction (up to integer rounding), even for heavy-tailed presets.
std::vector<std::uint64_t> stratified_lognormal(std::size_t n, double mean, double sd,
                                                std::uint64_t seed) {
  std::vector<std::uint64_t> out(n);
  if (sd <= 0) {
    std::fill(out.begin(), out.end(),
              std::max<std::uint64_t>(1, std::uint64_t(std::llround(mean))));
    return out;
  }
  std::vector<double> z(n);
  for (std::size_t i = 0; i < n; ++i) z[i] = inverse_normal_cdf((double(i) + 0.5) / double(n));

  // cv of the discretized set grows monotonically in sigma; bisect for it.
  const auto discrete_cv = [&](double sigma) {
    double m = 0, m2 = 0;
    for (double zi : z) {
      const double e = std::exp(sigma * zi);
      m += e;
      m2 += e * e;
    }
    m /= double(n);
    m2 /= double(n);
    return std::sqrt(std::max(0.0, m2 - m * m)) / m;
  };
  const double target_cv = sd / mean;
  double lo = 1e-6, hi = std::sqrt(std::log1p(target_cv * target_cv)) * 3 + 1.0;
  for (int it = 0; it < 60; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (discrete_cv(mid) < target_cv) lo = mid;
    else hi = mid;
  }
  const double sigma = 0.5 * (lo + hi);
  double scale = 0;
  for (double zi : z) scale += std::exp(sigma * zi);
  scale = mean * double(n) / scale;  // exp(mu)

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  deterministic_shuffle(order, seed);
  for (std::size_t i = 0; i < n; ++i)
    out[i] = std::max<std::uint64_t>(
        1, std::uint64_t(std::llround(scale * std::exp(sigma * z[order[i]]))));
  return out;
}

}  // namespace

Trace parse_trace(std::istream& in, const std::string& origin, std::size_t sample_n,
                  std::uint64_t seed) {
  Trace t;
  t.provenance = origin;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw TraceError(origin + ":" + std::to_string(lineno) + ": malformed record: " + e.what());
    }
    TraceRecord r;
    try {
      r.id = j.at("id").get<std::uint64_t>();
      r.input_len = j.at("input_len").get<std::uint64_t>();
      r.output_len = j.at("output_len").get<std::uint64_t>();
      r.arrival_s = j.value("arrival", 0.0);
    } catch (const nlohmann::json::exception& e) {
      throw TraceError(origin + ":" + std::to_string(lineno) + ": missing field: " + e.what());
    }
    if (r.input_len < 1 || r.output_len < 1)
      throw TraceError(origin + ":" + std::to_string(lineno) +
                       ": input_len and output_len must be >= 1");
    t.records.push_back(r);
  }
  if (sample_n > 0) {
    if (sample_n > t.records.size())
      throw TraceError(origin + ": sample_n " + std::to_string(sample_n) + " exceeds " +
                       std::to_string(t.records.size()) + " records");
    deterministic_shuffle(t.records, seed);
    t.records.resize(sample_n);
  }
  std::stable_sort(t.records.begin(), t.records.end(),
                   [](const TraceRecord& a, const TraceRecord& b) { return a.arrival_s < b.arrival_s; });
  return t;
}

Trace load_trace(const std::string& path, std::size_t sample_n, std::uint64_t seed) {
  std::ifstream in(path);
  if (!in) throw TraceError("cannot open trace file '" + path + "'");
  return parse_trace(in, path, sample_n, seed);
}

void save_trace(const Trace& t, std::ostream& out) {
  for (const auto& r : t.records) {
    nlohmann::json j{
        {"id", r.id}, {"input_len", r.input_len}, {"output_len", r.output_len}, {"arrival", r.arrival_s}};
    out << j.dump() << "\n";
  }
}

Trace synth_trace(std::size_t n, double in_mean, double in_std, double out_mean, double out_std,
                  std::uint64_t seed, const std::string& name) {
  if (in_mean <= 0 || out_mean <= 0) throw TraceError("synth_trace: means must be > 0");
  if (in_std < 0 || out_std < 0) throw TraceError("synth_trace: stds must be >= 0");

  const auto in_lens = stratified_lognormal(n, in_mean, in_std, seed * 2 + 1);
  const auto out_lens = stratified_lognormal(n, out_mean, out_std, seed * 2 + 2);

  Trace t;
  t.provenance = name;
  t.records.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    TraceRecord r;
    r.id = i;
    r.arrival_s = 0;  // closed-loop saturation by default
    r.input_len = in_lens[i];
    r.output_len = out_lens[i];
    t.records.push_back(r);
  }
  return t;
}

void assign_poisson_arrivals(Trace& t, double rate, std::uint64_t seed) {
  if (rate <= 0) throw TraceError("poisson arrival rate must be > 0");
  std::mt19937_64 rng(seed);
  double now = 0;
  for (auto& r : t.records) {
    const double u = (double(rng() >> 11) + 0.5) / 9007199254740992.0;
    now += -std::log(u) / rate;
    r.arrival_s = now;
  }
}

const std::vector<TracePreset>& trace_presets() {
  static const std::vector<TracePreset> presets = {
      {"openr1", 96.0, 75.1, 12684.1, 8464.6},
      {"dolphin", 201.9, 563.0, 3926.2, 4216.0},
      {"openthoughts", 89.4, 66.7, 6366.7, 4662.9},
      {"longbench", 7703.9, 4285.5, 89.8, 213.7},
  };
  return presets;
}

Trace synth_trace_preset(const std::string& preset, std::size_t n, std::uint64_t seed) {
  for (const auto& p : trace_presets()) {
    if (p.name == preset) return synth_trace(n, p.in_mean, p.in_std, p.out_mean, p.out_std, seed, p.name);
  }
  std::ostringstream os;
  os << "unknown trace preset '" << preset << "' (have:";
  for (const auto& p : trace_presets()) os << " " << p.name;
  os << ")";
  throw TraceError(os.str());
}

Policy policy_from_string(const std::string& s) {
  if (s == "l3") return Policy::L3;
  if (s == "gpu_only") return Policy::GPU_ONLY;
  if (s == "hbm_pim") return Policy::HBM_PIM;
  if (s == "rank_pim") return Policy::RANK_PIM;
  if (s == "cpu_offload") return Policy::CPU_OFFLOAD;
  throw TraceError("unknown policy '" + s + "'");
}

const char* policy_name(Policy p) {
  switch (p) {
    case Policy::L3: return "l3";
    case Policy::GPU_ONLY: return "gpu_only";
    case Policy::HBM_PIM: return "hbm_pim";
    case Policy::RANK_PIM: return "rank_pim";
    case Policy::CPU_OFFLOAD: return "cpu_offload";
  }
  return "unknown";
}

SchedulerKind scheduler_kind_from_string(const std::string& s) {
  if (s == "l3") return SchedulerKind::L3_INTERLEAVED;
  if (s == "prefill-priority") return SchedulerKind::PREFILL_PRIORITY;
  if (s == "single-batch") return SchedulerKind::SINGLE_BATCH;
  throw TraceError("unknown scheduler '" + s + "'");
}

}  // namespace l3sim
