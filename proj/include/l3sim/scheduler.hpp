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
#include <iosfwd>
#include <memory>
#include <span>
#include <vector>

#include "l3sim/config.hpp"
#include "l3sim/gpu_engine.hpp"
#include "l3sim/pim_engine.hpp"
#include "l3sim/predictor.hpp"

namespace l3sim {

enum class Phase { QUEUED, PREFILLING, DECODING, DONE };

struct Request {
  std::uint64_t id = 0;
  double arrival_s = 0;
  std::uint64_t input_len = 0;     // L_in
  std::uint64_t output_target = 0; // L_out
  std::uint64_t generated = 0;     // output tokens produced so far
  std::uint64_t chunk_progress = 0;  // prefilled input tokens
  Phase phase = Phase::QUEUED;

  // Context tokens the PIM reads for this request's decode step.
  std::uint64_t context_tokens() const { return input_len + generated; }
  bool done() const { return phase == Phase::DONE; }
};

/// One of the two interleaved sub-batches of an iteration.
struct SubBatch {
  std::vector<std::uint64_t> prefill_ids;
  std::vector<std::uint32_t> c_p;  // chunk sizes, multiples of 16
  std::vector<std::uint64_t> f_p;  // finished (already prefilled) tokens
  std::vector<std::uint64_t> decode_ids;
  std::vector<std::uint64_t> f_d;  // context tokens per decode request
  double predicted_gpu_ns = 0;
  double predicted_pim_ns = 0;
  std::int32_t chunked_index = -1;  // index into prefill_ids of the partial chunk
  bool bootstrap = false;
  bool pressure_admitted = false;

  std::uint64_t chunk_tokens() const {
    std::uint64_t s = 0;
    for (auto c : c_p) s += c;
    return s;
  }
  std::uint64_t decode_tokens() const {
    std::uint64_t s = 0;
    for (auto t : f_d) s += t;
    return s;
  }
};

// Greedy longest-first split of the decode set into two sub-batches with
// token totals as even as possible; ties break on request id.
std::pair<std::vector<std::pair<std::uint64_t, std::uint64_t>>,
          std::vector<std::pair<std::uint64_t, std::uint64_t>>>
split_decode(std::span<const std::pair<std::uint64_t, std::uint64_t>> decode);

/// Latency oracle the scheduler plans against. The PIM side is affine in the
/// opposite sub-batch's chunk tokens, so it is returned as (base, rate).
class CostModel {
 public:
  virtual ~CostModel() = default;

  struct PimCost {
    double base_ns = 0;            // t_d + t_comm
    double per_chunk_token_ns = 0; // t_overlap rate
    double at(std::uint64_t other_chunk_tokens) const {
      return base_ns + per_chunk_token_ns * double(other_chunk_tokens);
    }
  };

  virtual PimCost pim_cost(std::span<const std::uint64_t> f_d,
                           std::span<const std::uint64_t> ids) const = 0;
  // T_GPU of one sub-batch: t_p(c_p, f_p) + t_batch(sum c_p + other decode count).
  virtual double t_gpu(std::span<const std::uint32_t> c_p, std::span<const std::uint64_t> f_p,
                       std::size_t other_decode_count) const = 0;
  virtual bool ready() const { return true; }
};

/// Cost model backed by the engines themselves (oracle predictions).
class EngineCostModel : public CostModel {
 public:
  EngineCostModel(const SimConfig& cfg);
  PimCost pim_cost(std::span<const std::uint64_t> f_d,
                   std::span<const std::uint64_t> ids) const override;
  double t_gpu(std::span<const std::uint32_t> c_p, std::span<const std::uint64_t> f_p,
               std::size_t other_decode_count) const override;

  // Component views used by the simulator when executing an iteration.
  double t_p(std::span<const std::uint32_t> c_p, std::span<const std::uint64_t> f_p) const;
  double t_batch(std::uint64_t chunk_tokens, std::size_t other_decode_count) const;
  double t_d(std::span<const std::uint64_t> f_d, std::span<const std::uint64_t> ids) const;
  std::vector<double> t_d_per_rankset(std::span<const std::uint64_t> f_d,
                                      std::span<const std::uint64_t> ids) const;
  double t_comm(std::size_t decode_count) const;
  double overlap_rate_ns_per_token() const;
  const GpuEngine& gpu() const { return gpu_; }

 private:
  SimConfig cfg_;
  GpuEngine gpu_;
};

/// Trainable predictors: a linear model for the PIM side, two
/// random-forest regressors for the GPU side.
class LatencyPredictors : public CostModel {
 public:
  LatencyPredictors(const SchedulerParams& params, std::uint64_t seed = 1);

  PimCost pim_cost(std::span<const std::uint64_t> f_d,
                   std::span<const std::uint64_t> ids) const override;
  double t_gpu(std::span<const std::uint32_t> c_p, std::span<const std::uint64_t> f_p,
               std::size_t other_decode_count) const override;
  bool ready() const override;

  struct Observation {
    std::vector<std::uint32_t> c_p;
    std::vector<std::uint64_t> f_p;
    std::vector<std::uint64_t> f_d;
    std::uint64_t other_chunk_tokens = 0;
    std::size_t other_decode_count = 0;
    double observed_t_p_ns = 0;
    double observed_t_batch_ns = 0;
    double observed_t_pim_ns = 0;  // t_d + t_comm + t_overlap
  };
  // Appends one sub-batch's measured latencies; retrains on the configured
  // stride once the bootstrap minimum is reached.
  void record(const Observation& obs);

  std::size_t samples() const { return pim_window_.size(); }
  const SchedulerParams& params() const { return params_; }
  // Training windows as CSV (model, target_ns, features...) for offline study.
  void dump_windows_csv(std::ostream& out) const;

 private:
  void maybe_retrain();
  static std::vector<double> pim_features(std::span<const std::uint64_t> f_d,
                                          std::uint64_t other_chunk_tokens);
  static std::vector<double> prefill_features(std::span<const std::uint32_t> c_p,
                                              std::span<const std::uint64_t> f_p);
  static std::vector<double> batch_features(std::uint64_t chunk_tokens,
                                            std::size_t other_decode_count);

  SchedulerParams params_;
  LinearModel pim_model_;
  RandomForest gpu_prefill_model_;
  RandomForest gpu_batch_model_;
  SampleWindow pim_window_;
  SampleWindow prefill_window_;
  SampleWindow batch_window_;
  bool trained_ = false;
};

/// Prefill queue item as the scheduler sees it.
struct PrefillItem {
  std::uint64_t id = 0;
  std::uint64_t remaining = 0;  // input tokens still to prefill
  std::uint64_t finished = 0;   // input tokens already prefilled
  bool resident = false;        // host KV budget already reserved
  Bytes admit_bytes = 0;        // budget to reserve on first scheduling
};

struct ScheduleInputs {
  std::vector<std::pair<std::uint64_t, std::uint64_t>> decode;  // (id, context tokens)
  std::vector<PrefillItem> prefill;  // queue order, front first
  Bytes host_free = 0;
};

struct ChunkGrant {
  std::size_t queue_index = 0;
  std::uint32_t chunk = 0;        // scheduled chunk (multiple of 16, possibly padded)
  std::uint64_t progress = 0;     // actual input tokens consumed
  bool new_admission = false;
  Bytes admit_bytes = 0;
};

struct IterationPlan {
  SubBatch sub[2];
  std::vector<ChunkGrant> grants;
  bool bootstrap = false;
};

/// Adaptive chunk-partitioned cross-device batch interleaving.
class Scheduler {
 public:
  Scheduler(const SchedulerParams& params) : params_(params) {}
  IterationPlan build_iteration(const ScheduleInputs& in, const CostModel& model) const;

 private:
  std::uint32_t round_up_chunk(std::uint64_t tokens) const;
  SchedulerParams params_;
};

}  // namespace l3sim
