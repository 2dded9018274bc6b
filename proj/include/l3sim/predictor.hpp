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
#include <deque>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

namespace l3sim {

struct PredictorError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Ordinary least squares fit, predictions clamped at zero.
class LinearModel {
 public:
  void fit(std::span<const std::vector<double>> features, std::span<const double> targets);
  double predict(std::span<const double> features) const;
  bool trained() const { return trained_; }
  const std::vector<double>& coefficients() const { return coef_; }
  double intercept() const { return intercept_; }

 private:
  std::vector<double> coef_;
  double intercept_ = 0;
  bool trained_ = false;
};

/// Bagged regression trees, variance-reduction splits.
class RandomForest {
 public:
  RandomForest(std::uint32_t trees = 32, std::uint32_t max_depth = 8, std::uint64_t seed = 1);

  void fit(std::span<const std::vector<double>> features, std::span<const double> targets);
  double predict(std::span<const double> features) const;
  bool trained() const { return !trees_.empty(); }

 private:
  struct Node {
    std::int32_t feature = -1;  // -1 == leaf
    double threshold = 0;
    double value = 0;
    std::int32_t left = -1;
    std::int32_t right = -1;
  };
  struct Tree {
    std::vector<Node> nodes;
  };
  std::int32_t build(Tree& tree, std::vector<std::uint32_t>& idx, std::uint32_t lo,
                     std::uint32_t hi, std::uint32_t depth,
                     std::span<const std::vector<double>> x, std::span<const double> y,
                     std::mt19937_64& rng);
  double predict_tree(const Tree& tree, std::span<const double> features) const;

  std::uint32_t n_trees_;
  std::uint32_t max_depth_;
  std::uint64_t seed_;
  std::vector<Tree> trees_;
};

// Mean relative error: (1/n) sum |Y_i - Yhat_i| / Y_i. All Y_i must be > 0.
double relative_error(std::span<const double> observed, std::span<const double> predicted);

/// Sliding training window shared by the latency models.
struct Sample {
  std::vector<double> features;
  double target = 0;
};

class SampleWindow {
 public:
  explicit SampleWindow(std::size_t capacity) : capacity_(capacity) {}
  void add(Sample s);
  std::size_t size() const { return samples_.size(); }
  std::size_t since_train() const { return since_train_; }
  void mark_trained() { since_train_ = 0; }
  std::vector<std::vector<double>> features() const;
  std::vector<double> targets() const;

 private:
  std::size_t capacity_;
  std::size_t since_train_ = 0;
  std::deque<Sample> samples_;
};

}  // namespace l3sim
