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
#include "l3sim/predictor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace l3sim {

void LinearModel::fit(std::span<const std::vector<double>> features,
                      std::span<const double> targets) {
  if (features.size() != targets.size() || features.empty())
    throw PredictorError("linear fit: empty or mismatched training data");
  const std::size_t n = features.size();
  const std::size_t d = features[0].size() + 1;  // + intercept

  // Normal equations with Gaussian elimination and partial pivoting.
  std::vector<std::vector<double>> ata(d, std::vector<double>(d, 0.0));
  std::vector<double> atb(d, 0.0);
  std::vector<double> row(d);
  for (std::size_t i = 0; i < n; ++i) {
    if (features[i].size() + 1 != d) throw PredictorError("linear fit: ragged feature rows");
    row[0] = 1.0;
    for (std::size_t j = 1; j < d; ++j) row[j] = features[i][j - 1];
    for (std::size_t a = 0; a < d; ++a) {
      atb[a] += row[a] * targets[i];
      for (std::size_t b = 0; b < d; ++b) ata[a][b] += row[a] * row[b];
    }
  }
  // Ridge epsilon keeps degenerate windows solvable.
  for (std::size_t a = 0; a < d; ++a) ata[a][a] += 1e-9;

  std::vector<double> sol(d, 0.0);
  std::vector<std::size_t> perm(d);
  std::iota(perm.begin(), perm.end(), 0);
  for (std::size_t col = 0; col < d; ++col) {
    std::size_t pivot = col;
    for (std::size_t r = col + 1; r < d; ++r)
      if (std::fabs(ata[r][col]) > std::fabs(ata[pivot][col])) pivot = r;
    std::swap(ata[col], ata[pivot]);
    std::swap(atb[col], atb[pivot]);
    const double diag = ata[col][col];
    if (std::fabs(diag) < 1e-30) continue;
    for (std::size_t r = col + 1; r < d; ++r) {
      const double f = ata[r][col] / diag;
      if (f == 0) continue;
      for (std::size_t c = col; c < d; ++c) ata[r][c] -= f * ata[col][c];
      atb[r] -= f * atb[col];
    }
  }
  for (std::size_t col = d; col-- > 0;) {
    double acc = atb[col];
    for (std::size_t c = col + 1; c < d; ++c) acc -= ata[col][c] * sol[c];
    sol[col] = std::fabs(ata[col][col]) < 1e-30 ? 0.0 : acc / ata[col][col];
  }
  intercept_ = sol[0];
  coef_.assign(sol.begin() + 1, sol.end());
  trained_ = true;
}

double LinearModel::predict(std::span<const double> features) const {
  if (!trained_) throw PredictorError("linear predict: model not trained");
  if (features.size() != coef_.size()) throw PredictorError("linear predict: feature size mismatch");
  double v = intercept_;
  for (std::size_t i = 0; i < coef_.size(); ++i) v += coef_[i] * features[i];
  return std::max(0.0, v);
}

RandomForest::RandomForest(std::uint32_t trees, std::uint32_t max_depth, std::uint64_t seed)
    : n_trees_(trees), max_depth_(max_depth), seed_(seed) {}

std::int32_t RandomForest::build(Tree& tree, std::vector<std::uint32_t>& idx, std::uint32_t lo,
                                 std::uint32_t hi, std::uint32_t depth,
                                 std::span<const std::vector<double>> x,
                                 std::span<const double> y, std::mt19937_64& rng) {
  const std::uint32_t n = hi - lo;
  double sum = 0, sum2 = 0;
  for (std::uint32_t i = lo; i < hi; ++i) {
    sum += y[idx[i]];
    sum2 += y[idx[i]] * y[idx[i]];
  }
  const double mean = sum / n;

  Node node;
  node.value = mean;
  const double var = sum2 / n - mean * mean;
  if (depth >= max_depth_ || n < 4 || var <= 1e-12) {
    tree.nodes.push_back(node);
    return std::int32_t(tree.nodes.size() - 1);
  }

  const std::size_t n_features = x[0].size();
  double best_gain = 0;
  std::int32_t best_feature = -1;
  double best_threshold = 0;
  // Random subspace: consider a shuffled subset of ceil(sqrt(d)) features,
  // exhaustive threshold scan within each.
  std::vector<std::uint32_t> feats(n_features);
  std::iota(feats.begin(), feats.end(), 0);
  std::shuffle(feats.begin(), feats.end(), rng);
  const std::size_t take = std::max<std::size_t>(1, std::size_t(std::ceil(std::sqrt(double(n_features)))));
  std::vector<std::pair<double, double>> pts(n);  // (feature value, target)
  for (std::size_t fi = 0; fi < take; ++fi) {
    const std::uint32_t f = feats[fi];
    for (std::uint32_t i = 0; i < n; ++i)
      pts[i] = {x[idx[lo + i]][f], y[idx[lo + i]]};
    std::sort(pts.begin(), pts.end());
    double left_sum = 0;
    std::uint32_t left_n = 0;
    for (std::uint32_t i = 0; i + 1 < n; ++i) {
      left_sum += pts[i].second;
      ++left_n;
      if (pts[i].first == pts[i + 1].first) continue;
      const double right_sum = sum - left_sum;
      const std::uint32_t right_n = n - left_n;
      // Variance reduction up to constants: maximize sum-of-squares gain.
      const double gain = left_sum * left_sum / left_n + right_sum * right_sum / right_n -
                          sum * sum / n;
      if (gain > best_gain + 1e-12) {
        best_gain = gain;
        best_feature = std::int32_t(f);
        best_threshold = 0.5 * (pts[i].first + pts[i + 1].first);
      }
    }
  }
  if (best_feature < 0) {
    tree.nodes.push_back(node);
    return std::int32_t(tree.nodes.size() - 1);
  }

  const auto mid_it = std::partition(idx.begin() + lo, idx.begin() + hi, [&](std::uint32_t i) {
    return x[i][best_feature] <= best_threshold;
  });
  const auto mid = std::uint32_t(mid_it - idx.begin());
  if (mid == lo || mid == hi) {
    tree.nodes.push_back(node);
    return std::int32_t(tree.nodes.size() - 1);
  }
  node.feature = best_feature;
  node.threshold = best_threshold;
  tree.nodes.push_back(node);
  const auto self = std::int32_t(tree.nodes.size() - 1);
  const std::int32_t left = build(tree, idx, lo, mid, depth + 1, x, y, rng);
  const std::int32_t right = build(tree, idx, mid, hi, depth + 1, x, y, rng);
  tree.nodes[self].left = left;
  tree.nodes[self].right = right;
  return self;
}

void RandomForest::fit(std::span<const std::vector<double>> features,
                       std::span<const double> targets) {
  if (features.size() != targets.size() || features.empty())
    throw PredictorError("forest fit: empty or mismatched training data");
  trees_.clear();
  trees_.reserve(n_trees_);
  std::mt19937_64 rng(seed_);
  const std::uint32_t n = std::uint32_t(features.size());
  std::uniform_int_distribution<std::uint32_t> pick(0, n - 1);
  for (std::uint32_t t = 0; t < n_trees_; ++t) {
    std::vector<std::uint32_t> idx(n);
    for (auto& i : idx) i = pick(rng);  // bootstrap resample
    Tree tree;
    build(tree, idx, 0, n, 0, features, targets, rng);
    trees_.push_back(std::move(tree));
  }
}

double RandomForest::predict_tree(const Tree& tree, std::span<const double> f) const {
  std::int32_t at = 0;  // build() pushes the root before recursing
  while (tree.nodes[at].feature >= 0) {
    const Node& n = tree.nodes[at];
    at = f[n.feature] <= n.threshold ? n.left : n.right;
  }
  return tree.nodes[at].value;
}

double RandomForest::predict(std::span<const double> features) const {
  if (trees_.empty()) throw PredictorError("forest predict: model not trained");
  double acc = 0;
  for (const auto& t : trees_) acc += predict_tree(t, features);
  return std::max(0.0, acc / trees_.size());
}

double relative_error(std::span<const double> observed, std::span<const double> predicted) {
  if (observed.size() != predicted.size())
    throw PredictorError("relative_error: length mismatch");
  if (observed.empty()) throw PredictorError("relative_error: empty inputs");
  double acc = 0;
  for (std::size_t i = 0; i < observed.size(); ++i) {
    if (observed[i] <= 0) throw PredictorError("relative_error: observations must be > 0");
    acc += std::fabs(observed[i] - predicted[i]) / observed[i];
  }
  return acc / double(observed.size());
}

void SampleWindow::add(Sample s) {
  samples_.push_back(std::move(s));
  if (samples_.size() > capacity_) samples_.pop_front();
  ++since_train_;
}

std::vector<std::vector<double>> SampleWindow::features() const {
  std::vector<std::vector<double>> out;
  out.reserve(samples_.size());
  for (const auto& s : samples_) out.push_back(s.features);
  return out;
}

std::vector<double> SampleWindow::targets() const {
  std::vector<double> out;
  out.reserve(samples_.size());
  for (const auto& s : samples_) out.push_back(s.target);
  return out;
}

}  // namespace l3sim
