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

// Test-only reference attention: plain double-precision softmax(q K^T) V.

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

namespace l3sim::test {

inline std::vector<double> reference_softmax(std::span<const double> x) {
  std::vector<double> out(x.size());
  double m = -1e300;
  for (double v : x) m = std::max(m, v);
  double z = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = std::exp(x[i] - m);
    z += out[i];
  }
  for (auto& v : out) v /= z;
  return out;
}

inline std::vector<double> reference_attention(std::span<const double> q,
                                               std::span<const double> k,
                                               std::span<const double> v, std::uint64_t tokens,
                                               std::uint32_t head_dim) {
  std::vector<double> scores(tokens, 0.0);
  for (std::uint64_t t = 0; t < tokens; ++t) {
    double acc = 0;
    for (std::uint32_t j = 0; j < head_dim; ++j) acc += q[j] * k[t * head_dim + j];
    scores[t] = acc;
  }
  const auto s = reference_softmax(scores);
  std::vector<double> out(head_dim, 0.0);
  for (std::uint64_t t = 0; t < tokens; ++t)
    for (std::uint32_t j = 0; j < head_dim; ++j) out[j] += s[t] * v[t * head_dim + j];
  return out;
}

}  // namespace l3sim::test
