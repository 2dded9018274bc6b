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
#include "l3sim/predictor.hpp"

using namespace l3sim;

TEST_CASE("linear model recovers planted coefficients") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0, 100);
  std::vector<std::vector<double>> x;
  std::vector<double> y;
  for (int i = 0; i < 200; ++i) {
    const double a = u(rng), b = u(rng), c = u(rng);
    x.push_back({a, b, c});
    y.push_back(7.0 + 2.5 * a + 0.5 * b + 11.0 * c);
  }
  LinearModel m;
  m.fit(x, y);
  CHECK(m.intercept() == doctest::Approx(7.0).epsilon(1e-6));
  CHECK(m.coefficients()[0] == doctest::Approx(2.5).epsilon(1e-6));
  CHECK(m.coefficients()[1] == doctest::Approx(0.5).epsilon(1e-6));
  CHECK(m.coefficients()[2] == doctest::Approx(11.0).epsilon(1e-6));
  const std::vector<double> probe{10.0, 20.0, 30.0};
  CHECK(m.predict(probe) == doctest::Approx(7 + 25 + 10 + 330));
}

TEST_CASE("linear predictions clamp at zero") {
  LinearModel m;
  m.fit(std::vector<std::vector<double>>{{0.0}, {1.0}, {2.0}},
        std::vector<double>{0.0, -10.0, -20.0});
  const std::vector<double> probe{5.0};
  CHECK(m.predict(probe) == 0.0);
}

TEST_CASE("forest fits a piecewise function within window bounds") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0, 10);
  std::vector<std::vector<double>> x;
  std::vector<double> y;
  double lo = 1e300, hi = -1e300;
  for (int i = 0; i < 400; ++i) {
    const double a = u(rng), b = u(rng);
    x.push_back({a, b});
    const double target = (a < 5 ? 100.0 : 300.0) + 10.0 * b;
    y.push_back(target);
    lo = std::min(lo, target);
    hi = std::max(hi, target);
  }
  RandomForest f(32, 8, 7);
  f.fit(x, y);
  double err = 0;
  for (int i = 0; i < 400; ++i) {
    const double p = f.predict(x[i]);
    CHECK(std::isfinite(p));
    CHECK(p >= lo / 1.5);
    CHECK(p <= hi * 1.5);
    err += std::fabs(p - y[i]) / y[i];
  }
  CHECK(err / 400 < 0.10);
}

TEST_CASE("relative error formula") {
  CHECK(relative_error(std::vector<double>{5, 5}, std::vector<double>{5, 5}) == 0.0);
  CHECK(relative_error(std::vector<double>{100}, std::vector<double>{90}) ==
        doctest::Approx(0.10));
  CHECK(relative_error(std::vector<double>{100, 200}, std::vector<double>{110, 180}) ==
        doctest::Approx(0.10));
  CHECK_THROWS_AS(relative_error(std::vector<double>{1, 2}, std::vector<double>{1}),
                  PredictorError);
  CHECK_THROWS_AS(relative_error(std::vector<double>{0.0}, std::vector<double>{1.0}),
                  PredictorError);
}

TEST_CASE("sample window evicts the oldest at capacity") {
  SampleWindow w(4);
  for (int i = 0; i < 10; ++i) w.add({{double(i)}, double(i)});
  CHECK(w.size() == 4);
  const auto t = w.targets();
  CHECK(t.front() == 6.0);
  CHECK(t.back() == 9.0);
}

TEST_CASE("drift: refit tracks a changed regime") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(1, 50);
  SampleWindow w(128);
  LinearModel m;
  // Regime one: slope 2.
  for (int i = 0; i < 128; ++i) {
    const double a = u(rng);
    w.add({{a}, 2.0 * a});
  }
  m.fit(w.features(), w.targets());
  const std::vector<double> ten{10.0};
  CHECK(m.predict(ten) == doctest::Approx(20.0).epsilon(1e-6));
  // Regime two: slope 6; after the window turns over twice, error recovers.
  for (int cycle = 0; cycle < 2; ++cycle) {
    for (int i = 0; i < 128; ++i) {
      const double a = u(rng);
      w.add({{a}, 6.0 * a});
    }
    m.fit(w.features(), w.targets());
  }
  std::vector<double> obs, pred;
  for (int i = 0; i < 50; ++i) {
    const double a = u(rng);
    obs.push_back(6.0 * a);
    const std::vector<double> fa{a};
    pred.push_back(m.predict(fa));
  }
  CHECK(relative_error(obs, pred) < 0.05);
}
