// Copyright 2025 The fedspa simulator authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <stdexcept>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "fedspa/models.hpp"
#include "fedspa/rng.hpp"

using namespace fedspa;

namespace {

const ModelSpec kLogReg3{ModelKind::kLogReg, 3, 0, 3};
const ModelSpec kMlp{ModelKind::kMlp1, 2, 3, 2};

ParamVector random_theta(const ModelSpec& spec, RngStream& rng,
                         double scale = 0.5) {
  ParamVector theta(spec.param_dim());
  for (auto& v : theta) v = rng.next_gaussian(scale);
  return theta;
}

Dataset make_random_dataset(const ModelSpec& spec, std::uint32_t n, RngStream& rng) {
  Dataset ds;
  ds.input_dim = spec.input_dim;
  ds.num_classes = spec.num_classes;
  ds.features.resize(static_cast<std::size_t>(n) * spec.input_dim);
  ds.labels.resize(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    for (std::uint32_t f = 0; f < spec.input_dim; ++f) {
      ds.features[i * spec.input_dim + f] = rng.next_gaussian(1.0);
    }
    ds.labels[i] = static_cast<std::int32_t>(rng.next_below(spec.num_classes));
  }
  return ds;
}

}  // namespace

TEST_CASE("param_dim follows the layout") {
  CHECK(kLogReg3.param_dim() == 3 * 3 + 3);
  CHECK(kMlp.param_dim() == 2 * 3 + 3 + 3 * 2 + 2);
  CHECK_THROWS_AS((ModelSpec{ModelKind::kMlp1, 4, 0, 2}).validate(),
                  std::invalid_argument);
  CHECK_THROWS_AS((ModelSpec{ModelKind::kLogReg, 4, 2, 2}).validate(),
                  std::invalid_argument);
  CHECK_THROWS_AS((ModelSpec{ModelKind::kLogReg, 4, 0, 1}).validate(),
                  std::invalid_argument);
}

TEST_CASE("loss at theta 0 is log C") {
  const ParamVector theta(kLogReg3.param_dim(), 0.0);
  const std::vector<double> x{0.4, -1.0, 2.0};
  CHECK(loss(kLogReg3, theta, x, 1) ==
        doctest::Approx(std::log(3.0)).epsilon(1e-12));
  const ParamVector theta_mlp(kMlp.param_dim(), 0.0);
  const std::vector<double> x2{0.3, 0.7};
  CHECK(loss(kMlp, theta_mlp, x2, 0) ==
        doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("loss saturates toward zero with a huge margin") {
  const ModelSpec spec{ModelKind::kLogReg, 1, 0, 2};
  ParamVector theta(spec.param_dim(), 0.0);
  theta[1] = 50.0;  // class-1 weight on the single feature
  CHECK(loss(spec, theta, std::vector<double>{1.0}, 1) < 1e-20);
  CHECK(loss(spec, theta, std::vector<double>{1.0}, 0) > 10.0);
}

TEST_CASE("loss matches an independent reference evaluation") {
  const ParamVector theta{0.10, -0.20, 0.30,  0.05, 0.15, -0.25,
                          -0.30, 0.20, 0.10,  0.01, -0.02, 0.03};
  const std::vector<double> x{0.3, -1.2, 0.8};
  CHECK(std::abs(loss(kLogReg3, theta, x, 2) - 1.3721521342263479) < 1e-10);

  const ParamVector theta_mlp{0.2, -0.1, 0.4, 0.3, -0.5, 0.25,  // W1
                              0.05, -0.05, 0.1,                 // b1
                              0.3, -0.2, 0.15, -0.25, 0.35, 0.1,  // W2
                              0.02, -0.02};                       // b2
  const std::vector<double> x2{0.5, -0.4};
  CHECK(std::abs(loss(kMlp, theta_mlp, x2, 0) - 0.6311937839838152) < 1e-10);
}

TEST_CASE("loss rejects out-of-range labels") {
  const ParamVector theta(kLogReg3.param_dim(), 0.0);
  const std::vector<double> x{0.0, 0.0, 0.0};
  CHECK_THROWS_AS(loss(kLogReg3, theta, x, 3), std::invalid_argument);
  CHECK_THROWS_AS(loss(kLogReg3, theta, x, -1), std::invalid_argument);
}

TEST_CASE("gradient bias block at theta 0 is softmax minus onehot") {
  const ParamVector theta(kLogReg3.param_dim(), 0.0);
  const std::vector<double> x{0.4, -1.0, 2.0};
  const ParamVector g = grad_per_sample(kLogReg3, theta, x, 1);
  const std::size_t bias = 9;
  CHECK(g[bias + 0] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  CHECK(g[bias + 1] == doctest::Approx(1.0 / 3.0 - 1.0).epsilon(1e-12));
  CHECK(g[bias + 2] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("gradient matches the reference fixture") {
  const ParamVector theta{0.10, -0.20, 0.30,  0.05, 0.15, -0.25,
                          -0.30, 0.20, 0.10,  0.01, -0.02, 0.03};
  const std::vector<double> x{0.3, -1.2, 0.8};
  const ParamVector g = grad_per_sample(kLogReg3, theta, x, 2);
  CHECK(std::abs(g[9] - 0.53144682447679792) < 1e-12);
  CHECK(std::abs(g[10] - 0.214992500205857) < 1e-12);
  CHECK(std::abs(g[11] - (-0.74643932468265506)) < 1e-12);
  CHECK(std::abs(g[0] - 0.15943404734303937) < 1e-12);
  CHECK(std::abs(g[1] - (-0.63773618937215748)) < 1e-12);
  CHECK(std::abs(g[2] - 0.42515745958143836) < 1e-12);
}

TEST_CASE("analytic gradients agree with central differences") {
  RngStream rng(2718);
  const double h = 1e-5;
  for (const ModelSpec& spec : {kLogReg3, kMlp}) {
    for (int rep = 0; rep < 100; ++rep) {
      ParamVector theta = random_theta(spec, rng);
      std::vector<double> x(spec.input_dim);
      for (auto& v : x) v = rng.next_gaussian(1.0);
      const std::int32_t label =
          static_cast<std::int32_t>(rng.next_below(spec.num_classes));
      const ParamVector g = grad_per_sample(spec, theta, x, label);
      double num_norm = 0.0, diff_norm = 0.0;
      for (std::size_t j = 0; j < theta.size(); ++j) {
        ParamVector plus = theta, minus = theta;
        plus[j] += h;
        minus[j] -= h;
        const double fd =
            (loss(spec, plus, x, label) - loss(spec, minus, x, label)) /
            (2.0 * h);
        num_norm += fd * fd;
        diff_norm += (fd - g[j]) * (fd - g[j]);
      }
      CHECK(std::sqrt(diff_norm) <=
            1e-5 * std::max(1.0, std::sqrt(num_norm)));
    }
  }
}

TEST_CASE("duplicating a sample leaves the per-sample gradient unchanged") {
  RngStream rng(5);
  const ParamVector theta = random_theta(kLogReg3, rng);
  const std::vector<double> x{1.0, 2.0, -0.5};
  const ParamVector g1 = grad_per_sample(kLogReg3, theta, x, 0);
  const ParamVector g2 = grad_per_sample(kLogReg3, theta, x, 0);
  CHECK(g1 == g2);
}

TEST_CASE("minibatch of identical samples equals the per-sample gradient") {
  RngStream rng(17);
  Dataset ds;
  ds.input_dim = 3;
  ds.num_classes = 3;
  ds.features = {0.5, -0.5, 1.0, 0.5, -0.5, 1.0, 0.5, -0.5, 1.0};
  ds.labels = {2, 2, 2};
  const ParamVector theta = random_theta(kLogReg3, rng);
  const std::vector<std::uint32_t> batch{0, 1, 2};
  const ParamVector mb = minibatch_grad(kLogReg3, theta, ds, batch, std::nullopt);
  const ParamVector g = grad_per_sample(kLogReg3, theta, ds.row(0), 2);
  for (std::size_t j = 0; j < g.size(); ++j) {
    CHECK(mb[j] == doctest::Approx(g[j]).epsilon(1e-12));
  }
}

TEST_CASE("two-sample minibatch is the hand average") {
  const ModelSpec spec{ModelKind::kLogReg, 1, 0, 2};
  Dataset ds;
  ds.input_dim = 1;
  ds.num_classes = 2;
  ds.features = {1.0, -2.0};
  ds.labels = {0, 1};
  const ParamVector theta{0.3, -0.1, 0.05, -0.05};
  const std::vector<std::uint32_t> batch{0, 1};
  const ParamVector mb = minibatch_grad(spec, theta, ds, batch, std::nullopt);
  const ParamVector g0 = grad_per_sample(spec, theta, ds.row(0), 0);
  const ParamVector g1 = grad_per_sample(spec, theta, ds.row(1), 1);
  for (std::size_t j = 0; j < mb.size(); ++j) {
    CHECK(std::abs(mb[j] - 0.5 * (g0[j] + g1[j])) < 1e-12);
  }
}

TEST_CASE("clipped minibatch coordinates respect the bound") {
  RngStream rng(23);
  const Dataset ds = make_random_dataset(kLogReg3, 20, rng);
  const ParamVector theta = random_theta(kLogReg3, rng, 2.0);
  const ClipSpec clip{0.05, kLogReg3.param_dim()};
  std::vector<std::uint32_t> batch{0, 3, 7, 11};
  const ParamVector mb = minibatch_grad(kLogReg3, theta, ds, batch,
                                        std::optional<ClipSpec>(clip));
  for (double v : mb) CHECK(std::abs(v) <= 0.05 + 1e-15);
}

TEST_CASE("empty batches are rejected") {
  const ParamVector theta(kLogReg3.param_dim(), 0.0);
  Dataset ds;
  ds.input_dim = 3;
  ds.num_classes = 3;
  CHECK_THROWS_AS(
      minibatch_grad(kLogReg3, theta, ds, std::vector<std::uint32_t>{},
                     std::nullopt),
      std::invalid_argument);
}

TEST_CASE("logreg loss is convex along random segments") {
  RngStream rng(97);
  const Dataset ds = make_random_dataset(kLogReg3, 10, rng);
  for (int rep = 0; rep < 50; ++rep) {
    const ParamVector a = random_theta(kLogReg3, rng, 1.0);
    const ParamVector b = random_theta(kLogReg3, rng, 1.0);
    ParamVector mid(a.size());
    for (std::size_t j = 0; j < a.size(); ++j) mid[j] = 0.5 * (a[j] + b[j]);
    const double f_mid = dataset_loss(kLogReg3, mid, ds);
    const double f_ends = 0.5 * (dataset_loss(kLogReg3, a, ds) +
                                 dataset_loss(kLogReg3, b, ds));
    CHECK(f_mid <= f_ends + 1e-9);
  }
}

TEST_CASE("model evaluation is deterministic") {
  RngStream rng(123);
  const Dataset ds = make_random_dataset(kMlp, 8, rng);
  const ParamVector theta = random_theta(kMlp, rng);
  const double l1 = dataset_loss(kMlp, theta, ds);
  const double l2 = dataset_loss(kMlp, theta, ds);
  CHECK(l1 == l2);
  const ParamVector g1 = grad_per_sample(kMlp, theta, ds.row(0), ds.labels[0]);
  const ParamVector g2 = grad_per_sample(kMlp, theta, ds.row(0), ds.labels[0]);
  CHECK(g1 == g2);
}
