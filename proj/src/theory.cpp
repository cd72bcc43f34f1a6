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

#include "fedspa/theory.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace fedspa {

void TheoryConstants::validate() const {
  if (smoothness < 0.0 || grad_bound < 0.0 || zeta_l < 0.0 || zeta_g < 0.0 ||
      f0_minus_fstar < 0.0 || sigma < 0.0) {
    throw std::invalid_argument("theory: constants must be nonnegative");
  }
  if (!(p > 0.0 && p <= 1.0)) {
    throw std::invalid_argument("theory: p must be in (0, 1]");
  }
  if (eta_l <= 0.0 || eta_g <= 0.0 || kappa <= 0.0) {
    throw std::invalid_argument("theory: eta_l, eta_g, kappa must be > 0");
  }
  if (tau == 0 || rounds == 0 || n_agents == 0 || dim == 0) {
    throw std::invalid_argument("theory: tau, T, n, d must be >= 1");
  }
  if (!(beta2 >= 0.0 && beta2 < 1.0)) {
    throw std::invalid_argument("theory: beta2 must be in [0, 1)");
  }
}

double dp_gradient_variance(const TheoryConstants& c) {
  c.validate();
  const double g2 = c.grad_bound * c.grad_bound;
  const double zl2 = c.zeta_l * c.zeta_l;
  return (g2 + zl2) / c.p +
         c.p * static_cast<double>(c.dim) * c.sigma * c.sigma;
}

double optimal_compression_ratio(const TheoryConstants& c) {
  c.validate();
  if (c.sigma <= 0.0) {
    throw std::invalid_argument(
        "optimal_compression_ratio: needs sigma > 0 (otherwise p = 1)");
  }
  const double g2 = c.grad_bound * c.grad_bound;
  const double zl2 = c.zeta_l * c.zeta_l;
  const double p_star =
      std::sqrt(g2 + zl2) / (c.sigma * std::sqrt(static_cast<double>(c.dim)));
  return std::min(p_star, 1.0);
}

ConvergenceBound convergence_bound(const TheoryConstants& c) {
  c.validate();
  const double d = static_cast<double>(c.dim);
  const double t_rounds = static_cast<double>(c.rounds);
  const double tau = static_cast<double>(c.tau);
  const double n = static_cast<double>(c.n_agents);
  const double l = c.smoothness;
  const double g = c.grad_bound;
  const double sqrt_d = std::sqrt(d);
  const double zdp2 = dp_gradient_variance(c);
  const double drift = zdp2 + 6.0 * tau * c.zeta_g * c.zeta_g;

  ConvergenceBound out;
  out.xi = c.f0_minus_fstar / (c.eta_l * c.eta_g * tau * t_rounds) +
           (5.0 * c.eta_l * c.eta_l * tau * l * l / (2.0 * c.kappa)) * drift;
  out.xi_prime =
      (c.eta_g * l / 2.0 + g / sqrt_d) *
      ((4.0 * c.eta_l / (n * c.kappa * c.kappa)) * zdp2 +
       (20.0 * std::pow(c.eta_l, 3) * tau * tau * l * l / (c.kappa * c.kappa)) *
           drift);
  out.bound = (std::sqrt(c.beta2) * c.eta_l * tau * g / sqrt_d + c.kappa) *
              (out.xi + out.xi_prime);

  double cap = std::numeric_limits<double>::infinity();
  if (l > 0.0) cap = 1.0 / (8.0 * l * tau);
  if (g > 0.0) {
    double inner = c.kappa * sqrt_d / g;
    if (l > 0.0) {
      inner = std::min(inner,
                       std::sqrt(c.kappa * c.kappa * sqrt_d / (g * c.eta_g * l)));
    }
    cap = std::min(cap, inner / (8.0 * tau));
  }
  out.stepsize_ok = c.eta_l <= cap;
  return out;
}

double reference_rate(const TheoryConstants& c) {
  c.validate();
  if (c.grad_bound <= 0.0) {
    throw std::invalid_argument("reference_rate: needs G > 0");
  }
  const double tau = static_cast<double>(c.tau);
  const double t_rounds = static_cast<double>(c.rounds);
  const double n = static_cast<double>(c.n_agents);
  const double l = c.smoothness;
  const double g2 = c.grad_bound * c.grad_bound;
  const double zdp2 = dp_gradient_variance(c);
  const double drift = zdp2 + 6.0 * tau * c.zeta_g * c.zeta_g;
  const double sqrt_ntt = std::sqrt(n * tau * t_rounds);

  return c.f0_minus_fstar / sqrt_ntt + 2.0 * zdp2 * l / (g2 * sqrt_ntt) +
         drift / (c.grad_bound * tau * t_rounds) +
         drift * l * std::sqrt(n) /
             (g2 * std::sqrt(tau) * std::pow(t_rounds, 1.5));
}

double estimate_smoothness_logreg(const ModelSpec& spec,
                                  const ParamVector& theta, const Dataset& data,
                                  std::uint32_t iters, std::uint64_t seed) {
  spec.validate();
  const std::uint32_t d = spec.param_dim();
  RngStream rng(derive_seed(seed, 0x736d6f6f));
  ParamVector v(d);
  double norm = 0.0;
  for (double& x : v) {
    x = rng.next_gaussian(1.0);
    norm += x * x;
  }
  norm = std::sqrt(norm);
  for (double& x : v) x /= norm;

  auto full_grad = [&](const ParamVector& at) {
    ParamVector g(d, 0.0);
    for (std::uint32_t i = 0; i < data.size(); ++i) {
      const ParamVector gi = grad_per_sample(spec, at, data.row(i), data.labels[i]);
      for (std::uint32_t j = 0; j < d; ++j) g[j] += gi[j];
    }
    for (double& x : g) x /= data.size();
    return g;
  };

  const double h = 1e-4;
  double eigen = 0.0;
  for (std::uint32_t it = 0; it < iters; ++it) {
    // Hessian-vector product by central differences of the full gradient
    ParamVector plus = theta;
    ParamVector minus = theta;
    axpy(h, v, plus);
    axpy(-h, v, minus);
    const ParamVector gp = full_grad(plus);
    const ParamVector gm = full_grad(minus);
    ParamVector hv(d);
    double hv_norm = 0.0;
    for (std::uint32_t j = 0; j < d; ++j) {
      hv[j] = (gp[j] - gm[j]) / (2.0 * h);
      hv_norm += hv[j] * hv[j];
    }
    hv_norm = std::sqrt(hv_norm);
    if (hv_norm == 0.0) return 0.0;
    eigen = hv_norm;
    for (std::uint32_t j = 0; j < d; ++j) v[j] = hv[j] / hv_norm;
  }
  return eigen;
}

double estimate_local_variance(const ModelSpec& spec, const ParamVector& theta,
                               const Dataset& data, std::uint32_t batch,
                               std::uint32_t draws, std::uint64_t seed) {
  spec.validate();
  if (draws == 0) {
    throw std::invalid_argument("estimate_local_variance: draws must be >= 1");
  }
  const std::uint32_t d = spec.param_dim();
  std::vector<std::uint32_t> all(data.size());
  for (std::uint32_t i = 0; i < data.size(); ++i) all[i] = i;

  ParamVector mean(d, 0.0);
  for (std::uint32_t i = 0; i < data.size(); ++i) {
    const ParamVector gi = grad_per_sample(spec, theta, data.row(i), data.labels[i]);
    for (std::uint32_t j = 0; j < d; ++j) mean[j] += gi[j];
  }
  for (double& x : mean) x /= data.size();

  RngStream rng(derive_seed(seed, 0x76617269));
  double acc = 0.0;
  for (std::uint32_t r = 0; r < draws; ++r) {
    const auto idx = sample_minibatch(all, batch, rng);
    const ParamVector g = minibatch_grad(spec, theta, data, idx, std::nullopt);
    double dist = 0.0;
    for (std::uint32_t j = 0; j < d; ++j) {
      dist += (g[j] - mean[j]) * (g[j] - mean[j]);
    }
    acc += dist;
  }
  return acc / draws;
}

}  // namespace fedspa
