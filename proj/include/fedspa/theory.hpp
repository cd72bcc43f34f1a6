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
//
// Calculator for the convergence-bound quantities of the averaged-gradient
// analysis. All big-O constants are fixed to 1: this module is a trend
// calculator for bound-vs-empirical comparisons, not a certified bound.
//
// The calculator models full participation. Partial participation adds a
// dissimilarity variance term scaled by (1 - r/n) that is not evaluated
// here.

#ifndef FEDSPA_THEORY_HPP_
#define FEDSPA_THEORY_HPP_

#include <cstdint>

#include "fedspa/data.hpp"
#include "fedspa/models.hpp"

namespace fedspa {

struct TheoryConstants {
  double smoothness = 1.0;        // L
  double grad_bound = 1.0;        // G
  double zeta_l = 0.0;            // local gradient-variance bound
  double zeta_g = 0.0;            // global dissimilarity bound
  double f0_minus_fstar = 1.0;    // initial optimality gap
  double eta_l = 0.1;
  double eta_g = 1.0;
  std::uint32_t tau = 1;
  std::uint32_t rounds = 1;       // T
  std::uint32_t n_agents = 1;
  double p = 1.0;
  std::uint32_t dim = 1;          // d
  double sigma = 0.0;
  double kappa = 1e-3;
  double beta2 = 0.99;

  void validate() const;  // throws std::invalid_argument
};

// Effective per-step gradient variance under sparsification and noise:
//   zeta_dp^2 = (G^2 + zeta_l^2) / p + p d sigma^2.
// Convex in p; its interior minimizer is the utility-optimal compression
// ratio.
double dp_gradient_variance(const TheoryConstants& c);

// Interior stationary point sqrt(G^2 + zeta_l^2) / (sigma sqrt(d)) of
// dp_gradient_variance over p, clamped to (0, 1]. Requires sigma > 0.
double optimal_compression_ratio(const TheoryConstants& c);

struct ConvergenceBound {
  double xi = 0.0;
  double xi_prime = 0.0;
  double bound = 0.0;   // (sqrt(beta2) eta_l tau G / sqrt(d) + kappa)(xi + xi')
  bool stepsize_ok = true;  // eta_l satisfies the analysis cap
};

// Evaluates
//   xi  = (f0 - f*) / (eta_l eta_g tau T)
//       + (5 eta_l^2 tau L^2 / (2 kappa)) (zeta_dp^2 + 6 tau zeta_g^2)
//   xi' = (eta_g L / 2 + G / sqrt(d)) [ (4 eta_l / (n kappa^2)) zeta_dp^2
//       + (20 eta_l^3 tau^2 L^2 / kappa^2) (zeta_dp^2 + 6 tau zeta_g^2) ]
// and the combined bound. stepsize_ok flags (without failing) whether
//   eta_l <= min{ 1/(8 L tau),
//                 (1/(8 tau)) min{ kappa sqrt(d)/G,
//                                  sqrt(kappa^2 sqrt(d)/(G eta_g L)) } }.
ConvergenceBound convergence_bound(const TheoryConstants& c);

// Four-term rate at the reference parameter choices
// eta_l ~ 1/(L tau sqrt(T)), eta_g ~ sqrt(n tau), kappa = G/(sqrt(d) L):
//   (f0 - f*)/sqrt(n tau T) + 2 zeta_dp^2 L / (G^2 sqrt(n tau T))
//   + (zeta_dp^2 + 6 tau zeta_g^2)/(G tau T)
//   + (zeta_dp^2 + 6 tau zeta_g^2) L sqrt(n) / (G^2 sqrt(tau) T^{3/2}).
double reference_rate(const TheoryConstants& c);

// Heuristic estimators for constants the bound needs. Rough by design; they
// exist so the calculator can be fed from data instead of guesses.

// Largest Hessian eigenvalue of the mean logreg loss at theta, by power
// iteration on finite-difference Hessian-vector products.
double estimate_smoothness_logreg(const ModelSpec& spec, const ParamVector& theta,
                                  const Dataset& data, std::uint32_t iters = 30,
                                  std::uint64_t seed = 1);

// Sampled bound on E||g_batch - grad f||^2 at theta (local variance).
double estimate_local_variance(const ModelSpec& spec, const ParamVector& theta,
                               const Dataset& data, std::uint32_t batch,
                               std::uint32_t draws, std::uint64_t seed);

}  // namespace fedspa

#endif  // FEDSPA_THEORY_HPP_
