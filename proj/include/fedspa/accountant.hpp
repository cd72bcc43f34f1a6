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
// Renyi-DP accountant for the subsampled Gaussian mechanism with masked
// (sparsified) gradients. All privacy arithmetic lives here: per-step RDP,
// subsampling amplification (closed form and general series), additive
// composition, RDP -> (epsilon, delta) conversion, the end-to-end epsilon
// with optimal-order search, and the inverse noise calibration.
//
// Infeasibility is a first-class return value (std::nullopt), never a NaN or
// infinity smuggled into an epsilon report.

#ifndef FEDSPA_ACCOUNTANT_HPP_
#define FEDSPA_ACCOUNTANT_HPP_

#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>

namespace fedspa {

// Signalled when a mechanism with positive sensitivity carries no noise:
// the privacy loss is unbounded and must not be reported as a number.
class InfinitePrivacyLossError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Signalled when no noise level can reach the requested privacy target.
class CalibrationError : public std::runtime_error {
 public:
  CalibrationError(const std::string& what, double min_achievable)
      : std::runtime_error(what), min_achievable_(min_achievable) {}

  // Smallest epsilon seen anywhere in the searched noise range; infinity if
  // no noise level was feasible at all.
  double min_achievable_epsilon() const { return min_achievable_; }

 private:
  double min_achievable_;
};

// The alpha feasibility cap of the closed-form subsampled bound multiplies a
// log term by a noise-variance factor. The normalized variance
// sigma'^2 = sigma^2 / phi^2 is the default; the raw sigma^2 reading is kept
// available behind this switch because printed statements of the cap are
// ambiguous between the two.
enum class ConstraintScale { kSigmaPrimeSq, kRawSigmaSq };

struct AccountantParams {
  double q = 0.0;            // per-iteration sampling rate B/m
  std::uint32_t batch_size = 1;  // B
  double sigma = 0.0;        // per-coordinate Gaussian noise std
  double p = 1.0;            // compression ratio k/d
  double grad_bound = 1.0;   // G, the global clipped-gradient bound
  std::uint64_t tau = 1;     // local iterations per round
  std::uint64_t participation = 0;  // I, rounds the agent took part in
  double delta = 1e-3;       // failure probability
  ConstraintScale constraint_scale = ConstraintScale::kSigmaPrimeSq;

  // phi^2 = 2 p G^2 / B^2, the squared sensitivity of one masked step.
  double phi_sq() const;

  // sigma'^2 = sigma^2 / phi^2 (infinite when phi^2 == 0).
  double sigma_prime_sq() const;

  // Throws std::invalid_argument on out-of-range fields.
  void validate() const;
};

// Mapping from integer Renyi order alpha >= 2 to the RDP cost rho(alpha);
// std::nullopt marks an infeasible order.
using RdpCurve = std::function<std::optional<double>(int)>;

// Gaussian mechanism: rho(alpha) = alpha * phi^2 / (2 sigma^2).
// Throws InfinitePrivacyLossError when sigma == 0 and phi^2 > 0.
double gaussian_rdp(int alpha, double phi_sq, double sigma);

// Closed-form subsampled Gaussian bound: 3.5 q^2 phi^2 alpha / sigma^2,
// valid when sigma'^2 >= 0.7 and
//   alpha <= (2/3) * S * log(1 / (q alpha (1 + sigma'^2))) + 1,
// with S = sigma'^2 (default) or sigma^2 per params.constraint_scale.
// Returns std::nullopt outside that regime.
std::optional<double> subsampled_rdp_closed(int alpha,
                                            const AccountantParams& params);

// Whether (alpha, params) satisfies the closed-form validity conditions.
bool closed_form_feasible(int alpha, const AccountantParams& params);

// General series bound for the subsampled mechanism:
//   (1/(alpha-1)) * log(1 + q^2 C(alpha,2) min{4(e^rho(2)-1), 2 e^rho(2)}
//                         + sum_{j=3..alpha} q^j C(alpha,j) 2 e^{(j-1) rho(j)})
// with rho(j) the Gaussian cost above. Evaluated in log space; returns
// +infinity if the value is not representable.
double subsampled_rdp_series(int alpha, const AccountantParams& params);

// Additive composition: steps repetitions at fixed alpha.
double compose(double rho_per_step, std::uint64_t steps);

// (alpha, rho)-RDP implies (rho + log(1/delta)/(alpha-1), delta)-DP.
// Throws std::invalid_argument unless delta is in (0, 1).
double rdp_to_dp(int alpha, double rho, double delta);

// End-to-end epsilon at a fixed order:
//   epsilon = 7 q^2 I tau alpha p G^2 / (B^2 sigma^2) + log(1/delta)/(alpha-1),
// i.e. the closed-form per-step bound composed over I*tau steps and converted
// to (epsilon, delta)-DP. std::nullopt when the order is infeasible.
std::optional<double> epsilon_end_to_end(int alpha,
                                       const AccountantParams& params);

struct AlphaEpsilon {
  int alpha = 0;
  double epsilon = 0.0;
};

// Scans integer orders alpha in [2, alpha_max], keeps the feasible ones and
// returns the order with the smallest epsilon (ties break toward smaller
// alpha). std::nullopt when no order is feasible; raise sigma or lower q.
std::optional<AlphaEpsilon> min_epsilon(const AccountantParams& params,
                                        int alpha_max);

// Same scan against the series bound, which has no feasibility cap.
std::optional<AlphaEpsilon> min_epsilon_series(const AccountantParams& params,
                                               int alpha_max);

enum class Accounting { kClosedForm, kSeries };

// Smallest sigma (within multiplicative `tolerance`) whose optimal-order
// epsilon is <= target_epsilon. params.sigma is ignored. Exploits the
// monotonicity of epsilon in sigma inside the feasible noise band; throws
// CalibrationError with the best achievable epsilon when the target cannot
// be reached anywhere.
double calibrate_sigma(double target_epsilon, const AccountantParams& params,
                       int alpha_max, double tolerance = 1e-3,
                       Accounting accounting = Accounting::kClosedForm);

// Curve views used by tests and the CLI.
RdpCurve gaussian_curve(double phi_sq, double sigma);
RdpCurve subsampled_closed_curve(AccountantParams params);
RdpCurve subsampled_series_curve(AccountantParams params);

}  // namespace fedspa

#endif  // FEDSPA_ACCOUNTANT_HPP_
