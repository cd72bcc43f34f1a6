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

#include "fedspa/accountant.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace fedspa {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double log_binom(int n, int k) {
  return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
}

// log(e^x - 1); for large x the -1 is negligible.
double log_expm1(double x) {
  if (x <= 0.0) return -kInf;
  if (x > 36.0) return x;
  return std::log(std::expm1(x));
}

double log_sum_exp(const std::vector<double>& logs) {
  double max_elem = -kInf;
  for (double v : logs) max_elem = std::max(max_elem, v);
  if (!std::isfinite(max_elem)) return max_elem;
  double sum = 0.0;
  for (double v : logs) sum += std::exp(v - max_elem);
  return max_elem + std::log(sum);
}

void check_alpha(int alpha) {
  if (alpha < 2) {
    throw std::invalid_argument("accountant: alpha must be an integer >= 2");
  }
}

}  // namespace

double AccountantParams::phi_sq() const {
  const double b = static_cast<double>(batch_size);
  return 2.0 * p * grad_bound * grad_bound / (b * b);
}

double AccountantParams::sigma_prime_sq() const {
  const double f = phi_sq();
  if (f == 0.0) return kInf;
  return sigma * sigma / f;
}

void AccountantParams::validate() const {
  if (!(q >= 0.0 && q <= 1.0)) {
    throw std::invalid_argument("accountant: q must be in [0, 1]");
  }
  if (batch_size == 0) {
    throw std::invalid_argument("accountant: batch size must be >= 1");
  }
  if (sigma < 0.0) {
    throw std::invalid_argument("accountant: sigma must be >= 0");
  }
  if (!(p > 0.0 && p <= 1.0)) {
    throw std::invalid_argument("accountant: p must be in (0, 1]");
  }
  if (grad_bound < 0.0) {
    throw std::invalid_argument("accountant: gradient bound must be >= 0");
  }
  if (!(delta > 0.0 && delta < 1.0)) {
    throw std::invalid_argument("accountant: delta must be in (0, 1)");
  }
}

double gaussian_rdp(int alpha, double phi_sq, double sigma) {
  check_alpha(alpha);
  if (phi_sq < 0.0) {
    throw std::invalid_argument("gaussian_rdp: phi_sq must be >= 0");
  }
  if (phi_sq == 0.0) return 0.0;
  if (sigma == 0.0) {
    throw InfinitePrivacyLossError(
        "gaussian_rdp: sigma == 0 with positive sensitivity has unbounded "
        "privacy loss");
  }
  return alpha * phi_sq / (2.0 * sigma * sigma);
}

bool closed_form_feasible(int alpha, const AccountantParams& params) {
  check_alpha(alpha);
  params.validate();
  if (params.phi_sq() == 0.0) return true;  // zero sensitivity, zero loss
  const double sp2 = params.sigma_prime_sq();
  if (sp2 < 0.7) return false;
  if (params.q == 0.0) return true;
  const double arg = params.q * alpha * (1.0 + sp2);
  const double scale = params.constraint_scale == ConstraintScale::kSigmaPrimeSq
                           ? sp2
                           : params.sigma * params.sigma;
  const double rhs = (2.0 / 3.0) * scale * std::log(1.0 / arg) + 1.0;
  return alpha <= rhs;
}

std::optional<double> subsampled_rdp_closed(int alpha,
                                            const AccountantParams& params) {
  if (!closed_form_feasible(alpha, params)) return std::nullopt;
  if (params.phi_sq() == 0.0 || params.q == 0.0) return 0.0;
  return 3.5 * params.q * params.q * params.phi_sq() * alpha /
         (params.sigma * params.sigma);
}

double subsampled_rdp_series(int alpha, const AccountantParams& params) {
  check_alpha(alpha);
  params.validate();
  if (params.q == 0.0) return 0.0;
  const double phi2 = params.phi_sq();
  if (phi2 > 0.0 && params.sigma == 0.0) {
    throw InfinitePrivacyLossError(
        "subsampled_rdp_series: sigma == 0 with positive sensitivity");
  }
  const double log_q = std::log(params.q);

  std::vector<double> logs;
  logs.reserve(alpha);
  logs.push_back(0.0);  // the leading 1

  const double rho2 = gaussian_rdp(2, phi2, params.sigma);
  const double min_log = std::min(std::log(4.0) + log_expm1(rho2),
                                  std::log(2.0) + rho2);
  logs.push_back(2.0 * log_q + log_binom(alpha, 2) + min_log);

  for (int j = 3; j <= alpha; ++j) {
    const double rho_j = gaussian_rdp(j, phi2, params.sigma);
    logs.push_back(j * log_q + log_binom(alpha, j) + std::log(2.0) +
                   (j - 1) * rho_j);
  }

  const double log_total = log_sum_exp(logs);
  const double value = log_total / (alpha - 1);
  if (std::isnan(value)) return kInf;
  return value;
}

double compose(double rho_per_step, std::uint64_t steps) {
  if (rho_per_step < 0.0) {
    throw std::invalid_argument("compose: rho must be >= 0");
  }
  return rho_per_step * static_cast<double>(steps);
}

double rdp_to_dp(int alpha, double rho, double delta) {
  check_alpha(alpha);
  if (!(delta > 0.0 && delta < 1.0)) {
    throw std::invalid_argument("rdp_to_dp: delta must be in (0, 1)");
  }
  if (rho < 0.0) {
    throw std::invalid_argument("rdp_to_dp: rho must be >= 0");
  }
  return rho + std::log(1.0 / delta) / (alpha - 1);
}

std::optional<double> epsilon_end_to_end(int alpha,
                                       const AccountantParams& params) {
  if (!closed_form_feasible(alpha, params)) return std::nullopt;
  const double b = static_cast<double>(params.batch_size);
  const double g = params.grad_bound;
  const double iters =
      static_cast<double>(params.participation) * static_cast<double>(params.tau);
  double first = 0.0;
  if (params.sigma > 0.0) {
    first = 7.0 * params.q * params.q * iters * alpha * params.p * g * g /
            (b * b * params.sigma * params.sigma);
  } else {
    // feasible with sigma == 0 only when phi^2 == 0, where the loss is zero
    first = 0.0;
  }
  return first + std::log(1.0 / params.delta) / (alpha - 1);
}

std::optional<AlphaEpsilon> min_epsilon(const AccountantParams& params,
                                        int alpha_max) {
  check_alpha(alpha_max);
  std::optional<AlphaEpsilon> best;
  for (int alpha = 2; alpha <= alpha_max; ++alpha) {
    const auto eps = epsilon_end_to_end(alpha, params);
    if (!eps.has_value()) continue;
    if (!best.has_value() || *eps < best->epsilon) {
      best = AlphaEpsilon{alpha, *eps};
    }
  }
  return best;
}

std::optional<AlphaEpsilon> min_epsilon_series(const AccountantParams& params,
                                               int alpha_max) {
  check_alpha(alpha_max);
  const double steps =
      static_cast<double>(params.participation) * static_cast<double>(params.tau);
  std::optional<AlphaEpsilon> best;
  for (int alpha = 2; alpha <= alpha_max; ++alpha) {
    const double rho = subsampled_rdp_series(alpha, params);
    if (!std::isfinite(rho)) continue;
    const double eps = rho * steps + std::log(1.0 / params.delta) / (alpha - 1);
    if (!best.has_value() || eps < best->epsilon) {
      best = AlphaEpsilon{alpha, eps};
    }
  }
  return best;
}

double calibrate_sigma(double target_epsilon, const AccountantParams& params,
                       int alpha_max, double tolerance, Accounting accounting) {
  check_alpha(alpha_max);
  if (target_epsilon <= 0.0) {
    throw std::invalid_argument("calibrate_sigma: target epsilon must be > 0");
  }
  if (!(tolerance > 0.0)) {
    throw std::invalid_argument("calibrate_sigma: tolerance must be > 0");
  }
  AccountantParams prm = params;
  prm.sigma = 1.0;
  prm.validate();

  const double conversion_floor =
      std::log(1.0 / prm.delta) / (alpha_max - 1);
  if (target_epsilon <= conversion_floor) {
    throw CalibrationError(
        "calibrate_sigma: target below the conversion floor log(1/delta)/"
        "(alpha_max-1) = " + std::to_string(conversion_floor),
        conversion_floor);
  }

  auto eval = [&](double sigma) -> std::optional<double> {
    prm.sigma = sigma;
    const auto best = accounting == Accounting::kClosedForm
                          ? min_epsilon(prm, alpha_max)
                          : min_epsilon_series(prm, alpha_max);
    if (!best.has_value()) return std::nullopt;
    return best->epsilon;
  };

  const double phi = std::sqrt(prm.phi_sq());
  if (phi == 0.0) {
    // zero sensitivity: any noise (none) reaches any target above the floor
    return 0.0;
  }

  // Sweep a geometric sigma grid upward from the smallest admissible noise;
  // epsilon decreases with sigma inside the feasible band, so the first grid
  // point at or under the target brackets the boundary.
  const double sigma_start = std::sqrt(0.7) * phi * 0.999;
  const double growth = 1.05;
  double best_seen = kInf;
  double lo = 0.0;
  double hi = 0.0;
  double prev = sigma_start / growth;
  double s = sigma_start;
  for (int i = 0; i < 2000; ++i) {
    const auto eps = eval(s);
    if (eps.has_value()) {
      best_seen = std::min(best_seen, *eps);
      if (*eps <= target_epsilon) {
        lo = prev;
        hi = s;
        break;
      }
    }
    prev = s;
    s *= growth;
  }
  if (hi == 0.0) {
    throw CalibrationError(
        "calibrate_sigma: target epsilon " + std::to_string(target_epsilon) +
            " unreachable; best achievable epsilon over the searched noise "
            "range is " + std::to_string(best_seen),
        best_seen);
  }

  while (hi > lo * (1.0 + tolerance)) {
    const double mid = std::sqrt(lo * hi);
    const auto eps = eval(mid);
    if (eps.has_value() && *eps <= target_epsilon) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  return hi;
}

RdpCurve gaussian_curve(double phi_sq, double sigma) {
  return [phi_sq, sigma](int alpha) -> std::optional<double> {
    return gaussian_rdp(alpha, phi_sq, sigma);
  };
}

RdpCurve subsampled_closed_curve(AccountantParams params) {
  return [params](int alpha) { return subsampled_rdp_closed(alpha, params); };
}

RdpCurve subsampled_series_curve(AccountantParams params) {
  return [params](int alpha) -> std::optional<double> {
    return subsampled_rdp_series(alpha, params);
  };
}

}  // namespace fedspa
