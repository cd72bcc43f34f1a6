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

#include "fedspa/privacy.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace fedspa {

double ClipSpec::global_bound() const {
  return per_coord_bound * std::sqrt(static_cast<double>(dim));
}

ParamVector clip_per_sample(const ParamVector& grad, const ClipSpec& spec) {
  if (spec.per_coord_bound <= 0.0) {
    throw std::invalid_argument("clip_per_sample: per_coord_bound must be > 0");
  }
  if (grad.size() != spec.dim) {
    throw std::invalid_argument("clip_per_sample: gradient dimension " +
                                std::to_string(grad.size()) +
                                " != clip dimension " +
                                std::to_string(spec.dim));
  }
  ParamVector out(grad.size());
  const double c = spec.per_coord_bound;
  for (std::size_t j = 0; j < grad.size(); ++j) {
    if (!std::isfinite(grad[j])) {
      throw std::domain_error("clip_per_sample: non-finite coordinate " +
                              std::to_string(j));
    }
    out[j] = std::clamp(grad[j], -c, c);
  }
  return out;
}

double l2_sensitivity_sq(double p, double grad_bound,
                         std::uint32_t batch_size) {
  if (!(p > 0.0 && p <= 1.0)) {
    throw std::invalid_argument("l2_sensitivity_sq: p must be in (0, 1]");
  }
  if (grad_bound < 0.0) {
    throw std::invalid_argument("l2_sensitivity_sq: gradient bound must be >= 0");
  }
  if (batch_size == 0) {
    throw std::invalid_argument("l2_sensitivity_sq: batch size must be >= 1");
  }
  const double b = static_cast<double>(batch_size);
  return 2.0 * p * grad_bound * grad_bound / (b * b);
}

ParamVector perturb_on_mask(const ParamVector& grad, const SparseMask& mask,
                            double sigma, RngStream& rng) {
  if (grad.size() != mask.dim) {
    throw std::invalid_argument("perturb_on_mask: gradient dimension " +
                                std::to_string(grad.size()) +
                                " != mask dimension " +
                                std::to_string(mask.dim));
  }
  if (sigma < 0.0) {
    throw std::invalid_argument("perturb_on_mask: sigma must be >= 0");
  }
  ParamVector out = grad;
  if (sigma == 0.0) return out;
  for (std::uint32_t j : mask.active) out[j] += rng.next_gaussian(sigma);
  return out;
}

}  // namespace fedspa
