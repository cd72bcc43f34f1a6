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

#ifndef FEDSPA_PRIVACY_HPP_
#define FEDSPA_PRIVACY_HPP_

#include <cstdint>

#include "fedspa/rng.hpp"
#include "fedspa/sparsify.hpp"
#include "fedspa/vec.hpp"

namespace fedspa {

// Per-coordinate clipping bound c. The implied global gradient bound is
// G = c * sqrt(d): a vector whose coordinates all sit at the bound has L2
// norm exactly G.
struct ClipSpec {
  double per_coord_bound = 0.0;  // c > 0
  std::uint32_t dim = 0;

  double global_bound() const;  // G = c * sqrt(dim)
};

// Clamps every coordinate of a per-sample gradient to [-c, +c].
// Throws std::domain_error on non-finite input coordinates and
// std::invalid_argument on dimension mismatch or c <= 0.
ParamVector clip_per_sample(const ParamVector& grad, const ClipSpec& spec);

// Squared L2 sensitivity of the masked, batch-averaged gradient:
// phi^2 = 2 p G^2 / B^2. Throws std::invalid_argument unless p in (0, 1],
// G >= 0 and B >= 1.
double l2_sensitivity_sq(double p, double grad_bound, std::uint32_t batch_size);

// Adds independent N(0, sigma^2) noise to the active coordinates only and
// leaves the rest untouched. Exactly k Gaussian values are drawn, in
// ascending index order; sigma == 0 returns the input unchanged without
// consuming the stream.
ParamVector perturb_on_mask(const ParamVector& grad, const SparseMask& mask,
                            double sigma, RngStream& rng);

}  // namespace fedspa

#endif  // FEDSPA_PRIVACY_HPP_
