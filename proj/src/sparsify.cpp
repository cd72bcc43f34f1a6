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

#include "fedspa/sparsify.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>
#include <string>

namespace fedspa {

SparseMask sample_mask(std::uint32_t dim, std::uint32_t k, RngStream& rng) {
  if (k == 0 || k > dim) {
    throw std::invalid_argument("sample_mask: need 1 <= k <= dim, got k=" +
                                std::to_string(k) + " dim=" +
                                std::to_string(dim));
  }
  std::vector<std::uint32_t> pool(dim);
  std::iota(pool.begin(), pool.end(), 0u);
  // Partial Fisher-Yates: after i swaps the prefix pool[0..i] is a uniform
  // draw without replacement.
  for (std::uint32_t i = 0; i < k; ++i) {
    const std::uint64_t j = i + rng.next_below(dim - i);
    std::swap(pool[i], pool[j]);
  }
  SparseMask mask;
  mask.dim = dim;
  mask.active.assign(pool.begin(), pool.begin() + k);
  std::sort(mask.active.begin(), mask.active.end());
  return mask;
}

namespace {

void check_dim(const SparseMask& mask, const ParamVector& x,
               const char* where) {
  if (x.size() != mask.dim) {
    throw std::invalid_argument(std::string(where) + ": vector dimension " +
                                std::to_string(x.size()) +
                                " != mask dimension " +
                                std::to_string(mask.dim));
  }
}

}  // namespace

ParamVector apply_scaled(const SparseMask& mask, const ParamVector& x) {
  check_dim(mask, x, "apply_scaled");
  ParamVector out(x.size(), 0.0);
  const double p = mask.ratio();
  for (std::uint32_t j : mask.active) out[j] = x[j] / p;
  return out;
}

ParamVector apply_unscaled(const SparseMask& mask, const ParamVector& x) {
  check_dim(mask, x, "apply_unscaled");
  ParamVector out(x.size(), 0.0);
  for (std::uint32_t j : mask.active) out[j] = x[j];
  return out;
}

SparseDelta gather(const SparseMask& mask, const ParamVector& dense) {
  check_dim(mask, dense, "gather");
  SparseDelta delta;
  delta.dim = mask.dim;
  delta.indices = mask.active;
  delta.values.reserve(mask.active.size());
  for (std::uint32_t j : mask.active) delta.values.push_back(dense[j]);
  return delta;
}

}  // namespace fedspa
