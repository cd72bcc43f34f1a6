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

#ifndef FEDSPA_SPARSIFY_HPP_
#define FEDSPA_SPARSIFY_HPP_

#include <cstdint>
#include <vector>

#include "fedspa/rng.hpp"
#include "fedspa/vec.hpp"

namespace fedspa {

// Active coordinate set of one random-k sparsifier instance. Indices are
// sorted, distinct and in [0, dim); 1 <= k <= dim.
struct SparseMask {
  std::uint32_t dim = 0;
  std::vector<std::uint32_t> active;

  std::uint32_t k() const { return static_cast<std::uint32_t>(active.size()); }

  // Compression ratio p = k/d in (0, 1].
  double ratio() const { return static_cast<double>(active.size()) / dim; }
};

// Uniform draw from all C(dim, k) index subsets via a partial Fisher-Yates
// shuffle, O(dim). Deterministic given the stream state.
// Throws std::invalid_argument unless 1 <= k <= dim.
SparseMask sample_mask(std::uint32_t dim, std::uint32_t k, RngStream& rng);

// Keeps the active coordinates of x scaled by 1/p, zeros the rest. The
// scaling makes the sparsified vector an unbiased estimate of x.
ParamVector apply_scaled(const SparseMask& mask, const ParamVector& x);

// Keeps the active coordinates of x unchanged, zeros the rest.
ParamVector apply_unscaled(const SparseMask& mask, const ParamVector& x);

// Wire form of a sparse model update: (k, sorted u32 indices, f64 values).
// Used by the communication cost meter and the round transcript dump.
struct SparseDelta {
  std::uint32_t dim = 0;
  std::vector<std::uint32_t> indices;
  std::vector<double> values;

  // Serialized payload size: a u32 count plus (u32 index, f64 value) pairs.
  double encoded_bits() const { return 32.0 + 96.0 * indices.size(); }
};

// Gathers the masked coordinates of a dense vector into wire form.
SparseDelta gather(const SparseMask& mask, const ParamVector& dense);

}  // namespace fedspa

#endif  // FEDSPA_SPARSIFY_HPP_
