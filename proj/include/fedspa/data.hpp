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

#ifndef FEDSPA_DATA_HPP_
#define FEDSPA_DATA_HPP_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fedspa/rng.hpp"

namespace fedspa {

// Immutable labeled dataset: N rows of input_dim features with labels in
// [0, num_classes).
struct Dataset {
  std::uint32_t input_dim = 0;
  std::uint32_t num_classes = 0;
  std::vector<double> features;      // row-major, N * input_dim
  std::vector<std::int32_t> labels;  // N

  std::uint32_t size() const {
    return static_cast<std::uint32_t>(labels.size());
  }
  std::span<const double> row(std::uint32_t i) const {
    return {features.data() + static_cast<std::size_t>(i) * input_dim,
            input_dim};
  }
};

// Gaussian class clusters with unit per-coordinate noise and class means a
// fixed `separation` apart. Labels are assigned round-robin, so class counts
// are balanced within one. Deterministic given the seed.
Dataset gen_synthetic(std::uint32_t n_samples, std::uint32_t input_dim,
                      std::uint32_t num_classes, double separation,
                      std::uint64_t seed);

// Loads the big-endian IDX image/label pair (magic 0x00000803 / 0x00000801).
// Pixels are scaled to [0, 1]. Malformed input raises std::runtime_error
// naming the file offset. num_classes defaults to max label + 1 unless
// overridden.
Dataset load_idx(const std::string& images_path, const std::string& labels_path,
                 std::uint32_t num_classes = 0);

// CSV with a header row, label in the first column, features after it.
Dataset load_csv(const std::string& path, std::uint32_t num_classes = 0);

// Disjoint per-agent row index lists.
struct Partition {
  std::vector<std::vector<std::uint32_t>> agent_indices;

  std::uint32_t n_agents() const {
    return static_cast<std::uint32_t>(agent_indices.size());
  }
};

enum class PartitionStrategy { kIid, kLabelShards };

// kIid: a seeded random equal split. kLabelShards: rows sorted by label, cut
// into n_agents*shards_per_agent contiguous shards, and shards dealt to
// agents at random; shards_per_agent controls how non-IID the split is.
Partition make_partition(const Dataset& data, std::uint32_t n_agents,
                         PartitionStrategy strategy,
                         std::uint32_t shards_per_agent, std::uint64_t seed);

// Uniform without-replacement draw of `batch` elements of agent_rows. Fresh
// independent draw on every call; the per-iteration sampling rate is
// batch / agent_rows.size().
std::vector<std::uint32_t> sample_minibatch(
    std::span<const std::uint32_t> agent_rows, std::uint32_t batch,
    RngStream& rng);

}  // namespace fedspa

#endif  // FEDSPA_DATA_HPP_
