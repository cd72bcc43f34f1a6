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

#include "fedspa/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace fedspa {

namespace {

constexpr std::uint64_t kSyntheticTag = 0x64617461;  // stream label

std::vector<double> unit_direction(std::uint32_t dim, RngStream& rng) {
  std::vector<double> u(dim);
  double norm = 0.0;
  do {
    norm = 0.0;
    for (double& v : u) {
      v = rng.next_gaussian(1.0);
      norm += v * v;
    }
  } while (norm == 0.0);
  norm = std::sqrt(norm);
  for (double& v : u) v /= norm;
  return u;
}

}  // namespace

Dataset gen_synthetic(std::uint32_t n_samples, std::uint32_t input_dim,
                      std::uint32_t num_classes, double separation,
                      std::uint64_t seed) {
  if (input_dim == 0 || num_classes < 2) {
    throw std::invalid_argument("gen_synthetic: need input_dim >= 1 and "
                                "num_classes >= 2");
  }
  if (n_samples < num_classes) {
    throw std::invalid_argument("gen_synthetic: need n_samples >= num_classes");
  }
  if (separation < 0.0) {
    throw std::invalid_argument("gen_synthetic: separation must be >= 0");
  }
  RngStream rng(derive_seed(seed, kSyntheticTag));

  // Class means `separation` apart: exactly antipodal for two classes,
  // random directions of norm separation/sqrt(2) otherwise.
  std::vector<std::vector<double>> means(num_classes,
                                         std::vector<double>(input_dim, 0.0));
  if (num_classes == 2) {
    const std::vector<double> u = unit_direction(input_dim, rng);
    for (std::uint32_t f = 0; f < input_dim; ++f) {
      means[0][f] = -0.5 * separation * u[f];
      means[1][f] = 0.5 * separation * u[f];
    }
  } else {
    const double scale = separation / std::sqrt(2.0);
    for (auto& m : means) {
      const std::vector<double> u = unit_direction(input_dim, rng);
      for (std::uint32_t f = 0; f < input_dim; ++f) m[f] = scale * u[f];
    }
  }

  Dataset ds;
  ds.input_dim = input_dim;
  ds.num_classes = num_classes;
  ds.features.resize(static_cast<std::size_t>(n_samples) * input_dim);
  ds.labels.resize(n_samples);
  for (std::uint32_t i = 0; i < n_samples; ++i) {
    const std::int32_t label = static_cast<std::int32_t>(i % num_classes);
    ds.labels[i] = label;
    double* row = ds.features.data() + static_cast<std::size_t>(i) * input_dim;
    for (std::uint32_t f = 0; f < input_dim; ++f) {
      row[f] = means[label][f] + rng.next_gaussian(1.0);
    }
  }
  return ds;
}

namespace {

std::vector<unsigned char> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  return bytes;
}

std::uint32_t read_u32_be(const std::vector<unsigned char>& b,
                          std::size_t offset, const std::string& path) {
  if (offset + 4 > b.size()) {
    throw std::runtime_error(path + ": truncated at offset " +
                             std::to_string(offset));
  }
  return (static_cast<std::uint32_t>(b[offset]) << 24) |
         (static_cast<std::uint32_t>(b[offset + 1]) << 16) |
         (static_cast<std::uint32_t>(b[offset + 2]) << 8) |
         static_cast<std::uint32_t>(b[offset + 3]);
}

}  // namespace

Dataset load_idx(const std::string& images_path, const std::string& labels_path,
                 std::uint32_t num_classes) {
  const auto img = read_file(images_path);
  const auto lab = read_file(labels_path);

  const std::uint32_t img_magic = read_u32_be(img, 0, images_path);
  if (img_magic != 0x00000803u) {
    throw std::runtime_error(images_path + ": bad magic at offset 0, expected "
                             "0x00000803");
  }
  const std::uint32_t lab_magic = read_u32_be(lab, 0, labels_path);
  if (lab_magic != 0x00000801u) {
    throw std::runtime_error(labels_path + ": bad magic at offset 0, expected "
                             "0x00000801");
  }
  const std::uint32_t n_img = read_u32_be(img, 4, images_path);
  const std::uint32_t rows = read_u32_be(img, 8, images_path);
  const std::uint32_t cols = read_u32_be(img, 12, images_path);
  const std::uint32_t n_lab = read_u32_be(lab, 4, labels_path);
  if (n_img != n_lab) {
    throw std::runtime_error("idx: image count " + std::to_string(n_img) +
                             " != label count " + std::to_string(n_lab));
  }
  const std::size_t pixels = static_cast<std::size_t>(n_img) * rows * cols;
  if (img.size() != 16 + pixels) {
    throw std::runtime_error(images_path + ": expected " +
                             std::to_string(16 + pixels) + " bytes, got " +
                             std::to_string(img.size()) +
                             " (truncated at offset 16)");
  }
  if (lab.size() != 8 + n_lab) {
    throw std::runtime_error(labels_path + ": expected " +
                             std::to_string(8 + n_lab) + " bytes, got " +
                             std::to_string(lab.size()) +
                             " (truncated at offset 8)");
  }

  Dataset ds;
  ds.input_dim = rows * cols;
  ds.features.resize(pixels);
  ds.labels.resize(n_img);
  for (std::size_t i = 0; i < pixels; ++i) {
    ds.features[i] = static_cast<double>(img[16 + i]) / 255.0;
  }
  std::int32_t max_label = 0;
  for (std::uint32_t i = 0; i < n_img; ++i) {
    ds.labels[i] = static_cast<std::int32_t>(lab[8 + i]);
    max_label = std::max(max_label, ds.labels[i]);
  }
  ds.num_classes = num_classes != 0
                       ? num_classes
                       : std::max<std::uint32_t>(2, max_label + 1);
  if (max_label >= static_cast<std::int32_t>(ds.num_classes)) {
    throw std::runtime_error(labels_path + ": label " +
                             std::to_string(max_label) +
                             " >= num_classes " +
                             std::to_string(ds.num_classes));
  }
  return ds;
}

Dataset load_csv(const std::string& path, std::uint32_t num_classes) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) {
    throw std::runtime_error(path + ": missing header row");
  }
  Dataset ds;
  std::size_t line_no = 1;
  std::int32_t max_label = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string field;
    std::vector<double> row;
    bool first = true;
    std::int32_t label = 0;
    while (std::getline(ss, field, ',')) {
      try {
        if (first) {
          label = static_cast<std::int32_t>(std::stol(field));
          first = false;
        } else {
          const double v = std::stod(field);
          if (!std::isfinite(v)) throw std::out_of_range("non-finite");
          row.push_back(v);
        }
      } catch (const std::exception&) {
        throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                 ": cannot parse field '" + field + "'");
      }
    }
    if (first) continue;  // all-comma or whitespace line
    if (label < 0) {
      throw std::runtime_error(path + ":" + std::to_string(line_no) +
                               ": negative label");
    }
    if (ds.input_dim == 0) {
      ds.input_dim = static_cast<std::uint32_t>(row.size());
      if (ds.input_dim == 0) {
        throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                 ": row has no feature columns");
      }
    } else if (row.size() != ds.input_dim) {
      throw std::runtime_error(path + ":" + std::to_string(line_no) +
                               ": expected " + std::to_string(ds.input_dim) +
                               " features, got " + std::to_string(row.size()));
    }
    ds.features.insert(ds.features.end(), row.begin(), row.end());
    ds.labels.push_back(label);
    max_label = std::max(max_label, label);
  }
  if (ds.labels.empty()) {
    throw std::runtime_error(path + ": no data rows");
  }
  ds.num_classes = num_classes != 0
                       ? num_classes
                       : std::max<std::uint32_t>(2, max_label + 1);
  if (max_label >= static_cast<std::int32_t>(ds.num_classes)) {
    throw std::runtime_error(path + ": label " + std::to_string(max_label) +
                             " >= num_classes " +
                             std::to_string(ds.num_classes));
  }
  return ds;
}

Partition make_partition(const Dataset& data, std::uint32_t n_agents,
                         PartitionStrategy strategy,
                         std::uint32_t shards_per_agent, std::uint64_t seed) {
  const std::uint32_t n = data.size();
  if (n_agents == 0 || n_agents > n) {
    throw std::invalid_argument("make_partition: need 1 <= n_agents <= N");
  }
  RngStream rng(derive_seed(seed, 0x70617274));
  Partition part;
  part.agent_indices.resize(n_agents);

  std::vector<std::uint32_t> order(n);
  std::iota(order.begin(), order.end(), 0u);

  if (strategy == PartitionStrategy::kIid) {
    for (std::uint32_t i = 0; i + 1 < n; ++i) {
      const std::uint64_t j = i + rng.next_below(n - i);
      std::swap(order[i], order[j]);
    }
    // equal sizes; the first N % n_agents agents absorb the remainder
    const std::uint32_t base = n / n_agents;
    const std::uint32_t extra = n % n_agents;
    std::size_t pos = 0;
    for (std::uint32_t a = 0; a < n_agents; ++a) {
      const std::uint32_t take = base + (a < extra ? 1 : 0);
      part.agent_indices[a].assign(order.begin() + pos,
                                   order.begin() + pos + take);
      pos += take;
    }
    return part;
  }

  if (shards_per_agent == 0) {
    throw std::invalid_argument("make_partition: shards_per_agent must be >= 1");
  }
  const std::uint64_t n_shards =
      static_cast<std::uint64_t>(n_agents) * shards_per_agent;
  if (n_shards > n) {
    throw std::invalid_argument(
        "make_partition: n_agents * shards_per_agent exceeds N");
  }
  std::stable_sort(order.begin(), order.end(),
                   [&](std::uint32_t a, std::uint32_t b) {
                     return data.labels[a] < data.labels[b];
                   });
  // cut into contiguous shards, then deal shards to agents in random order
  std::vector<std::uint32_t> shard_of(n_shards);
  std::iota(shard_of.begin(), shard_of.end(), 0u);
  for (std::uint32_t i = 0; i + 1 < n_shards; ++i) {
    const std::uint64_t j = i + rng.next_below(n_shards - i);
    std::swap(shard_of[i], shard_of[j]);
  }
  const std::uint64_t base = n / n_shards;
  const std::uint64_t extra = n % n_shards;
  std::vector<std::size_t> shard_begin(n_shards + 1, 0);
  for (std::uint64_t s = 0; s < n_shards; ++s) {
    shard_begin[s + 1] = shard_begin[s] + base + (s < extra ? 1 : 0);
  }
  for (std::uint64_t i = 0; i < n_shards; ++i) {
    const std::uint32_t shard = shard_of[i];
    const std::uint32_t agent = static_cast<std::uint32_t>(i / shards_per_agent);
    part.agent_indices[agent].insert(part.agent_indices[agent].end(),
                                     order.begin() + shard_begin[shard],
                                     order.begin() + shard_begin[shard + 1]);
  }
  return part;
}

std::vector<std::uint32_t> sample_minibatch(
    std::span<const std::uint32_t> agent_rows, std::uint32_t batch,
    RngStream& rng) {
  const std::size_t m = agent_rows.size();
  if (batch == 0 || batch > m) {
    throw std::invalid_argument("sample_minibatch: need 1 <= batch <= " +
                                std::to_string(m));
  }
  std::vector<std::uint32_t> pool(agent_rows.begin(), agent_rows.end());
  for (std::uint32_t i = 0; i < batch; ++i) {
    const std::uint64_t j = i + rng.next_below(m - i);
    std::swap(pool[i], pool[j]);
  }
  pool.resize(batch);
  return pool;
}

}  // namespace fedspa
