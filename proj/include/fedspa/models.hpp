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

#ifndef FEDSPA_MODELS_HPP_
#define FEDSPA_MODELS_HPP_

#include <cstdint>
#include <optional>
#include <span>

#include "fedspa/data.hpp"
#include "fedspa/privacy.hpp"
#include "fedspa/vec.hpp"

namespace fedspa {

enum class ModelKind { kLogReg, kMlp1 };

// Small differentiable classifiers with analytic per-sample gradients.
//
// Parameters are flattened into one ParamVector with a fixed layout
// (row-major weight block, then bias block, per layer):
//   logreg: W[c*input_dim + f], then b[c];
//           d = input_dim*num_classes + num_classes
//   mlp1:   W1[h*input_dim + f], b1[h], W2[c*hidden_dim + h], b2[c];
//           d = input_dim*hidden_dim + hidden_dim
//             + hidden_dim*num_classes + num_classes
// The layout is fixed so that sparsification masks address the same
// coordinates across runs.
struct ModelSpec {
  ModelKind kind = ModelKind::kLogReg;
  std::uint32_t input_dim = 0;
  std::uint32_t hidden_dim = 0;  // 0 for logreg
  std::uint32_t num_classes = 2;

  std::uint32_t param_dim() const;
  void validate() const;  // throws std::invalid_argument on bad shapes
};

// Cross-entropy loss of the softmax output on one sample. Softmax is
// computed with max subtraction. Throws std::invalid_argument when the
// label or feature dimension is out of range.
double loss(const ModelSpec& spec, const ParamVector& theta,
            std::span<const double> features, std::int32_t label);

// Exact analytic gradient of `loss` with respect to the flattened theta.
ParamVector grad_per_sample(const ModelSpec& spec, const ParamVector& theta,
                            std::span<const double> features,
                            std::int32_t label);

// Mean of (optionally clipped) per-sample gradients over a non-empty batch.
// With a clip present every summand obeys the per-coordinate bound before
// averaging.
ParamVector minibatch_grad(const ModelSpec& spec, const ParamVector& theta,
                           const Dataset& data,
                           std::span<const std::uint32_t> batch,
                           const std::optional<ClipSpec>& clip);

// Predicted class: argmax of the logits, ties toward the smaller index.
std::int32_t predict(const ModelSpec& spec, const ParamVector& theta,
                     std::span<const double> features);

// Mean loss / accuracy over a subset of rows (all rows if `rows` is empty).
double dataset_loss(const ModelSpec& spec, const ParamVector& theta,
                    const Dataset& data,
                    std::span<const std::uint32_t> rows = {});
double dataset_accuracy(const ModelSpec& spec, const ParamVector& theta,
                        const Dataset& data,
                        std::span<const std::uint32_t> rows = {});

}  // namespace fedspa

#endif  // FEDSPA_MODELS_HPP_
