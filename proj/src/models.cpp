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

#include "fedspa/models.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace fedspa {

namespace {

void check_sample(const ModelSpec& spec, std::span<const double> x,
                  std::int32_t label) {
  if (x.size() != spec.input_dim) {
    throw std::invalid_argument("model: feature dimension " +
                                std::to_string(x.size()) + " != input_dim " +
                                std::to_string(spec.input_dim));
  }
  if (label < 0 || static_cast<std::uint32_t>(label) >= spec.num_classes) {
    throw std::invalid_argument("model: label " + std::to_string(label) +
                                " out of range [0, " +
                                std::to_string(spec.num_classes) + ")");
  }
}

void check_theta(const ModelSpec& spec, const ParamVector& theta) {
  if (theta.size() != spec.param_dim()) {
    throw std::invalid_argument("model: theta dimension " +
                                std::to_string(theta.size()) +
                                " != param_dim " +
                                std::to_string(spec.param_dim()));
  }
}

// Logits of either model; for mlp1 also fills the hidden pre-activations.
void forward_logits(const ModelSpec& spec, const ParamVector& theta,
                    std::span<const double> x, std::vector<double>& logits,
                    std::vector<double>* hidden_pre) {
  const std::uint32_t f_dim = spec.input_dim;
  const std::uint32_t c_dim = spec.num_classes;
  logits.assign(c_dim, 0.0);
  if (spec.kind == ModelKind::kLogReg) {
    const std::size_t bias_off = static_cast<std::size_t>(c_dim) * f_dim;
    for (std::uint32_t c = 0; c < c_dim; ++c) {
      double z = theta[bias_off + c];
      const double* w = theta.data() + static_cast<std::size_t>(c) * f_dim;
      for (std::uint32_t f = 0; f < f_dim; ++f) z += w[f] * x[f];
      logits[c] = z;
    }
    return;
  }
  const std::uint32_t h_dim = spec.hidden_dim;
  const std::size_t b1_off = static_cast<std::size_t>(h_dim) * f_dim;
  const std::size_t w2_off = b1_off + h_dim;
  const std::size_t b2_off = w2_off + static_cast<std::size_t>(c_dim) * h_dim;
  hidden_pre->assign(h_dim, 0.0);
  for (std::uint32_t h = 0; h < h_dim; ++h) {
    double z = theta[b1_off + h];
    const double* w = theta.data() + static_cast<std::size_t>(h) * f_dim;
    for (std::uint32_t f = 0; f < f_dim; ++f) z += w[f] * x[f];
    (*hidden_pre)[h] = z;
  }
  for (std::uint32_t c = 0; c < c_dim; ++c) {
    double z = theta[b2_off + c];
    const double* w = theta.data() + w2_off + static_cast<std::size_t>(c) * h_dim;
    for (std::uint32_t h = 0; h < h_dim; ++h) {
      const double a = std::max((*hidden_pre)[h], 0.0);
      z += w[h] * a;
    }
    logits[c] = z;
  }
}

// softmax probabilities with max subtraction
void softmax_inplace(std::vector<double>& logits) {
  double m = logits[0];
  for (double v : logits) m = std::max(m, v);
  double sum = 0.0;
  for (double& v : logits) {
    v = std::exp(v - m);
    sum += v;
  }
  for (double& v : logits) v /= sum;
}

}  // namespace

std::uint32_t ModelSpec::param_dim() const {
  if (kind == ModelKind::kLogReg) {
    return input_dim * num_classes + num_classes;
  }
  return input_dim * hidden_dim + hidden_dim + hidden_dim * num_classes +
         num_classes;
}

void ModelSpec::validate() const {
  if (input_dim == 0) {
    throw std::invalid_argument("model: input_dim must be >= 1");
  }
  if (num_classes < 2) {
    throw std::invalid_argument("model: num_classes must be >= 2");
  }
  if (kind == ModelKind::kLogReg && hidden_dim != 0) {
    throw std::invalid_argument("model: logreg takes hidden_dim == 0");
  }
  if (kind == ModelKind::kMlp1 && hidden_dim == 0) {
    throw std::invalid_argument("model: mlp1 needs hidden_dim >= 1");
  }
}

double loss(const ModelSpec& spec, const ParamVector& theta,
            std::span<const double> features, std::int32_t label) {
  check_theta(spec, theta);
  check_sample(spec, features, label);
  std::vector<double> logits;
  std::vector<double> hidden;
  forward_logits(spec, theta, features, logits, &hidden);
  double m = logits[0];
  for (double v : logits) m = std::max(m, v);
  double sum = 0.0;
  for (double v : logits) sum += std::exp(v - m);
  // -log softmax[label] without forming the normalized probabilities
  return std::log(sum) - (logits[label] - m);
}

ParamVector grad_per_sample(const ModelSpec& spec, const ParamVector& theta,
                            std::span<const double> features,
                            std::int32_t label) {
  check_theta(spec, theta);
  check_sample(spec, features, label);
  const std::uint32_t f_dim = spec.input_dim;
  const std::uint32_t c_dim = spec.num_classes;

  std::vector<double> probs;
  std::vector<double> hidden;
  forward_logits(spec, theta, features, probs, &hidden);
  softmax_inplace(probs);
  probs[label] -= 1.0;  // dL/dlogits = softmax - onehot

  ParamVector grad(theta.size(), 0.0);
  if (spec.kind == ModelKind::kLogReg) {
    const std::size_t bias_off = static_cast<std::size_t>(c_dim) * f_dim;
    for (std::uint32_t c = 0; c < c_dim; ++c) {
      const double dl = probs[c];
      double* gw = grad.data() + static_cast<std::size_t>(c) * f_dim;
      for (std::uint32_t f = 0; f < f_dim; ++f) gw[f] = dl * features[f];
      grad[bias_off + c] = dl;
    }
    return grad;
  }

  const std::uint32_t h_dim = spec.hidden_dim;
  const std::size_t b1_off = static_cast<std::size_t>(h_dim) * f_dim;
  const std::size_t w2_off = b1_off + h_dim;
  const std::size_t b2_off = w2_off + static_cast<std::size_t>(c_dim) * h_dim;

  std::vector<double> d_hidden(h_dim, 0.0);
  for (std::uint32_t c = 0; c < c_dim; ++c) {
    const double dl = probs[c];
    double* gw2 = grad.data() + w2_off + static_cast<std::size_t>(c) * h_dim;
    const double* w2 = theta.data() + w2_off + static_cast<std::size_t>(c) * h_dim;
    for (std::uint32_t h = 0; h < h_dim; ++h) {
      const double a = std::max(hidden[h], 0.0);
      gw2[h] = dl * a;
      d_hidden[h] += dl * w2[h];
    }
    grad[b2_off + c] = dl;
  }
  for (std::uint32_t h = 0; h < h_dim; ++h) {
    const double dpre = hidden[h] > 0.0 ? d_hidden[h] : 0.0;
    double* gw1 = grad.data() + static_cast<std::size_t>(h) * f_dim;
    for (std::uint32_t f = 0; f < f_dim; ++f) gw1[f] = dpre * features[f];
    grad[b1_off + h] = dpre;
  }
  return grad;
}

ParamVector minibatch_grad(const ModelSpec& spec, const ParamVector& theta,
                           const Dataset& data,
                           std::span<const std::uint32_t> batch,
                           const std::optional<ClipSpec>& clip) {
  if (batch.empty()) {
    throw std::invalid_argument("minibatch_grad: empty batch");
  }
  ParamVector acc(spec.param_dim(), 0.0);
  for (std::uint32_t i : batch) {
    ParamVector g = grad_per_sample(spec, theta, data.row(i), data.labels[i]);
    if (clip.has_value()) g = clip_per_sample(g, *clip);
    for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += g[j];
  }
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  for (double& v : acc) v *= inv_b;
  return acc;
}

std::int32_t predict(const ModelSpec& spec, const ParamVector& theta,
                     std::span<const double> features) {
  check_theta(spec, theta);
  std::vector<double> logits;
  std::vector<double> hidden;
  forward_logits(spec, theta, features, logits, &hidden);
  std::int32_t best = 0;
  for (std::uint32_t c = 1; c < spec.num_classes; ++c) {
    if (logits[c] > logits[best]) best = static_cast<std::int32_t>(c);
  }
  return best;
}

namespace {

template <typename Fn>
double mean_over_rows(const Dataset& data, std::span<const std::uint32_t> rows,
                      Fn&& fn) {
  if (rows.empty()) {
    double s = 0.0;
    for (std::uint32_t i = 0; i < data.size(); ++i) s += fn(i);
    return s / data.size();
  }
  double s = 0.0;
  for (std::uint32_t i : rows) s += fn(i);
  return s / static_cast<double>(rows.size());
}

}  // namespace

double dataset_loss(const ModelSpec& spec, const ParamVector& theta,
                    const Dataset& data, std::span<const std::uint32_t> rows) {
  return mean_over_rows(data, rows, [&](std::uint32_t i) {
    return loss(spec, theta, data.row(i), data.labels[i]);
  });
}

double dataset_accuracy(const ModelSpec& spec, const ParamVector& theta,
                        const Dataset& data,
                        std::span<const std::uint32_t> rows) {
  return mean_over_rows(data, rows, [&](std::uint32_t i) {
    return predict(spec, theta, data.row(i)) == data.labels[i] ? 1.0 : 0.0;
  });
}

}  // namespace fedspa
