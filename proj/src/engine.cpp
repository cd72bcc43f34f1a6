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

#include "fedspa/engine.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "fedspa/accountant.hpp"

namespace fedspa {

namespace {

// Stream purposes under one (round, agent) pair. kSelect ignores the agent
// slot.
enum StreamPurpose : std::uint64_t {
  kSelect = 1,
  kMask = 2,
  kNoise = 3,
  kBatch = 4,
};

RngStream agent_stream(const RoundConfig& cfg, std::uint32_t round,
                       std::uint32_t agent, StreamPurpose purpose) {
  return RngStream(derive_seed(cfg.master_seed, round,
                               static_cast<std::uint64_t>(agent) + 1, purpose));
}

RngStream select_stream(const RoundConfig& cfg, std::uint32_t round) {
  return RngStream(derive_seed(cfg.master_seed, round, 0, kSelect));
}

}  // namespace

void RoundConfig::validate(std::uint32_t param_dim) const {
  if (n_agents == 0) throw std::invalid_argument("config: n_agents must be >= 1");
  if (!(sample_rate > 0.0 && sample_rate <= 1.0)) {
    throw std::invalid_argument("config: sample_rate must be in (0, 1]");
  }
  if (!(p > 0.0 && p <= 1.0)) {
    throw std::invalid_argument("config: p must be in (0, 1]");
  }
  if (eta_l <= 0.0 || eta_g <= 0.0) {
    throw std::invalid_argument("config: learning rates must be > 0");
  }
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) {
    throw std::invalid_argument("config: beta1, beta2 must be in [0, 1)");
  }
  if (kappa <= 0.0) throw std::invalid_argument("config: kappa must be > 0");
  if (sigma < 0.0) throw std::invalid_argument("config: sigma must be >= 0");
  if (batch_size == 0) {
    throw std::invalid_argument("config: batch_size must be >= 1");
  }
  if (tau == 0) throw std::invalid_argument("config: tau must be >= 1");
  if (!(delta > 0.0 && delta < 1.0)) {
    throw std::invalid_argument("config: delta must be in (0, 1)");
  }
  if (scheme == Scheme::kFedAvg && (sigma != 0.0 || p != 1.0)) {
    throw std::invalid_argument("config: fedavg requires sigma == 0 and p == 1");
  }
  if (scheme == Scheme::kDpFed && p != 1.0) {
    throw std::invalid_argument("config: dpfed requires p == 1");
  }
  if (sigma > 0.0 && !clip.has_value()) {
    throw std::invalid_argument(
        "config: sigma > 0 requires a clip bound (it sets the sensitivity)");
  }
  if (clip.has_value() && clip->dim != param_dim) {
    throw std::invalid_argument("config: clip dimension != model dimension");
  }
}

ParamVector local_update_fedspa(const ModelSpec& model,
                                const ParamVector& theta_start,
                                const Dataset& data,
                                std::span<const std::uint32_t> agent_rows,
                                const RoundConfig& cfg, double eta_l_t,
                                const SparseMask& mask, RngStream& noise_rng,
                                RngStream& batch_rng) {
  ParamVector theta = theta_start;
  for (std::uint32_t s = 0; s < cfg.tau; ++s) {
    const auto batch = sample_minibatch(agent_rows, cfg.batch_size, batch_rng);
    const ParamVector g = minibatch_grad(model, theta, data, batch, cfg.clip);
    const ParamVector noisy = perturb_on_mask(g, mask, cfg.sigma, noise_rng);
    const ParamVector step = apply_scaled(mask, noisy);
    axpy(-eta_l_t, step, theta);
  }
  for (std::size_t j = 0; j < theta.size(); ++j) theta[j] -= theta_start[j];
  return theta;
}

ParamVector local_update_fedavg(const ModelSpec& model,
                                const ParamVector& theta_start,
                                const Dataset& data,
                                std::span<const std::uint32_t> agent_rows,
                                const RoundConfig& cfg, double eta_l_t,
                                bool dense_noise, RngStream& noise_rng,
                                RngStream& batch_rng) {
  ParamVector theta = theta_start;
  for (std::uint32_t s = 0; s < cfg.tau; ++s) {
    const auto batch = sample_minibatch(agent_rows, cfg.batch_size, batch_rng);
    ParamVector g = minibatch_grad(model, theta, data, batch, cfg.clip);
    if (dense_noise && cfg.sigma > 0.0) {
      for (double& v : g) v += noise_rng.next_gaussian(cfg.sigma);
    }
    axpy(-eta_l_t, g, theta);
  }
  for (std::size_t j = 0; j < theta.size(); ++j) theta[j] -= theta_start[j];
  return theta;
}

ParamVector server_average(const ParamVector& theta,
                           const std::vector<ParamVector>& deltas) {
  if (deltas.empty()) {
    throw std::invalid_argument("server_average: no deltas to aggregate");
  }
  ParamVector out = theta;
  const double inv = 1.0 / static_cast<double>(deltas.size());
  for (std::size_t j = 0; j < out.size(); ++j) {
    double s = 0.0;
    for (const auto& d : deltas) s += d[j];
    out[j] += s * inv;
  }
  return out;
}

void server_adaptive(ServerState& state, const std::vector<ParamVector>& deltas,
                     const RoundConfig& cfg, double eta_g_t) {
  if (deltas.empty()) {
    throw std::invalid_argument("server_adaptive: no deltas to aggregate");
  }
  const double inv = 1.0 / static_cast<double>(deltas.size());
  for (std::size_t j = 0; j < state.theta.size(); ++j) {
    double mean = 0.0;
    for (const auto& d : deltas) mean += d[j];
    mean *= inv;
    state.u[j] = cfg.beta1 * state.u[j] + (1.0 - cfg.beta1) * mean;
    state.v[j] = cfg.beta2 * state.v[j] + (1.0 - cfg.beta2) * state.u[j] * state.u[j];
    state.theta[j] += eta_g_t * state.u[j] / (std::sqrt(state.v[j]) + cfg.kappa);
  }
  ++state.round;
}

std::vector<std::uint32_t> select_agents(std::uint32_t n, double r,
                                         RngStream& rng) {
  if (!(r > 0.0 && r <= 1.0)) {
    throw std::invalid_argument("select_agents: r must be in (0, 1]");
  }
  const std::uint32_t size =
      std::min<std::uint32_t>(n, static_cast<std::uint32_t>(
                                     std::ceil(r * static_cast<double>(n))));
  std::vector<std::uint32_t> pool(n);
  std::iota(pool.begin(), pool.end(), 0u);
  if (size < n) {
    for (std::uint32_t i = 0; i < size; ++i) {
      const std::uint64_t j = i + rng.next_below(n - i);
      std::swap(pool[i], pool[j]);
    }
    pool.resize(size);
    std::sort(pool.begin(), pool.end());
  }
  return pool;
}

double comm_cost_bits(double p, double d, double rounds, double r,
                      double bits_per_value) {
  if (!(p > 0.0 && p <= 1.0) || d < 1.0 || rounds < 0.0 ||
      !(r > 0.0 && r <= 1.0) || bits_per_value <= 0.0) {
    throw std::invalid_argument("comm_cost_bits: parameter out of range");
  }
  return p * d * bits_per_value * rounds * r;
}

RunResult run(const RoundConfig& cfg, const ModelSpec& model,
              const Dataset& train, const Partition& partition,
              const Dataset* test) {
  model.validate();
  const std::uint32_t d = model.param_dim();
  cfg.validate(d);
  if (partition.n_agents() != cfg.n_agents) {
    throw std::invalid_argument("run: partition size != n_agents");
  }
  for (const auto& rows : partition.agent_indices) {
    if (rows.size() < cfg.batch_size) {
      throw std::invalid_argument("run: an agent has fewer samples than the "
                                  "batch size");
    }
  }

  RunResult result;
  result.k = std::clamp<std::uint32_t>(
      static_cast<std::uint32_t>(std::lround(cfg.p * d)), 1u, d);
  if (cfg.scheme != Scheme::kFedSpa) result.k = d;
  result.p_effective = static_cast<double>(result.k) / d;

  result.agent_q.reserve(cfg.n_agents);
  for (const auto& rows : partition.agent_indices) {
    result.agent_q.push_back(static_cast<double>(cfg.batch_size) /
                             static_cast<double>(rows.size()));
  }

  ServerState state;
  state.theta.assign(d, 0.0);
  state.u.assign(d, 0.0);
  const double v0 = cfg.v_init > 0.0 ? cfg.v_init : cfg.kappa * cfg.kappa;
  state.v.assign(d, v0);

  std::vector<std::uint64_t> participation(cfg.n_agents, 0);
  double cum_bits = 0.0;
  double cum_bits_encoded = 0.0;

  const double g_bound =
      cfg.clip.has_value() ? cfg.clip->global_bound() : 0.0;

  for (std::uint32_t t = 0; t < cfg.rounds; ++t) {
    try {
      const double decay =
          cfg.lr_decay == LrDecay::kInvSqrtT
              ? 1.0 / std::sqrt(static_cast<double>(t) + 1.0)
              : 1.0;
      const double eta_l_t = cfg.eta_l * decay;
      const double eta_g_t = cfg.eta_g * decay;

      RngStream sel = select_stream(cfg, t);
      const auto selected = select_agents(cfg.n_agents, cfg.sample_rate, sel);

      std::vector<ParamVector> deltas;
      deltas.reserve(selected.size());
      double bits = 0.0;
      double bits_encoded = 0.0;
      for (std::uint32_t agent : selected) {
        RngStream mask_rng = agent_stream(cfg, t, agent, kMask);
        RngStream noise_rng = agent_stream(cfg, t, agent, kNoise);
        RngStream batch_rng = agent_stream(cfg, t, agent, kBatch);
        const auto rows = std::span<const std::uint32_t>(
            partition.agent_indices[agent]);
        if (cfg.scheme == Scheme::kFedSpa) {
          const SparseMask mask = sample_mask(d, result.k, mask_rng);
          deltas.push_back(local_update_fedspa(model, state.theta, train, rows,
                                               cfg, eta_l_t, mask, noise_rng,
                                               batch_rng));
          bits_encoded += gather(mask, deltas.back()).encoded_bits();
        } else {
          deltas.push_back(local_update_fedavg(
              model, state.theta, train, rows, cfg, eta_l_t,
              /*dense_noise=*/cfg.scheme == Scheme::kDpFed, noise_rng,
              batch_rng));
          bits_encoded += 64.0 * d;
        }
        bits += result.p_effective * d * 32.0;
        ++participation[agent];
      }

      if (cfg.server_update == ServerUpdate::kAverage) {
        state.theta = server_average(state.theta, deltas);
        ++state.round;
      } else {
        server_adaptive(state, deltas, cfg, eta_g_t);
      }

      RoundRecord rec;
      rec.t = t;
      rec.selected = selected;
      rec.loss_train = dataset_loss(model, state.theta, train);
      rec.acc_train = dataset_accuracy(model, state.theta, train);
      if (test != nullptr) {
        rec.acc_test = dataset_accuracy(model, state.theta, *test);
      }
      rec.bits_uplink = bits;
      rec.bits_uplink_encoded = bits_encoded;
      cum_bits += bits;
      cum_bits_encoded += bits_encoded;
      rec.cum_bits = cum_bits;
      rec.cum_bits_encoded = cum_bits_encoded;
      rec.participation = participation;

      if (cfg.sigma == 0.0) {
        rec.eps_realized_max = {EpsReport::Kind::kNoPrivacy, 0.0};
      } else {
        EpsReport report{EpsReport::Kind::kValue, 0.0};
        for (std::uint32_t agent = 0; agent < cfg.n_agents; ++agent) {
          if (participation[agent] == 0) continue;
          AccountantParams prm;
          prm.q = result.agent_q[agent];
          prm.batch_size = cfg.batch_size;
          prm.sigma = cfg.sigma;
          prm.p = result.p_effective;
          prm.grad_bound = g_bound;
          prm.tau = cfg.tau;
          prm.participation = participation[agent];
          prm.delta = cfg.delta;
          const auto best = min_epsilon(prm, cfg.alpha_max);
          if (!best.has_value()) {
            report.kind = EpsReport::Kind::kInfeasible;
            break;
          }
          report.value = std::max(report.value, best->epsilon);
        }
        rec.eps_realized_max = report;
      }

      result.rounds.push_back(std::move(rec));
    } catch (const std::exception& e) {
      throw std::runtime_error("round " + std::to_string(t) + ": " + e.what());
    }
  }

  result.state = std::move(state);
  return result;
}

}  // namespace fedspa
