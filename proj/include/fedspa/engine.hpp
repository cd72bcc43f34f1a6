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
//
// Federated protocol: round orchestration, agent sampling, local training
// loops, server aggregation (plain averaging and the adaptive moment
// update), participation tracking and communication-cost metering.
//
// Reproducibility contract: a run is a pure function of (config, dataset,
// partition). Randomness comes from streams derived off the master seed as
// derive_seed(master, round, agent, purpose); agents are keyed by their
// global index so selection changes never shift other agents' streams, and
// aggregation reduces in ascending agent order.

#ifndef FEDSPA_ENGINE_HPP_
#define FEDSPA_ENGINE_HPP_

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "fedspa/data.hpp"
#include "fedspa/models.hpp"
#include "fedspa/privacy.hpp"
#include "fedspa/sparsify.hpp"
#include "fedspa/vec.hpp"

namespace fedspa {

enum class Scheme { kFedSpa, kFedAvg, kDpFed };
enum class ServerUpdate { kAdaptive, kAverage };
enum class LrDecay { kNone, kInvSqrtT };

struct RoundConfig {
  Scheme scheme = Scheme::kFedSpa;
  ServerUpdate server_update = ServerUpdate::kAdaptive;
  std::uint32_t n_agents = 1;
  double sample_rate = 1.0;  // r; |W| = ceil(r * n)
  std::uint32_t tau = 1;     // local iterations per round
  double eta_l = 0.1;
  double eta_g = 1.0;
  LrDecay lr_decay = LrDecay::kNone;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double kappa = 1e-3;
  double v_init = -1.0;  // initial second moment; <= 0 means kappa^2
  double p = 1.0;        // requested compression ratio
  double sigma = 0.0;    // per-coordinate noise std
  std::optional<ClipSpec> clip;
  std::uint32_t batch_size = 1;
  std::uint32_t rounds = 1;  // T
  std::uint64_t master_seed = 0;
  double delta = 1e-3;  // for realized-epsilon reporting
  int alpha_max = 64;

  // Scheme coherence: fedavg forces sigma == 0 and p == 1, dpfed forces
  // p == 1, and any sigma > 0 requires a clip (the gradient bound feeds the
  // accountant). Throws std::invalid_argument.
  void validate(std::uint32_t param_dim) const;
};

// Global model plus the server-side moment estimates.
struct ServerState {
  ParamVector theta;
  ParamVector u;
  ParamVector v;  // elementwise >= kappa^2 at init, > 0 thereafter
  std::uint32_t round = 0;
};

// Realized privacy report for one round. kNoPrivacy marks sigma == 0 runs;
// kInfeasible marks parameter regimes the accountant cannot certify. An
// epsilon number is only present for kValue.
struct EpsReport {
  enum class Kind { kValue, kNoPrivacy, kInfeasible };
  Kind kind = Kind::kNoPrivacy;
  double value = 0.0;
};

struct RoundRecord {
  std::uint32_t t = 0;
  std::vector<std::uint32_t> selected;
  double loss_train = 0.0;
  double acc_train = 0.0;
  std::optional<double> acc_test;
  double bits_uplink = 0.0;          // idealized p*d*32 per agent payload
  double bits_uplink_encoded = 0.0;  // (count, u32 index, f64 value) payloads
  double cum_bits = 0.0;
  double cum_bits_encoded = 0.0;
  std::vector<std::uint64_t> participation;  // cumulative I_i after round t
  EpsReport eps_realized_max;
};

struct RunResult {
  std::vector<RoundRecord> rounds;
  ServerState state;
  std::uint32_t k = 0;       // active coordinates per mask
  double p_effective = 1.0;  // k / d
  std::vector<double> agent_q;  // exact per-agent sampling rate B / m_i
};

// One agent's local loop: tau iterations of
//   theta <- theta - eta_l * S(clipped minibatch gradient + masked noise)
// with S the scaled sparsifier for this round's mask. Returns the model
// delta; its support is contained in the mask.
ParamVector local_update_fedspa(const ModelSpec& model,
                                const ParamVector& theta_start,
                                const Dataset& data,
                                std::span<const std::uint32_t> agent_rows,
                                const RoundConfig& cfg, double eta_l_t,
                                const SparseMask& mask, RngStream& noise_rng,
                                RngStream& batch_rng);

// Plain local SGD (dense_noise == false) or SGD with dense Gaussian noise on
// every minibatch gradient (dense_noise == true).
ParamVector local_update_fedavg(const ModelSpec& model,
                                const ParamVector& theta_start,
                                const Dataset& data,
                                std::span<const std::uint32_t> agent_rows,
                                const RoundConfig& cfg, double eta_l_t,
                                bool dense_noise, RngStream& noise_rng,
                                RngStream& batch_rng);

// theta + mean(deltas); throws std::invalid_argument on an empty delta set.
ParamVector server_average(const ParamVector& theta,
                           const std::vector<ParamVector>& deltas);

// Elementwise moment update:
//   u <- beta1 u + (1-beta1) mean(deltas)
//   v <- beta2 v + (1-beta2) u^2
//   theta <- theta + eta_g * u / (sqrt(v) + kappa)
// and increments the round counter.
void server_adaptive(ServerState& state, const std::vector<ParamVector>& deltas,
                     const RoundConfig& cfg, double eta_g_t);

// Uniform draw of a ceil(r*n)-element agent subset, returned in ascending
// order. r == 1 selects everyone.
std::vector<std::uint32_t> select_agents(std::uint32_t n, double r,
                                         RngStream& rng);

// Idealized uplink metric p * d * bits_per_value * T * r.
double comm_cost_bits(double p, double d, double rounds, double r,
                      double bits_per_value = 32.0);

// Executes T rounds of the configured protocol starting from theta = 0.
// Any constituent failure is rethrown with the round index attached.
RunResult run(const RoundConfig& cfg, const ModelSpec& model,
              const Dataset& train, const Partition& partition,
              const Dataset* test = nullptr);

}  // namespace fedspa

#endif  // FEDSPA_ENGINE_HPP_
