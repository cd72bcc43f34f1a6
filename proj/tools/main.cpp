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
// Command-line entry point. Subcommands:
//   run            execute an experiment plan (sweeps, calibration, CSV out)
//   account        privacy accounting for given parameters
//   bound          convergence-bound calculator
//   calibrate-clip median-based clipping calibration for a plan's dataset
//
// Exit codes: 0 success, 1 usage, 2 config, 3 runtime, 4 infeasible privacy.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "fedspa/accountant.hpp"
#include "fedspa/engine.hpp"
#include "fedspa/plan.hpp"
#include "fedspa/theory.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;
constexpr int kExitInfeasible = 4;

std::string scheme_name(fedspa::Scheme s) {
  switch (s) {
    case fedspa::Scheme::kFedSpa: return "fedspa";
    case fedspa::Scheme::kFedAvg: return "fedavg";
    case fedspa::Scheme::kDpFed: return "dpfed";
  }
  return "?";
}

int cmd_run(const std::string& plan_path) {
  fedspa::ExperimentPlan plan = fedspa::load_plan(plan_path);
  const auto summaries = fedspa::run_plan(plan);
  std::printf("%-24s %-8s %-8s %8s %10s %12s %12s %10s\n", "cell", "scheme",
              "server", "p", "sigma", "best_acc", "cost_mb", "eps");
  for (const auto& s : summaries) {
    const double best_acc = s.best_acc_test.value_or(s.best_acc_train);
    std::string eps;
    switch (s.eps_final.kind) {
      case fedspa::EpsReport::Kind::kNoPrivacy: eps = "inf"; break;
      case fedspa::EpsReport::Kind::kInfeasible: eps = "infeasible"; break;
      case fedspa::EpsReport::Kind::kValue: {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.4f", s.eps_final.value);
        eps = buf;
        break;
      }
    }
    std::printf("%-24s %-8s %-8s %8.4g %10.5g %12.4f %12.6f %10s\n",
                s.name.c_str(), scheme_name(s.scheme).c_str(),
                s.server_update == fedspa::ServerUpdate::kAdaptive ? "adaptive"
                                                                   : "average",
                s.p_effective, s.sigma, best_acc, s.cost_mb, eps.c_str());
  }
  std::printf("outputs written to %s\n", plan.out_dir.c_str());
  return kExitOk;
}

struct AccountFlags {
  double q = -1.0;
  std::uint32_t batch = 1;
  std::uint64_t dataset_size = 0;
  double sigma = 0.0;
  double p = 1.0;
  double grad_bound = 1.0;
  std::uint64_t tau = 1;
  std::uint64_t participation = 1;
  double delta = 1e-3;
  int alpha_max = 64;
  bool raw_sigma_constraint = false;
  double target_epsilon = 0.0;
  double tolerance = 1e-3;
};

int cmd_account(const AccountFlags& f) {
  fedspa::AccountantParams prm;
  if (f.q >= 0.0) {
    prm.q = f.q;
  } else if (f.dataset_size > 0) {
    prm.q = static_cast<double>(f.batch) / static_cast<double>(f.dataset_size);
  } else {
    std::cerr << "account: supply --q or --dataset-size\n";
    return kExitConfig;
  }
  prm.batch_size = f.batch;
  prm.sigma = f.sigma;
  prm.p = f.p;
  prm.grad_bound = f.grad_bound;
  prm.tau = f.tau;
  prm.participation = f.participation;
  prm.delta = f.delta;
  prm.constraint_scale = f.raw_sigma_constraint
                             ? fedspa::ConstraintScale::kRawSigmaSq
                             : fedspa::ConstraintScale::kSigmaPrimeSq;
  prm.validate();

  nlohmann::json doc;
  if (f.target_epsilon > 0.0) {
    try {
      prm.sigma = fedspa::calibrate_sigma(f.target_epsilon, prm, f.alpha_max,
                                          f.tolerance);
    } catch (const fedspa::CalibrationError& e) {
      doc["error"] = e.what();
      doc["min_achievable_epsilon"] = e.min_achievable_epsilon();
      std::cout << doc.dump(2) << "\n";
      return kExitInfeasible;
    }
    doc["calibrated_sigma"] = prm.sigma;
    doc["target_epsilon"] = f.target_epsilon;
  }

  doc["q"] = prm.q;
  doc["sigma"] = prm.sigma;
  doc["p"] = prm.p;
  doc["grad_bound"] = prm.grad_bound;
  doc["tau"] = prm.tau;
  doc["participation"] = prm.participation;
  doc["delta"] = prm.delta;
  doc["alpha_max"] = f.alpha_max;
  doc["phi_sq"] = prm.phi_sq();
  doc["sigma_prime_sq"] = prm.sigma_prime_sq();

  nlohmann::json feasible = nlohmann::json::array();
  for (int alpha = 2; alpha <= f.alpha_max; ++alpha) {
    if (fedspa::closed_form_feasible(alpha, prm)) feasible.push_back(alpha);
  }
  doc["feasible_alphas"] = feasible;

  const auto closed = fedspa::min_epsilon(prm, f.alpha_max);
  if (closed.has_value()) {
    doc["closed_form"] = {{"best_alpha", closed->alpha},
                          {"epsilon", closed->epsilon}};
  } else {
    doc["closed_form"] = {
        {"infeasible", true},
        {"diagnostic",
         "no feasible alpha in [2, alpha_max]; raise sigma or lower q"}};
  }
  const auto series = fedspa::min_epsilon_series(prm, f.alpha_max);
  if (series.has_value()) {
    doc["series"] = {{"best_alpha", series->alpha},
                     {"epsilon", series->epsilon}};
  } else {
    doc["series"] = {{"infeasible", true}};
  }
  std::cout << doc.dump(2) << "\n";
  return closed.has_value() ? kExitOk : kExitInfeasible;
}

struct BoundFlags {
  fedspa::TheoryConstants c;
};

int cmd_bound(const BoundFlags& f) {
  f.c.validate();
  const auto b = fedspa::convergence_bound(f.c);
  nlohmann::json doc;
  doc["dp_gradient_variance"] = fedspa::dp_gradient_variance(f.c);
  if (f.c.sigma > 0.0) {
    doc["optimal_p"] = fedspa::optimal_compression_ratio(f.c);
  }
  doc["xi"] = b.xi;
  doc["xi_prime"] = b.xi_prime;
  doc["bound"] = b.bound;
  doc["stepsize_ok"] = b.stepsize_ok;
  doc["rate"] = fedspa::reference_rate(f.c);
  std::cout << doc.dump(2) << "\n";
  return kExitOk;
}

int cmd_calibrate_clip(const std::string& plan_path, std::uint32_t samples,
                       bool per_coordinate) {
  fedspa::ExperimentPlan plan = fedspa::load_plan(plan_path);
  plan.model.validate();
  fedspa::Dataset train;
  switch (plan.data.kind) {
    case fedspa::DataSpec::Kind::kSynthetic:
      train = fedspa::gen_synthetic(
          plan.data.samples, plan.model.input_dim, plan.model.num_classes,
          plan.data.separation, fedspa::derive_seed(plan.base.master_seed, 0x11));
      break;
    case fedspa::DataSpec::Kind::kIdx:
      train = fedspa::load_idx(plan.data.images, plan.data.labels,
                               plan.model.num_classes);
      break;
    case fedspa::DataSpec::Kind::kCsv:
      train = fedspa::load_csv(plan.data.csv, plan.model.num_classes);
      break;
  }
  const std::uint32_t n = samples > 0 ? samples : plan.clip.samples;
  const auto cal = fedspa::calibrate_clip(plan.model, train, n,
                                          plan.base.master_seed, per_coordinate);
  nlohmann::json doc;
  doc["samples"] = n;
  doc["per_coord_bound"] = cal.per_coord_bound;
  doc["implied_global_bound"] = cal.implied_global_bound;
  if (per_coordinate) {
    doc["per_coordinate_medians"] = cal.per_coordinate_medians;
  }
  std::cout << doc.dump(2) << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Deterministic federated-learning simulator with "
               "sparsification-amplified differential privacy"};
  app.require_subcommand(1);

  std::string plan_path;
  auto* run = app.add_subcommand("run", "execute an experiment plan");
  run->add_option("--plan", plan_path, "plan file")->required();

  AccountFlags af;
  auto* account = app.add_subcommand("account", "privacy accounting");
  account->add_option("--q", af.q, "sampling rate B/m");
  account->add_option("--batch", af.batch, "batch size B");
  account->add_option("--dataset-size", af.dataset_size,
                      "local dataset size m (derives q)");
  account->add_option("--sigma", af.sigma, "noise std");
  account->add_option("--p", af.p, "compression ratio");
  account->add_option("--grad-bound", af.grad_bound, "gradient bound G");
  account->add_option("--tau", af.tau, "local iterations per round");
  account->add_option("--participation", af.participation,
                      "rounds the agent participates in");
  account->add_option("--delta", af.delta, "failure probability");
  account->add_option("--alpha-max", af.alpha_max, "largest alpha scanned");
  account->add_flag("--raw-sigma-constraint", af.raw_sigma_constraint,
                    "use raw sigma^2 in the alpha feasibility cap instead of "
                    "the normalized sigma'^2");
  account->add_option("--target-epsilon", af.target_epsilon,
                      "calibrate sigma to this epsilon first");
  account->add_option("--tolerance", af.tolerance,
                      "multiplicative calibration tolerance");

  BoundFlags bf;
  auto* bound = app.add_subcommand("bound", "convergence-bound calculator");
  bound->add_option("--smoothness", bf.c.smoothness, "L");
  bound->add_option("--grad-bound", bf.c.grad_bound, "G");
  bound->add_option("--zeta-l", bf.c.zeta_l, "local variance bound");
  bound->add_option("--zeta-g", bf.c.zeta_g, "global variance bound");
  bound->add_option("--f0-gap", bf.c.f0_minus_fstar, "initial optimality gap");
  bound->add_option("--eta-l", bf.c.eta_l, "local learning rate");
  bound->add_option("--eta-g", bf.c.eta_g, "global learning rate");
  bound->add_option("--tau", bf.c.tau, "local iterations");
  bound->add_option("--rounds", bf.c.rounds, "rounds T");
  bound->add_option("--agents", bf.c.n_agents, "agents n");
  bound->add_option("--p", bf.c.p, "compression ratio");
  bound->add_option("--dim", bf.c.dim, "model dimension d");
  bound->add_option("--sigma", bf.c.sigma, "noise std");
  bound->add_option("--kappa", bf.c.kappa, "adaptivity floor");
  bound->add_option("--beta2", bf.c.beta2, "second-moment decay");

  std::string clip_plan_path;
  std::uint32_t clip_samples = 0;
  bool per_coordinate = false;
  auto* clip = app.add_subcommand("calibrate-clip",
                                  "median-based clipping calibration");
  clip->add_option("--plan", clip_plan_path, "plan file naming the dataset")
      ->required();
  clip->add_option("--samples", clip_samples,
                   "gradients to sample (default: plan clip_samples)");
  clip->add_flag("--per-coordinate", per_coordinate,
                 "also report per-coordinate medians");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (run->parsed()) return cmd_run(plan_path);
    if (account->parsed()) return cmd_account(af);
    if (bound->parsed()) return cmd_bound(bf);
    if (clip->parsed()) {
      return cmd_calibrate_clip(clip_plan_path, clip_samples, per_coordinate);
    }
  } catch (const fedspa::PlanError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const fedspa::CalibrationError& e) {
    std::cerr << "infeasible privacy target: " << e.what() << "\n";
    return kExitInfeasible;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
