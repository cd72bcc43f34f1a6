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

#include "fedspa/plan.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "json.hpp"

namespace fedspa {

namespace {

constexpr std::uint64_t kDataTag = 0x11;
constexpr std::uint64_t kTestDataTag = 0x12;
constexpr std::uint64_t kPartitionTag = 0x13;
constexpr std::uint64_t kClipTag = 0x14;

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void fail(std::size_t line, const std::string& msg) {
  throw PlanError("plan:" + std::to_string(line) + ": " + msg);
}

double parse_double(const std::string& v, std::size_t line) {
  try {
    std::size_t pos = 0;
    const double x = std::stod(v, &pos);
    if (pos != v.size()) fail(line, "trailing characters in number '" + v + "'");
    return x;
  } catch (const PlanError&) {
    throw;
  } catch (const std::exception&) {
    fail(line, "cannot parse number '" + v + "'");
  }
}

std::uint64_t parse_u64(const std::string& v, std::size_t line) {
  try {
    std::size_t pos = 0;
    const unsigned long long x = std::stoull(v, &pos);
    if (pos != v.size()) fail(line, "trailing characters in integer '" + v + "'");
    return x;
  } catch (const PlanError&) {
    throw;
  } catch (const std::exception&) {
    fail(line, "cannot parse integer '" + v + "'");
  }
}

std::uint32_t parse_u32(const std::string& v, std::size_t line) {
  const std::uint64_t x = parse_u64(v, line);
  if (x > 0xFFFFFFFFull) fail(line, "integer '" + v + "' out of range");
  return static_cast<std::uint32_t>(x);
}

std::vector<double> parse_list(const std::string& v, std::size_t line) {
  std::vector<double> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) fail(line, "empty element in list");
    out.push_back(parse_double(item, line));
  }
  if (out.empty()) fail(line, "empty sweep list");
  return out;
}

// numeric RoundConfig fields a sweep may vary
const std::map<std::string, std::function<void(RoundConfig&, double)>>&
sweep_setters() {
  static const std::map<std::string, std::function<void(RoundConfig&, double)>>
      setters = {
          {"p", [](RoundConfig& c, double v) { c.p = v; }},
          {"sigma", [](RoundConfig& c, double v) { c.sigma = v; }},
          {"eta_l", [](RoundConfig& c, double v) { c.eta_l = v; }},
          {"eta_g", [](RoundConfig& c, double v) { c.eta_g = v; }},
          {"kappa", [](RoundConfig& c, double v) { c.kappa = v; }},
          {"beta1", [](RoundConfig& c, double v) { c.beta1 = v; }},
          {"beta2", [](RoundConfig& c, double v) { c.beta2 = v; }},
          {"sample_rate", [](RoundConfig& c, double v) { c.sample_rate = v; }},
          {"batch",
           [](RoundConfig& c, double v) {
             c.batch_size = static_cast<std::uint32_t>(v);
           }},
          {"local_iters",
           [](RoundConfig& c, double v) {
             c.tau = static_cast<std::uint32_t>(v);
           }},
          {"rounds",
           [](RoundConfig& c, double v) {
             c.rounds = static_cast<std::uint32_t>(v);
           }},
      };
  return setters;
}

std::string format_value(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

}  // namespace

std::uint64_t plan_hash(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  return h;
}

ExperimentPlan parse_plan_text(const std::string& text) {
  ExperimentPlan plan;
  plan.source_text = text;
  plan.base.scheme = Scheme::kFedSpa;

  std::stringstream ss(text);
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(ss, raw)) {
    ++line_no;
    std::string line = raw;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) fail(line_no, "expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) fail(line_no, "empty key");
    if (value.empty()) fail(line_no, "empty value for key '" + key + "'");

    if (key == "model") {
      if (value == "logreg") plan.model.kind = ModelKind::kLogReg;
      else if (value == "mlp1") plan.model.kind = ModelKind::kMlp1;
      else fail(line_no, "model must be logreg or mlp1");
    } else if (key == "input_dim") {
      plan.model.input_dim = parse_u32(value, line_no);
    } else if (key == "hidden_dim") {
      plan.model.hidden_dim = parse_u32(value, line_no);
    } else if (key == "num_classes") {
      plan.model.num_classes = parse_u32(value, line_no);
    } else if (key == "data") {
      if (value == "synthetic") plan.data.kind = DataSpec::Kind::kSynthetic;
      else if (value == "idx") plan.data.kind = DataSpec::Kind::kIdx;
      else if (value == "csv") plan.data.kind = DataSpec::Kind::kCsv;
      else fail(line_no, "data must be synthetic, idx or csv");
    } else if (key == "data_samples") {
      plan.data.samples = parse_u32(value, line_no);
    } else if (key == "data_test_samples") {
      plan.data.test_samples = parse_u32(value, line_no);
    } else if (key == "data_separation") {
      plan.data.separation = parse_double(value, line_no);
    } else if (key == "data_images") {
      plan.data.images = value;
    } else if (key == "data_labels") {
      plan.data.labels = value;
    } else if (key == "data_test_images") {
      plan.data.test_images = value;
    } else if (key == "data_test_labels") {
      plan.data.test_labels = value;
    } else if (key == "data_csv") {
      plan.data.csv = value;
    } else if (key == "data_test_csv") {
      plan.data.test_csv = value;
    } else if (key == "partition") {
      if (value == "iid") plan.partition = PartitionStrategy::kIid;
      else if (value == "label_shards") plan.partition = PartitionStrategy::kLabelShards;
      else fail(line_no, "partition must be iid or label_shards");
    } else if (key == "shards_per_agent") {
      plan.shards_per_agent = parse_u32(value, line_no);
    } else if (key == "scheme") {
      if (value == "fedspa") plan.base.scheme = Scheme::kFedSpa;
      else if (value == "fedavg") plan.base.scheme = Scheme::kFedAvg;
      else if (value == "dpfed") plan.base.scheme = Scheme::kDpFed;
      else fail(line_no, "scheme must be fedspa, fedavg or dpfed");
    } else if (key == "server") {
      if (value == "adaptive") plan.base.server_update = ServerUpdate::kAdaptive;
      else if (value == "average") plan.base.server_update = ServerUpdate::kAverage;
      else fail(line_no, "server must be adaptive or average");
    } else if (key == "agents") {
      plan.base.n_agents = parse_u32(value, line_no);
    } else if (key == "sample_rate") {
      plan.base.sample_rate = parse_double(value, line_no);
    } else if (key == "rounds") {
      plan.base.rounds = parse_u32(value, line_no);
    } else if (key == "local_iters") {
      plan.base.tau = parse_u32(value, line_no);
    } else if (key == "batch") {
      plan.base.batch_size = parse_u32(value, line_no);
    } else if (key == "eta_l") {
      plan.base.eta_l = parse_double(value, line_no);
    } else if (key == "eta_g") {
      plan.base.eta_g = parse_double(value, line_no);
    } else if (key == "lr_decay") {
      if (value == "none") plan.base.lr_decay = LrDecay::kNone;
      else if (value == "inv_sqrt_t") plan.base.lr_decay = LrDecay::kInvSqrtT;
      else fail(line_no, "lr_decay must be none or inv_sqrt_t");
    } else if (key == "beta1") {
      plan.base.beta1 = parse_double(value, line_no);
    } else if (key == "beta2") {
      plan.base.beta2 = parse_double(value, line_no);
    } else if (key == "kappa") {
      plan.base.kappa = parse_double(value, line_no);
    } else if (key == "v_init") {
      plan.base.v_init = parse_double(value, line_no);
    } else if (key == "p") {
      plan.base.p = parse_double(value, line_no);
    } else if (key == "sigma") {
      plan.base.sigma = parse_double(value, line_no);
    } else if (key == "clip") {
      if (value == "auto") {
        plan.clip.mode = ClipPolicy::Mode::kAuto;
      } else {
        plan.clip.mode = ClipPolicy::Mode::kFixed;
        plan.clip.value = parse_double(value, line_no);
        if (plan.clip.value <= 0.0) fail(line_no, "clip must be positive");
      }
    } else if (key == "clip_samples") {
      plan.clip.samples = parse_u32(value, line_no);
    } else if (key == "delta") {
      plan.base.delta = parse_double(value, line_no);
    } else if (key == "alpha_max") {
      plan.base.alpha_max = static_cast<int>(parse_u32(value, line_no));
    } else if (key == "target_epsilon") {
      plan.target_epsilon = parse_double(value, line_no);
    } else if (key == "calibration_tolerance") {
      plan.calibration_tolerance = parse_double(value, line_no);
    } else if (key == "master_seed") {
      plan.base.master_seed = parse_u64(value, line_no);
    } else if (key == "out_dir") {
      plan.out_dir = value;
    } else if (key.rfind("sweep_", 0) == 0) {
      const std::string param = key.substr(6);
      if (sweep_setters().find(param) == sweep_setters().end()) {
        fail(line_no, "unknown sweep parameter '" + param + "'");
      }
      plan.sweeps.push_back(SweepAxis{param, parse_list(value, line_no)});
    } else {
      fail(line_no, "unknown key '" + key + "'");
    }
  }
  return plan;
}

ExperimentPlan load_plan(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw PlanError("cannot open plan file " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_plan_text(buf.str());
}

ClipCalibration calibrate_clip(const ModelSpec& model, const Dataset& train,
                               std::uint32_t n_samples, std::uint64_t seed,
                               bool with_per_coordinate) {
  model.validate();
  if (n_samples == 0) {
    throw std::invalid_argument("calibrate_clip: n_samples must be >= 1");
  }
  if (train.size() == 0) {
    throw std::invalid_argument("calibrate_clip: empty dataset");
  }
  const std::uint32_t d = model.param_dim();
  const ParamVector theta0(d, 0.0);
  RngStream rng(derive_seed(seed, kClipTag));

  std::vector<std::vector<double>> abs_coords;
  if (with_per_coordinate) abs_coords.assign(d, {});
  std::vector<double> pooled;
  pooled.reserve(static_cast<std::size_t>(n_samples) * d);
  for (std::uint32_t s = 0; s < n_samples; ++s) {
    const std::uint32_t i =
        static_cast<std::uint32_t>(rng.next_below(train.size()));
    const ParamVector g =
        grad_per_sample(model, theta0, train.row(i), train.labels[i]);
    for (std::uint32_t j = 0; j < d; ++j) {
      const double a = std::abs(g[j]);
      pooled.push_back(a);
      if (with_per_coordinate) abs_coords[j].push_back(a);
    }
  }

  auto median = [](std::vector<double>& v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    if (n % 2 == 1) return v[n / 2];
    return 0.5 * (v[n / 2 - 1] + v[n / 2]);
  };

  ClipCalibration out;
  out.per_coord_bound = median(pooled);
  out.implied_global_bound =
      out.per_coord_bound * std::sqrt(static_cast<double>(d));
  if (with_per_coordinate) {
    out.per_coordinate_medians.reserve(d);
    for (auto& col : abs_coords) out.per_coordinate_medians.push_back(median(col));
  }
  return out;
}

namespace {

struct CellSpec {
  std::string name;
  RoundConfig cfg;
};

std::vector<CellSpec> expand_sweeps(const ExperimentPlan& plan) {
  std::vector<CellSpec> cells{{"run", plan.base}};
  for (const auto& axis : plan.sweeps) {
    const auto& setter = sweep_setters().at(axis.param);
    std::vector<CellSpec> next;
    next.reserve(cells.size() * axis.values.size());
    for (const auto& cell : cells) {
      for (double v : axis.values) {
        CellSpec c = cell;
        setter(c.cfg, v);
        const std::string tag = axis.param + format_value(v);
        c.name = (cells.size() == 1 && cell.name == "run" && plan.sweeps.size() > 0)
                     ? tag
                     : cell.name + "_" + tag;
        next.push_back(std::move(c));
      }
    }
    cells = std::move(next);
  }
  return cells;
}

std::string eps_to_string(const EpsReport& eps) {
  switch (eps.kind) {
    case EpsReport::Kind::kNoPrivacy:
      return "inf";
    case EpsReport::Kind::kInfeasible:
      return "infeasible";
    case EpsReport::Kind::kValue:
      return format_double(eps.value);
  }
  return "inf";
}

void write_round_csv(const std::string& path, const std::string& provenance,
                     const RunResult& result) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "# " << provenance << "\n";
  out << "t,loss_train,acc_train,acc_test,bits_cum,eps_realized_max\n";
  for (const auto& rec : result.rounds) {
    out << rec.t << ',' << format_double(rec.loss_train) << ','
        << format_double(rec.acc_train) << ','
        << (rec.acc_test.has_value() ? format_double(*rec.acc_test)
                                     : std::string("nan"))
        << ',' << format_double(rec.cum_bits) << ','
        << eps_to_string(rec.eps_realized_max) << "\n";
  }
}

}  // namespace

std::vector<CellSummary> run_plan(const ExperimentPlan& plan) {
  plan.model.validate();
  if (plan.out_dir.empty()) throw PlanError("plan: out_dir must be set");

  // datasets and partition are shared across sweep cells
  Dataset train;
  std::optional<Dataset> test;
  switch (plan.data.kind) {
    case DataSpec::Kind::kSynthetic: {
      if (plan.data.samples == 0) {
        throw PlanError("plan: data_samples must be >= 1 for synthetic data");
      }
      train = gen_synthetic(plan.data.samples, plan.model.input_dim,
                            plan.model.num_classes, plan.data.separation,
                            derive_seed(plan.base.master_seed, kDataTag));
      if (plan.data.test_samples > 0) {
        test = gen_synthetic(plan.data.test_samples, plan.model.input_dim,
                             plan.model.num_classes, plan.data.separation,
                             derive_seed(plan.base.master_seed, kTestDataTag));
      }
      break;
    }
    case DataSpec::Kind::kIdx: {
      train = load_idx(plan.data.images, plan.data.labels,
                       plan.model.num_classes);
      if (!plan.data.test_images.empty()) {
        test = load_idx(plan.data.test_images, plan.data.test_labels,
                        plan.model.num_classes);
      }
      break;
    }
    case DataSpec::Kind::kCsv: {
      train = load_csv(plan.data.csv, plan.model.num_classes);
      if (!plan.data.test_csv.empty()) {
        test = load_csv(plan.data.test_csv, plan.model.num_classes);
      }
      break;
    }
  }
  if (train.input_dim != plan.model.input_dim) {
    throw PlanError("plan: dataset input_dim " + std::to_string(train.input_dim) +
                    " != model input_dim " + std::to_string(plan.model.input_dim));
  }

  const Partition partition = make_partition(
      train, plan.base.n_agents, plan.partition, plan.shards_per_agent,
      derive_seed(plan.base.master_seed, kPartitionTag));

  const std::uint32_t d = plan.model.param_dim();

  // resolve the clip bound once (theta0 is shared by all cells)
  std::optional<ClipSpec> clip;
  if (plan.clip.mode == ClipPolicy::Mode::kFixed) {
    clip = ClipSpec{plan.clip.value, d};
  } else if (plan.clip.mode == ClipPolicy::Mode::kAuto) {
    const ClipCalibration cal = calibrate_clip(plan.model, train,
                                               plan.clip.samples,
                                               plan.base.master_seed);
    if (cal.per_coord_bound <= 0.0) {
      throw PlanError("plan: auto clip calibration produced a zero bound; "
                      "supply a fixed clip");
    }
    clip = ClipSpec{cal.per_coord_bound, d};
  }

  const std::uint64_t hash = plan_hash(plan.source_text);
  char hash_hex[32];
  std::snprintf(hash_hex, sizeof(hash_hex), "%016llx",
                static_cast<unsigned long long>(hash));
  const std::string provenance_base =
      "plan_hash=" + std::string(hash_hex) +
      " master_seed=" + std::to_string(plan.base.master_seed);

  std::filesystem::create_directories(plan.out_dir);

  std::size_t min_agent_rows = train.size();
  for (const auto& rows : partition.agent_indices) {
    min_agent_rows = std::min(min_agent_rows, rows.size());
  }

  std::vector<CellSummary> summaries;
  for (const auto& cell : expand_sweeps(plan)) {
    RoundConfig cfg = cell.cfg;
    cfg.clip = clip;

    CellSummary summary;
    summary.name = cell.name;
    summary.scheme = cfg.scheme;
    summary.server_update = cfg.server_update;
    summary.p_requested = cfg.p;
    summary.calibration_target = plan.target_epsilon;
    summary.clip_bound = clip.has_value() ? clip->per_coord_bound : 0.0;

    // the engine rounds p to k/d; accounting must see the same ratio
    std::uint32_t k = std::clamp<std::uint32_t>(
        static_cast<std::uint32_t>(std::lround(cfg.p * d)), 1u, d);
    if (cfg.scheme != Scheme::kFedSpa) k = d;
    const double p_eff = static_cast<double>(k) / d;

    if (plan.target_epsilon.has_value() && cfg.scheme != Scheme::kFedAvg) {
      if (!clip.has_value()) {
        throw PlanError("plan: target_epsilon needs a clip bound");
      }
      AccountantParams prm;
      prm.q = static_cast<double>(cfg.batch_size) /
              static_cast<double>(min_agent_rows);
      prm.batch_size = cfg.batch_size;
      prm.p = p_eff;
      prm.grad_bound = clip->global_bound();
      prm.tau = cfg.tau;
      prm.participation = static_cast<std::uint64_t>(
          std::ceil(cfg.sample_rate * static_cast<double>(cfg.rounds)));
      prm.delta = cfg.delta;
      cfg.sigma = calibrate_sigma(*plan.target_epsilon, prm, cfg.alpha_max,
                                  plan.calibration_tolerance);
    }
    summary.sigma = cfg.sigma;

    const RunResult result = run(cfg, plan.model, train, partition,
                                 test.has_value() ? &*test : nullptr);
    summary.p_effective = result.p_effective;
    summary.k = result.k;

    for (const auto& rec : result.rounds) {
      summary.best_acc_train = std::max(summary.best_acc_train, rec.acc_train);
      if (rec.acc_test.has_value()) {
        summary.best_acc_test = std::max(
            summary.best_acc_test.value_or(0.0), *rec.acc_test);
      }
    }
    if (!result.rounds.empty()) {
      summary.eps_final = result.rounds.back().eps_realized_max;
      summary.cost_mb = comm_cost_bits(result.p_effective, d, cfg.rounds,
                                       cfg.sample_rate) /
                        8.0 / 1.0e6;
      summary.cost_mb_encoded = result.rounds.back().cum_bits_encoded / 8.0 / 1.0e6;
    } else if (cfg.sigma == 0.0) {
      summary.eps_final = {EpsReport::Kind::kNoPrivacy, 0.0};
    }

    const std::string csv_path = plan.out_dir + "/" + cell.name + ".csv";
    write_round_csv(csv_path, provenance_base + " cell=" + cell.name, result);
    summary.csv_path = csv_path;
    summaries.push_back(std::move(summary));
  }

  // summary table shaped like the cost/accuracy/epsilon result tables
  {
    const std::string path = plan.out_dir + "/summary.csv";
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "# " << provenance_base << "\n";
    out << "cell,scheme,server,p,k,sigma,clip,best_acc_train,best_acc_test,"
           "cost_mb,cost_mb_encoded,eps\n";
    for (const auto& s : summaries) {
      out << s.name << ','
          << (s.scheme == Scheme::kFedSpa
                  ? "fedspa"
                  : s.scheme == Scheme::kFedAvg ? "fedavg" : "dpfed")
          << ','
          << (s.server_update == ServerUpdate::kAdaptive ? "adaptive"
                                                         : "average")
          << ',' << format_double(s.p_effective) << ',' << s.k << ','
          << format_double(s.sigma) << ',' << format_double(s.clip_bound) << ','
          << format_double(s.best_acc_train) << ','
          << (s.best_acc_test.has_value() ? format_double(*s.best_acc_test)
                                          : std::string("nan"))
          << ',' << format_double(s.cost_mb) << ','
          << format_double(s.cost_mb_encoded) << ',' << eps_to_string(s.eps_final)
          << "\n";
    }
  }
  {
    nlohmann::json doc;
    doc["plan_hash"] = hash_hex;
    doc["master_seed"] = plan.base.master_seed;
    nlohmann::json cells = nlohmann::json::array();
    for (const auto& s : summaries) {
      nlohmann::json c;
      c["cell"] = s.name;
      c["scheme"] = s.scheme == Scheme::kFedSpa
                        ? "fedspa"
                        : s.scheme == Scheme::kFedAvg ? "fedavg" : "dpfed";
      c["server"] =
          s.server_update == ServerUpdate::kAdaptive ? "adaptive" : "average";
      c["p_requested"] = s.p_requested;
      c["p_effective"] = s.p_effective;
      c["k"] = s.k;
      c["sigma"] = s.sigma;
      c["clip"] = s.clip_bound;
      if (s.calibration_target.has_value()) {
        c["target_epsilon"] = *s.calibration_target;
      }
      c["best_acc_train"] = s.best_acc_train;
      if (s.best_acc_test.has_value()) c["best_acc_test"] = *s.best_acc_test;
      c["cost_mb"] = s.cost_mb;
      c["cost_mb_encoded"] = s.cost_mb_encoded;
      c["eps"] = eps_to_string(s.eps_final);
      c["csv"] = s.csv_path;
      cells.push_back(c);
    }
    doc["cells"] = cells;
    std::ofstream out(plan.out_dir + "/summary.json", std::ios::binary);
    if (!out) throw std::runtime_error("cannot write summary.json");
    out << doc.dump(2) << "\n";
  }

  return summaries;
}

}  // namespace fedspa
