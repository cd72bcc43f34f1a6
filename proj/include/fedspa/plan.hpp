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
// Declarative experiment plans: a key = value file describing one run or a
// sweep of runs, plus the orchestration that executes each sweep cell
// (optional noise calibration, training run, per-round CSV and a summary
// table). File outputs are byte-deterministic for a fixed plan and seed.

#ifndef FEDSPA_PLAN_HPP_
#define FEDSPA_PLAN_HPP_

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "fedspa/accountant.hpp"
#include "fedspa/data.hpp"
#include "fedspa/engine.hpp"
#include "fedspa/models.hpp"

namespace fedspa {

// Plan file or config-level problem; the message carries the line or field.
class PlanError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct DataSpec {
  enum class Kind { kSynthetic, kIdx, kCsv };
  Kind kind = Kind::kSynthetic;
  std::uint32_t samples = 0;       // synthetic train size
  std::uint32_t test_samples = 0;  // synthetic held-out size (0 = none)
  double separation = 1.0;
  std::string images, labels, test_images, test_labels;  // idx paths
  std::string csv, test_csv;
};

struct ClipPolicy {
  enum class Mode { kNone, kFixed, kAuto };
  Mode mode = Mode::kNone;
  double value = 0.0;           // fixed per-coordinate bound
  std::uint32_t samples = 100;  // gradients sampled by auto calibration
};

struct SweepAxis {
  std::string param;
  std::vector<double> values;
};

struct ExperimentPlan {
  ModelSpec model;
  DataSpec data;
  PartitionStrategy partition = PartitionStrategy::kIid;
  std::uint32_t shards_per_agent = 1;
  RoundConfig base;
  ClipPolicy clip;
  std::optional<double> target_epsilon;
  double calibration_tolerance = 1e-3;
  std::vector<SweepAxis> sweeps;
  std::string out_dir = "out";
  std::string source_text;  // verbatim plan text, hashed into output headers
};

// FNV-1a over the plan text.
std::uint64_t plan_hash(const std::string& text);

ExperimentPlan parse_plan_text(const std::string& text);
ExperimentPlan load_plan(const std::string& path);

// Median-based clipping calibration: n_samples per-sample gradients at
// theta = 0, pooled over all coordinates. per_coordinate_medians holds the
// per-coordinate variant for inspection.
struct ClipCalibration {
  double per_coord_bound = 0.0;
  double implied_global_bound = 0.0;  // c * sqrt(d)
  std::vector<double> per_coordinate_medians;
};

ClipCalibration calibrate_clip(const ModelSpec& model, const Dataset& train,
                               std::uint32_t n_samples, std::uint64_t seed,
                               bool with_per_coordinate = false);

struct CellSummary {
  std::string name;
  Scheme scheme = Scheme::kFedSpa;
  ServerUpdate server_update = ServerUpdate::kAdaptive;
  double p_requested = 1.0;
  double p_effective = 1.0;
  std::uint32_t k = 0;
  double sigma = 0.0;
  std::optional<double> calibration_target;
  double clip_bound = 0.0;
  double best_acc_train = 0.0;
  std::optional<double> best_acc_test;
  double cost_mb = 0.0;          // idealized p*d*32*T*r at 10^6 bytes per MB
  double cost_mb_encoded = 0.0;  // realistic sparse/dense payload bytes
  EpsReport eps_final;
  std::string csv_path;
};

// Executes every sweep cell: resolves the clip bound, calibrates sigma when
// a target epsilon is set, runs the protocol, writes <out_dir>/<cell>.csv
// per round plus summary.csv and summary.json. Returns the summaries.
// Throws PlanError (config), CalibrationError (unreachable target) or
// std::runtime_error (mid-run failure; partial outputs stay on disk).
std::vector<CellSummary> run_plan(const ExperimentPlan& plan);

}  // namespace fedspa

#endif  // FEDSPA_PLAN_HPP_
