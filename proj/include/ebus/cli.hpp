// Copyright 2026 The ebus-slowfast Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <iosfwd>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "ebus/config.hpp"

namespace ebus {

/// Train/validation clips of the dataset declared by a run configuration.
struct LoadedData {
  std::vector<CaseRecord> train_cases;
  std::vector<CaseRecord> val_cases;
  std::vector<ClipSample> train;
  std::vector<ClipSample> val;
  /// Cases too short to yield a single clip; excluded from scoring.
  std::vector<std::string> skipped_cases;
};

LoadedData load_dataset(const RunConfig& cfg);

SynthOutput run_synth(const RunConfig& cfg);
std::vector<EpochStats> run_train(const RunConfig& cfg, std::ostream* log = nullptr);
MetricsReport run_eval(const RunConfig& cfg);
/// Clean and noisy validation metrics.
std::pair<MetricsReport, MetricsReport> run_noise_eval(const RunConfig& cfg);
CodeDistribution run_export_codes(const RunConfig& cfg);

/// Model restored from the run's checkpoint.
std::unique_ptr<ModelParams> load_model(const RunConfig& cfg);

/// Entry point of the ebus executable. Returns the process exit code:
/// 0 on success, 1 on a runtime error, 2 on a usage or configuration error.
int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace ebus
