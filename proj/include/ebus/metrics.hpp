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

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ebus/dataio.hpp"

namespace ebus {

inline constexpr double kDecisionThreshold = 0.5;

struct CaseScore {
  std::string case_id;
  std::vector<double> clip_probs;
  double case_prob = 0.0;
  Label pred = Label::kBenign;
  Label truth = Label::kBenign;
};

/// Mean clip probability; malignant iff the mean is >= 0.5.
CaseScore aggregate_case(std::string case_id, std::vector<double> clip_probs, Label truth);

struct ConfusionCounts {
  std::int64_t tp = 0;
  std::int64_t fp = 0;
  std::int64_t fn = 0;
  std::int64_t tn = 0;
  bool operator==(const ConfusionCounts&) const = default;
};

/// Metrics with malignant as the positive class. A metric whose denominator
/// is zero is empty (written as NA).
struct MetricsReport {
  std::optional<double> auc;
  std::optional<double> accuracy;
  std::optional<double> precision;
  std::optional<double> recall;
  std::optional<double> specificity;
  ConfusionCounts counts;
};

MetricsReport metrics_from_counts(const ConfusionCounts& counts);

/// Confusion metrics plus AUC over the case probabilities.
MetricsReport confusion_metrics(std::span<const CaseScore> cases);

/// Probability that a random malignant score exceeds a random benign one,
/// ties counting one half. Empty when either class is absent.
std::optional<double> auc(std::span<const double> scores, std::span<const Label> labels);

struct CodeDistribution {
  std::vector<double> benign;
  std::vector<double> malignant;

  double l1_distance() const;
};

std::string format_metric(std::optional<double> value);

inline constexpr const char* kMetricsHeader =
    "model,auc,accuracy,precision,recall,specificity,tp,fp,fn,tn";

/// One metrics row without a trailing newline.
std::string metrics_row(const std::string& model, const MetricsReport& report);

std::string metrics_csv(const std::string& model, const MetricsReport& report);

/// Metrics on the noisy set followed by delta_* columns (noisy - clean).
std::string noise_metrics_csv(const std::string& model, const MetricsReport& clean,
                              const MetricsReport& noisy);

std::string codes_csv(const CodeDistribution& codes);

void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace ebus
