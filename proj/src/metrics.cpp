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

#include "ebus/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "ebus/error.hpp"

namespace ebus {

CaseScore aggregate_case(std::string case_id, std::vector<double> clip_probs, Label truth) {
  if (clip_probs.empty()) {
    throw Error(ErrorCode::kValue, "case '" + case_id + "' has no clip predictions");
  }
  CaseScore s;
  s.case_id = std::move(case_id);
  double total = 0.0;
  for (double p : clip_probs) total += p;
  s.case_prob = total / static_cast<double>(clip_probs.size());
  s.pred = s.case_prob >= kDecisionThreshold ? Label::kMalignant : Label::kBenign;
  s.truth = truth;
  s.clip_probs = std::move(clip_probs);
  return s;
}

namespace {

std::optional<double> ratio(std::int64_t num, std::int64_t den) {
  if (den == 0) return std::nullopt;
  return static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

MetricsReport metrics_from_counts(const ConfusionCounts& c) {
  MetricsReport r;
  r.counts = c;
  r.accuracy = ratio(c.tp + c.tn, c.tp + c.tn + c.fp + c.fn);
  r.precision = ratio(c.tp, c.tp + c.fp);
  r.recall = ratio(c.tp, c.tp + c.fn);
  r.specificity = ratio(c.tn, c.tn + c.fp);
  return r;
}

MetricsReport confusion_metrics(std::span<const CaseScore> cases) {
  ConfusionCounts c;
  std::vector<double> scores;
  std::vector<Label> labels;
  for (const auto& s : cases) {
    const bool pos = s.pred == Label::kMalignant;
    const bool truth = s.truth == Label::kMalignant;
    if (pos && truth) ++c.tp;
    else if (pos) ++c.fp;
    else if (truth) ++c.fn;
    else ++c.tn;
    scores.push_back(s.case_prob);
    labels.push_back(s.truth);
  }
  MetricsReport r = metrics_from_counts(c);
  r.auc = auc(scores, labels);
  return r;
}

std::optional<double> auc(std::span<const double> scores, std::span<const Label> labels) {
  if (scores.size() != labels.size()) {
    throw ShapeError("N", "auc: scores and labels differ in length");
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Twice the number of concordant pairs, so ties stay integral.
  std::int64_t twice = 0, pos = 0, neg = 0, neg_below = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    std::int64_t gp = 0, gn = 0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      (labels[order[j]] == Label::kMalignant ? gp : gn) += 1;
      ++j;
    }
    twice += gp * (2 * neg_below + gn);
    neg_below += gn;
    pos += gp;
    neg += gn;
    i = j;
  }
  if (pos == 0 || neg == 0) return std::nullopt;
  return static_cast<double>(twice) / (2.0 * static_cast<double>(pos) * static_cast<double>(neg));
}

double CodeDistribution::l1_distance() const {
  if (benign.size() != malignant.size()) {
    throw ShapeError("K", "code distributions differ in prototype count");
  }
  double d = 0.0;
  for (std::size_t k = 0; k < benign.size(); ++k) d += std::abs(benign[k] - malignant[k]);
  return d;
}

std::string format_metric(std::optional<double> value) {
  if (!value) return "NA";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", *value);
  return buf;
}

namespace {

std::string format_delta(std::optional<double> noisy, std::optional<double> clean) {
  if (!noisy || !clean) return "NA";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%+.6f", *noisy - *clean);
  return buf;
}

}  // namespace

std::string metrics_row(const std::string& model, const MetricsReport& r) {
  return model + "," + format_metric(r.auc) + "," + format_metric(r.accuracy) + "," +
         format_metric(r.precision) + "," + format_metric(r.recall) + "," +
         format_metric(r.specificity) + "," + std::to_string(r.counts.tp) + "," +
         std::to_string(r.counts.fp) + "," + std::to_string(r.counts.fn) + "," +
         std::to_string(r.counts.tn);
}

std::string metrics_csv(const std::string& model, const MetricsReport& report) {
  return std::string(kMetricsHeader) + "\n" + metrics_row(model, report) + "\n";
}

std::string noise_metrics_csv(const std::string& model, const MetricsReport& clean,
                              const MetricsReport& noisy) {
  std::string out = std::string(kMetricsHeader) +
                    ",delta_auc,delta_accuracy,delta_precision,delta_recall,delta_specificity\n";
  out += metrics_row(model, noisy) + "," + format_delta(noisy.auc, clean.auc) + "," +
         format_delta(noisy.accuracy, clean.accuracy) + "," +
         format_delta(noisy.precision, clean.precision) + "," +
         format_delta(noisy.recall, clean.recall) + "," +
         format_delta(noisy.specificity, clean.specificity) + "\n";
  return out;
}

std::string codes_csv(const CodeDistribution& codes) {
  std::string out = "class";
  for (std::size_t k = 0; k < codes.benign.size(); ++k) out += ",p" + std::to_string(k);
  out += "\n";
  auto row = [&](const char* name, const std::vector<double>& v) {
    out += name;
    char buf[32];
    for (double x : v) {
      std::snprintf(buf, sizeof(buf), ",%.8f", x);
      out += buf;
    }
    out += "\n";
  };
  row("benign", codes.benign);
  row("malignant", codes.malignant);
  return out;
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorCode::kIo, "write failed for " + path.string());
}

}  // namespace ebus
