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

#include "ebus/cli.hpp"

#include <cstdio>
#include <filesystem>
#include <ostream>

#include <CLI11.hpp>

#include "ebus/checkpoint.hpp"
#include "ebus/error.hpp"
#include "ebus/gradcheck.hpp"

namespace ebus {

namespace fs = std::filesystem;

LoadedData load_dataset(const RunConfig& cfg) {
  const auto sampling = cfg.sampling();
  auto records = load_manifest(cfg.manifest_path());
  auto split = split_cases(std::move(records), cfg.split_ratio, cfg.seed);
  LoadedData data;
  auto collect = [&](const std::vector<CaseRecord>& cases, std::vector<ClipSample>& out) {
    for (const auto& rec : cases) {
      auto clips = materialize_clips(load_case_frames(rec, sampling), sampling);
      if (clips.empty()) data.skipped_cases.push_back(rec.case_id);
      for (auto& c : clips) out.push_back(std::move(c));
    }
  };
  collect(split.train, data.train);
  collect(split.val, data.val);
  data.train_cases = std::move(split.train);
  data.val_cases = std::move(split.val);
  return data;
}

SynthOutput run_synth(const RunConfig& cfg) {
  cfg.validate();
  return write_synthetic_dataset(cfg.synth(), cfg.data_dir(), cfg.noise_dir());
}

std::vector<EpochStats> run_train(const RunConfig& cfg, std::ostream* log) {
  cfg.validate();
  auto data = load_dataset(cfg);
  if (data.train.empty()) throw Error(ErrorCode::kValue, "no training clips in " + cfg.output_dir);
  std::optional<NoisePool> pool;
  const auto tc = cfg.train();
  if (tc.views.cutmix_p > 0.0) pool = load_noise_pool(cfg.noise_dir(), cfg.sampling());
  auto params = init_params(cfg.model(), cfg.swav(), derive_seed(cfg.seed, "init"));
  auto stats = train_model(*params, data.train, pool ? &*pool : nullptr, tc,
                           [&](const EpochStats& s) {
                             if (!log) return;
                             char buf[160];
                             std::snprintf(buf, sizeof(buf),
                                           "epoch %d  cls %.4f  swav %.4f  total %.4f  %.1f clips/s\n",
                                           s.epoch, s.cls_loss, s.swav_loss, s.total_loss,
                                           s.clips_per_second);
                             *log << buf << std::flush;
                           });
  save_checkpoint(*params, cfg.checkpoint_path());
  write_text_file(fs::path(cfg.output_dir) / "train_stats.csv", epoch_stats_csv(stats));
  return stats;
}

std::unique_ptr<ModelParams> load_model(const RunConfig& cfg) {
  const auto path = cfg.checkpoint_path();
  if (!fs::exists(path)) {
    throw Error(ErrorCode::kIo, "no checkpoint at " + path.string() + " (run train first)");
  }
  auto params = init_params(cfg.model(), cfg.swav(), derive_seed(cfg.seed, "init"));
  assign_tensors(*params, load_checkpoint(path));
  return params;
}

MetricsReport run_eval(const RunConfig& cfg) {
  cfg.validate();
  auto params = load_model(cfg);
  auto data = load_dataset(cfg);
  auto scores = score_cases(*params, data.val, cfg.eval_batch);
  auto report = confusion_metrics(scores);
  write_text_file(fs::path(cfg.output_dir) / "metrics.csv", metrics_csv(cfg.model_name, report));
  return report;
}

std::pair<MetricsReport, MetricsReport> run_noise_eval(const RunConfig& cfg) {
  cfg.validate();
  auto params = load_model(cfg);
  auto data = load_dataset(cfg);
  auto pool = load_noise_pool(cfg.noise_dir(), cfg.sampling());
  auto clean = confusion_metrics(score_cases(*params, data.val, cfg.eval_batch));
  auto noisy_set = build_noise_eval_set(data.val, pool, cfg.noise_eval_fraction,
                                        derive_seed(cfg.seed, "noise-eval"), cfg.radius_lo,
                                        cfg.radius_hi);
  auto noisy = confusion_metrics(score_cases(*params, noisy_set.clips, cfg.eval_batch));
  write_text_file(fs::path(cfg.output_dir) / "noise_metrics.csv",
                  noise_metrics_csv(cfg.model_name, clean, noisy));
  return {clean, noisy};
}

CodeDistribution run_export_codes(const RunConfig& cfg) {
  cfg.validate();
  auto params = cfg.untrained
                    ? init_params(cfg.model(), cfg.swav(), derive_seed(cfg.seed, "init"))
                    : load_model(cfg);
  auto data = load_dataset(cfg);
  auto codes = export_code_distribution(*params, data.val, cfg.eval_batch);
  write_text_file(fs::path(cfg.output_dir) / (cfg.untrained ? "codes_untrained.csv" : "codes.csv"),
                  codes_csv(codes));
  return codes;
}

namespace {

void print_report(std::ostream& out, const std::string& label, const MetricsReport& r) {
  out << label << ": auc " << format_metric(r.auc) << "  accuracy " << format_metric(r.accuracy)
      << "  precision " << format_metric(r.precision) << "  recall " << format_metric(r.recall)
      << "  specificity " << format_metric(r.specificity) << "  (tp " << r.counts.tp << " fp "
      << r.counts.fp << " fn " << r.counts.fn << " tn " << r.counts.tn << ")\n";
}

std::string one_line(std::string s) {
  for (char& c : s) {
    if (c == '\n' || c == '\r') c = ' ';
  }
  return s;
}

int dispatch(const std::string& command, const RunConfig& cfg, std::ostream& out) {
  if (command == "synth") {
    auto r = run_synth(cfg);
    out << "wrote " << r.cases << " cases (" << r.frames << " frames) to " << r.manifest.string()
        << " and " << r.noise_images << " noise images to " << r.noise_dir.string() << "\n";
  } else if (command == "train") {
    auto stats = run_train(cfg, &out);
    out << "trained " << stats.size() << " epochs; checkpoint " << cfg.checkpoint_path().string()
        << "\n";
  } else if (command == "eval") {
    print_report(out, "validation", run_eval(cfg));
  } else if (command == "noise-eval") {
    auto [clean, noisy] = run_noise_eval(cfg);
    print_report(out, "clean", clean);
    print_report(out, "noisy", noisy);
  } else if (command == "export-codes") {
    auto codes = run_export_codes(cfg);
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", codes.l1_distance());
    out << "benign/malignant code L1 distance " << buf << "\n";
  } else if (command == "gradcheck") {
    auto results = run_gradient_suite(cfg.seed);
    bool ok = true;
    for (const auto& r : results) {
      char buf[160];
      std::snprintf(buf, sizeof(buf), "%-22s cases %3d  max rel err %.3e  %s\n", r.op.c_str(),
                    r.cases, r.max_rel_error, r.passed ? "ok" : "FAIL");
      out << buf;
      ok = ok && r.passed;
    }
    return ok ? 0 : 1;
  }
  return 0;
}

}  // namespace

int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"SlowFast + SwAV ultrasound clip classifier on synthetic data", "ebus"};
  app.require_subcommand(1, 1);
  std::string config_path;
  std::optional<std::uint64_t> seed;
  bool deterministic = false;
  const std::vector<std::pair<std::string, std::string>> commands = {
      {"synth", "generate the synthetic dataset and noise pool"},
      {"train", "train a model and write checkpoint.ebds"},
      {"eval", "case-level metrics on the validation split"},
      {"noise-eval", "metrics on the Noise CutMix validation set with deltas"},
      {"export-codes", "per-class average prototype code distribution"},
      {"gradcheck", "finite-difference check of every differentiable op"},
  };
  for (const auto& [name, desc] : commands) {
    auto* sub = app.add_subcommand(name, desc);
    sub->add_option("--config", config_path, "JSON run configuration")->required();
    sub->add_option("--seed", seed, "override the config seed");
    sub->add_flag("--deterministic", deterministic, "single-threaded reproducible execution");
    sub->allow_extras();
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error code=usage message=\"" << one_line(e.what()) << "\"\n";
    return 2;
  }

  auto* sub = app.get_subcommands().front();
  try {
    RunConfig cfg = load_run_config(config_path);
    for (const auto& extra : sub->remaining()) {
      const auto eq = extra.find('=');
      if (extra.rfind("--", 0) != 0 || eq == std::string::npos) {
        throw Error(ErrorCode::kConfig, "unexpected argument '" + extra + "' (use --key=value)");
      }
      cfg.set(std::string_view(extra).substr(2, eq - 2), std::string_view(extra).substr(eq + 1));
    }
    if (seed) cfg.seed = *seed;
    if (deterministic) cfg.deterministic = true;
    cfg.validate();
    return dispatch(sub->get_name(), cfg, out);
  } catch (const Error& e) {
    err << "error code=" << error_code_name(e.code()) << " message=\"" << one_line(e.what())
        << "\"\n";
    return e.code() == ErrorCode::kConfig ? 2 : 1;
  } catch (const std::exception& e) {
    err << "error code=internal message=\"" << one_line(e.what()) << "\"\n";
    return 1;
  }
}

}  // namespace ebus
