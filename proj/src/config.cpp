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

#include "ebus/config.hpp"

#include <charconv>
#include <fstream>
#include <iterator>
#include <variant>

#include <nlohmann/json.hpp>

#include "ebus/error.hpp"

namespace ebus {

namespace {

using Member = std::variant<std::string RunConfig::*, std::int64_t RunConfig::*,
                            std::uint64_t RunConfig::*, double RunConfig::*, bool RunConfig::*>;

struct Field {
  const char* name;
  Member member;
};

const std::vector<Field>& fields() {
  static const std::vector<Field> kFields = {
      {"output_dir", &RunConfig::output_dir},
      {"preset", &RunConfig::preset},
      {"model_name", &RunConfig::model_name},
      {"seed", &RunConfig::seed},
      {"deterministic", &RunConfig::deterministic},
      {"untrained", &RunConfig::untrained},
      {"cases_per_class", &RunConfig::cases_per_class},
      {"frames_per_case", &RunConfig::frames_per_case},
      {"image_side", &RunConfig::image_side},
      {"noise_pool_size", &RunConfig::noise_pool_size},
      {"frame_period_s", &RunConfig::frame_period_s},
      {"split_ratio", &RunConfig::split_ratio},
      {"crop_side", &RunConfig::crop_side},
      {"out_side", &RunConfig::out_side},
      {"single_pathway", &RunConfig::single_pathway},
      {"k_prototypes", &RunConfig::k_prototypes},
      {"proj_dim", &RunConfig::proj_dim},
      {"epsilon", &RunConfig::epsilon},
      {"sinkhorn_iters", &RunConfig::sinkhorn_iters},
      {"temperature", &RunConfig::temperature},
      {"k_views", &RunConfig::k_views},
      {"swav_weight", &RunConfig::swav_weight},
      {"flip_p", &RunConfig::flip_p},
      {"cutmix_p", &RunConfig::cutmix_p},
      {"radius_lo", &RunConfig::radius_lo},
      {"radius_hi", &RunConfig::radius_hi},
      {"lr", &RunConfig::lr},
      {"momentum", &RunConfig::momentum},
      {"weight_decay", &RunConfig::weight_decay},
      {"epochs", &RunConfig::epochs},
      {"batch_size", &RunConfig::batch_size},
      {"eval_batch", &RunConfig::eval_batch},
      {"noise_eval_fraction", &RunConfig::noise_eval_fraction},
  };
  return kFields;
}

const Field& find_field(std::string_view key) {
  for (const auto& f : fields()) {
    if (key == f.name) return f;
  }
  throw Error(ErrorCode::kConfig, "unknown config key '" + std::string(key) + "'");
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value, const char* want) {
  throw Error(ErrorCode::kConfig, "config key '" + std::string(key) + "': '" +
                                      std::string(value) + "' is not " + want);
}

template <typename N>
N parse_number(std::string_view key, std::string_view text, const char* want) {
  N v{};
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end || text.empty()) bad_value(key, text, want);
  return v;
}

}  // namespace

std::vector<std::string> run_config_keys() {
  std::vector<std::string> out;
  for (const auto& f : fields()) out.emplace_back(f.name);
  return out;
}

void RunConfig::set(std::string_view key, std::string_view value) {
  const Field& f = find_field(key);
  std::visit(
      [&](auto member) {
        using V = std::remove_reference_t<decltype(this->*member)>;
        if constexpr (std::is_same_v<V, std::string>) {
          std::string_view v = value;
          if (v.size() >= 2 && v.front() == '"' && v.back() == '"') v = v.substr(1, v.size() - 2);
          this->*member = std::string(v);
        } else if constexpr (std::is_same_v<V, bool>) {
          if (value == "true" || value == "1") {
            this->*member = true;
          } else if (value == "false" || value == "0") {
            this->*member = false;
          } else {
            bad_value(key, value, "a boolean");
          }
        } else if constexpr (std::is_same_v<V, double>) {
          this->*member = parse_number<double>(key, value, "a number");
        } else {
          this->*member = parse_number<V>(key, value, "an integer");
        }
      },
      f.member);
}

RunConfig parse_run_config(std::string_view json_text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(e.byte, "config is not valid JSON");
  }
  if (!doc.is_object()) throw Error(ErrorCode::kConfig, "config must be a JSON object");
  RunConfig cfg;
  for (const auto& [key, value] : doc.items()) {
    const Field& f = find_field(key);
    std::visit(
        [&](auto member) {
          using V = std::remove_reference_t<decltype(cfg.*member)>;
          if constexpr (std::is_same_v<V, std::string>) {
            if (!value.is_string()) bad_value(key, value.dump(), "a string");
            cfg.*member = value.template get<std::string>();
          } else if constexpr (std::is_same_v<V, bool>) {
            if (!value.is_boolean()) bad_value(key, value.dump(), "a boolean");
            cfg.*member = value.template get<bool>();
          } else if constexpr (std::is_same_v<V, double>) {
            if (!value.is_number()) bad_value(key, value.dump(), "a number");
            cfg.*member = value.template get<double>();
          } else {
            if (!value.is_number_integer()) bad_value(key, value.dump(), "an integer");
            if constexpr (std::is_unsigned_v<V>) {
              if (value.is_number_unsigned()) {
                cfg.*member = value.template get<V>();
              } else {
                bad_value(key, value.dump(), "a non-negative integer");
              }
            } else {
              cfg.*member = value.template get<V>();
            }
          }
        },
        f.member);
  }
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open config " + path.string());
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return parse_run_config(text);
  } catch (const FormatError& e) {
    throw FormatError(e.offset(), path.string() + ": " + e.what());
  }
}

void RunConfig::validate() const {
  if (preset != "tiny" && preset != "paper") {
    throw Error(ErrorCode::kConfig, "preset must be 'tiny' or 'paper'");
  }
  if (output_dir.empty()) throw Error(ErrorCode::kConfig, "output_dir must not be empty");
  if (model_name.empty() || model_name.find_first_of(",\n\"") != std::string::npos) {
    throw Error(ErrorCode::kConfig, "model_name must be non-empty without commas or quotes");
  }
  if (!(split_ratio > 0.0 && split_ratio <= 1.0)) {
    throw Error(ErrorCode::kConfig, "split_ratio must lie in (0, 1]");
  }
  if (crop_side < 0 || out_side < 0) throw Error(ErrorCode::kConfig, "crop/out side must be >= 0");
  synth().validate();
  const auto s = sampling();
  s.validate();
  const auto m = model();
  m.validate();
  if (s.out_side != m.side) {
    throw Error(ErrorCode::kConfig, "out_side " + std::to_string(s.out_side) +
                                        " must equal the model input side " + std::to_string(m.side));
  }
  if (s.slow_stride != m.alpha || s.clip_slow_len != m.slow_frames) {
    throw Error(ErrorCode::kConfig, "sampling clip lengths do not match the model preset");
  }
  swav().validate();
  train().validate();
}

SamplingConfig RunConfig::sampling() const {
  SamplingConfig s = preset == "paper" ? SamplingConfig::paper() : SamplingConfig::tiny();
  if (crop_side > 0) s.crop_side = crop_side;
  if (out_side > 0) s.out_side = out_side;
  return s;
}

SlowFastConfig RunConfig::model() const {
  SlowFastConfig m = preset == "paper" ? SlowFastConfig::paper() : SlowFastConfig::tiny();
  m.single_pathway = single_pathway;
  return m;
}

SwavConfig RunConfig::swav() const {
  SwavConfig s;
  s.k_prototypes = k_prototypes;
  s.proj_dim = proj_dim;
  s.epsilon = epsilon;
  s.sinkhorn_iters = static_cast<int>(sinkhorn_iters);
  s.temperature = temperature;
  s.k_views = static_cast<int>(k_views);
  s.swav_weight = swav_weight;
  return s;
}

SynthSpec RunConfig::synth() const {
  SynthSpec s;
  s.cases_per_class = cases_per_class;
  s.frames_per_case = frames_per_case;
  s.image_side = image_side;
  s.frame_period_s = frame_period_s;
  s.seed = seed;
  s.noise_pool_size = noise_pool_size;
  return s;
}

TrainConfig RunConfig::train() const {
  TrainConfig t;
  t.sgd = {lr, momentum, weight_decay};
  t.epochs = static_cast<int>(epochs);
  t.batch_size = batch_size;
  t.seed = seed;
  t.views.k_views = static_cast<int>(k_views);
  t.views.flip_p = flip_p;
  t.views.cutmix_p = cutmix_p;
  t.views.radius_lo = radius_lo;
  t.views.radius_hi = radius_hi;
  t.noise_eval_fraction = noise_eval_fraction;
  t.eval_batch = eval_batch;
  return t;
}

}  // namespace ebus
