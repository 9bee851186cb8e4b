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

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "ebus/checkpoint.hpp"
#include "ebus/cli.hpp"
#include "ebus/error.hpp"
#include "ebus/gradcheck.hpp"
#include "ebus/metrics.hpp"
#include "ebus/swav.hpp"

namespace py = pybind11;
using namespace ebus;

namespace {

using F64Array = py::array_t<double, py::array::c_style | py::array::forcecast>;
using F32Array = py::array_t<float, py::array::c_style | py::array::forcecast>;
using U8Array = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;

template <typename T, typename A>
Tensor<T> to_tensor(const A& a) {
  Shape dims(a.shape(), a.shape() + a.ndim());
  return Tensor<T>(dims, std::vector<T>(a.data(), a.data() + a.size()));
}

template <typename T>
py::array_t<T> to_array(const Tensor<T>& t) {
  py::array_t<T> out(std::vector<py::ssize_t>(t.dims().begin(), t.dims().end()));
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

FrameImage to_frame(const U8Array& a) {
  if (a.ndim() != 2) throw ShapeError("rank", "frame must be a 2-D uint8 array");
  FrameImage f(a.shape(1), a.shape(0));
  std::copy(a.data(), a.data() + a.size(), f.pixels.begin());
  return f;
}

py::array_t<std::uint8_t> from_frame(const FrameImage& f) {
  py::array_t<std::uint8_t> out({f.height, f.width});
  std::copy(f.pixels.begin(), f.pixels.end(), out.mutable_data());
  return out;
}

Label to_label(int v) { return v ? Label::kMalignant : Label::kBenign; }

py::object optional_float(std::optional<double> v) {
  return v ? py::object(py::float_(*v)) : py::object(py::none());
}

py::dict report_dict(const MetricsReport& r) {
  py::dict d;
  d["auc"] = optional_float(r.auc);
  d["accuracy"] = optional_float(r.accuracy);
  d["precision"] = optional_float(r.precision);
  d["recall"] = optional_float(r.recall);
  d["specificity"] = optional_float(r.specificity);
  d["tp"] = r.counts.tp;
  d["fp"] = r.counts.fp;
  d["fn"] = r.counts.fn;
  d["tn"] = r.counts.tn;
  return d;
}

Corner parse_corner(const std::string& name) {
  for (Corner c : {Corner::kTopLeft, Corner::kTopRight, Corner::kBottomLeft, Corner::kBottomRight}) {
    if (name == corner_name(c)) return c;
  }
  throw Error(ErrorCode::kValue, "unknown corner '" + name + "'");
}

SlowFastConfig preset_config(const std::string& preset) {
  if (preset == "tiny") return SlowFastConfig::tiny();
  if (preset == "paper") return SlowFastConfig::paper();
  throw Error(ErrorCode::kValue, "preset must be 'tiny' or 'paper'");
}

// Owns a model built from a preset; forward runs in eval mode.
class Model {
 public:
  Model(const std::string& preset, std::uint64_t seed, bool single_pathway) {
    auto cfg = preset_config(preset);
    cfg.single_pathway = single_pathway;
    params_ = init_params(cfg, SwavConfig{}, seed);
  }

  std::int64_t parameter_count() const { return params_->parameter_count(); }
  std::int64_t embed_dim() const { return params_->config().embed_dim(); }

  py::tuple forward(const F32Array& slow, const F32Array& fast) {
    Tape<float> tape(false);
    auto out = forward_pass(tape, slow, fast);
    return py::make_tuple(to_array(out.logit.value()), to_array(out.embedding.value()));
  }

  py::list stage_shapes(const F32Array& slow, const F32Array& fast) {
    Tape<float> tape(false);
    std::vector<StageShape> trace;
    forward_pass(tape, slow, fast, &trace);
    py::list out;
    for (const auto& s : trace) out.append(py::make_tuple(s.point, s.slow, s.fast));
    return out;
  }

  void save(const std::string& path) { save_checkpoint(*params_, path); }
  void load(const std::string& path) { assign_tensors(*params_, load_checkpoint(path)); }

 private:
  ForwardOutput forward_pass(Tape<float>& tape, const F32Array& slow, const F32Array& fast,
                             std::vector<StageShape>* trace = nullptr) {
    return ebus::forward(tape, *params_, tape.constant(to_tensor<float>(slow)),
                         tape.constant(to_tensor<float>(fast)), NormMode::kEval, trace);
  }

  std::unique_ptr<ModelParams> params_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "SlowFast + SwAV ultrasound video classifier core";

  // Translators run newest first, so the base class goes in first.
  auto base = py::register_exception<Error>(m, "EbusError");
  py::register_exception<FormatError>(m, "FormatError", base.ptr());
  py::register_exception<ShapeError>(m, "ShapeError", base.ptr());

  m.def("sinkhorn_codes",
        [](const F64Array& scores, double epsilon, int iters) {
          return to_array(sinkhorn_codes(to_tensor<double>(scores), epsilon, iters));
        },
        py::arg("scores"), py::arg("epsilon") = 0.05, py::arg("iters") = 3);

  m.def("auc",
        [](const std::vector<double>& scores, const std::vector<int>& labels) {
          if (scores.size() != labels.size()) throw Error(ErrorCode::kValue, "length mismatch");
          std::vector<Label> l;
          for (int v : labels) l.push_back(to_label(v));
          return optional_float(auc(scores, l));
        },
        py::arg("scores"), py::arg("labels"));

  m.def("metrics_from_counts",
        [](std::int64_t tp, std::int64_t fp, std::int64_t fn, std::int64_t tn) {
          return report_dict(metrics_from_counts({tp, fp, fn, tn}));
        },
        py::arg("tp"), py::arg("fp"), py::arg("fn"), py::arg("tn"));

  m.def("enumerate_clips",
        [](std::int64_t frames, double frame_period_s, const std::string& preset) {
          CaseRecord r;
          r.case_id = "case";
          r.frame_period_s = frame_period_s;
          for (std::int64_t i = 0; i < frames; ++i) r.frame_paths.emplace_back(std::to_string(i));
          auto cfg = preset == "tiny" ? SamplingConfig::tiny() : SamplingConfig::paper();
          py::list out;
          for (const auto& w : enumerate_clips(r, cfg)) {
            py::dict d;
            d["start"] = w.start;
            d["fast_frames"] = w.fast_frames;
            d["slow_frames"] = w.slow_frames;
            out.append(d);
          }
          return out;
        },
        py::arg("frames"), py::arg("frame_period_s") = 0.1, py::arg("preset") = "paper");

  m.def("read_pgm", [](const std::string& path) { return from_frame(read_pgm(path)); });
  m.def("write_pgm", [](const U8Array& frame, const std::string& path) { write_pgm(to_frame(frame), path); });

  m.def("crop_resize",
        [](const U8Array& frame, std::int64_t crop_side, std::int64_t out_side) {
          SamplingConfig cfg;
          cfg.crop_side = crop_side;
          cfg.out_side = out_side;
          return from_frame(crop_resize(to_frame(frame), cfg));
        },
        py::arg("frame"), py::arg("crop_side"), py::arg("out_side"));

  m.def("apply_cutmix",
        [](const U8Array& frame, const U8Array& noise, const std::string& corner, double radius) {
          auto out = apply_cutmix(Clip{to_frame(frame)}, to_frame(noise), {parse_corner(corner), radius});
          return from_frame(out[0]);
        },
        py::arg("frame"), py::arg("noise"), py::arg("corner"), py::arg("radius"));

  m.def("hflip", [](const U8Array& frame) { return from_frame(hflip(Clip{to_frame(frame)})[0]); });

  m.def("classify_prob", &classify_prob, py::arg("logit"));

  m.def("gradient_suite",
        [](std::uint64_t seed, int cases_per_op) {
          py::list out;
          for (const auto& r : run_gradient_suite(seed, cases_per_op)) {
            py::dict d;
            d["op"] = r.op;
            d["cases"] = r.cases;
            d["max_rel_error"] = r.max_rel_error;
            d["passed"] = r.passed;
            out.append(d);
          }
          return out;
        },
        py::arg("seed") = 0, py::arg("cases_per_op") = 20);

  m.def("run_cli",
        [](const std::vector<std::string>& args) {
          std::vector<std::string> argv_store{"ebus"};
          argv_store.insert(argv_store.end(), args.begin(), args.end());
          std::vector<char*> argv;
          for (auto& a : argv_store) argv.push_back(a.data());
          std::ostringstream out, err;
          int code;
          {
            py::gil_scoped_release release;
            code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
          }
          return py::make_tuple(code, out.str(), err.str());
        },
        py::arg("args"), "Runs an ebus command; returns (exit_code, stdout, stderr).");

  py::class_<Model>(m, "Model")
      .def(py::init<const std::string&, std::uint64_t, bool>(), py::arg("preset") = "tiny",
           py::arg("seed") = 0, py::arg("single_pathway") = false)
      .def_property_readonly("parameter_count", &Model::parameter_count)
      .def_property_readonly("embed_dim", &Model::embed_dim)
      .def("forward", &Model::forward, py::arg("slow"), py::arg("fast"),
           "Eval-mode forward; returns (logits [N,1], embeddings [N,E]).")
      .def("stage_shapes", &Model::stage_shapes, py::arg("slow"), py::arg("fast"))
      .def("save", &Model::save, py::arg("path"))
      .def("load", &Model::load, py::arg("path"));
}
