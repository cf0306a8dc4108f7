#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <fstream>
#include <sstream>

#include "egoact/harness.hpp"
#include "egoact/selfcheck.hpp"
#include "egoact/synth.hpp"

namespace py = pybind11;

namespace {

using JointList = std::vector<std::pair<double, double>>;

egoact::HandPose2D hand_from_joints(const JointList& joints) {
  if (joints.size() != static_cast<size_t>(egoact::kHandJointCount)) {
    throw egoact::ShapeError("expected 21 (x, y) joints, got " + std::to_string(joints.size()));
  }
  egoact::HandPose2D hand;
  hand.valid = true;
  for (size_t j = 0; j < joints.size(); ++j) {
    hand.joints[j] = {joints[j].first, joints[j].second};
  }
  return hand;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "egocentric action recognition pipeline (C++ core)";

  // Translators run most-recently-registered first, so the base class
  // must be registered before the subclasses it would otherwise shadow.
  py::register_exception<egoact::Error>(m, "PipelineError", PyExc_RuntimeError);
  py::register_exception<egoact::FormatError>(m, "FormatError", PyExc_ValueError);
  py::register_exception<egoact::ConfigError>(m, "ConfigError", PyExc_ValueError);

  m.def(
      "project_point",
      [](std::tuple<double, double, double> xyz, std::tuple<double, double, double, double> f,
         std::pair<int, int> image_size) {
        egoact::CameraIntrinsics cam{std::get<0>(f), std::get<1>(f), std::get<2>(f),
                                     std::get<3>(f), image_size.first, image_size.second};
        egoact::Vec2 p = egoact::project_point(
            {std::get<0>(xyz), std::get<1>(xyz), std::get<2>(xyz)}, cam);
        return std::make_pair(p.x, p.y);
      },
      py::arg("xyz"), py::arg("intrinsics"), py::arg("image_size"),
      "Pinhole projection of one 3D point; intrinsics = (fx, fy, cx, cy).");

  m.def(
      "sample_indices",
      [](int num_frames, int n, const std::string& mode, std::uint64_t seed) {
        egoact::SampleMode m_ = mode == "equal"  ? egoact::SampleMode::Equal
                                : mode == "random" ? egoact::SampleMode::Random
                                                   : throw egoact::ConfigError(
                                                         "mode must be \"equal\" or \"random\"");
        egoact::Rng rng = egoact::make_rng(seed);
        return egoact::sample_indices(num_frames, n, m_, rng);
      },
      py::arg("num_frames"), py::arg("n") = egoact::kSequenceLength, py::arg("mode") = "equal",
      py::arg("seed") = 0,
      "Frame index selection: deterministic equal spacing or seeded random.");

  m.def(
      "canonical_mask",
      [](const std::string& spec) {
        return egoact::mask_spec_string(egoact::parse_mask_spec(spec));
      },
      py::arg("spec"), "Parse a feature mask spec and return its canonical form.");

  m.def(
      "epe",
      [](const JointList& pred, const JointList& gt) {
        return egoact::epe(hand_from_joints(pred), hand_from_joints(gt));
      },
      py::arg("pred"), py::arg("gt"),
      "Mean end-point error in pixels between two 21-joint hand poses.");

  m.def(
      "generate_synth",
      [](const std::string& config_json, const std::string& out_dir) {
        egoact::SynthConfig cfg = egoact::parse_synth_config(config_json);
        egoact::GenerateSummary summary = egoact::generate(cfg, out_dir);
        py::dict out;
        out["files_written"] = summary.files_written;
        out["manifest"] = summary.manifest_path.string();
        return out;
      },
      py::arg("config_json"), py::arg("out_dir"),
      "Generate a synthetic dataset (files + manifest.csv) from a JSON config string.");

  m.def(
      "bayes_check",
      [](const std::string& config_json) {
        egoact::BayesReport r =
            egoact::bayes_separability_check(egoact::parse_synth_config(config_json));
        py::dict out;
        out["train"] = r.train_accuracy;
        out["val"] = r.val_accuracy;
        out["test"] = r.test_accuracy;
        return out;
      },
      py::arg("config_json"),
      "Nearest-template oracle accuracy per split for a synth config.");

  m.def(
      "train_run",
      [](const std::string& config_json, const std::vector<std::string>& overrides) {
        egoact::RunConfig cfg = egoact::parse_run_config(config_json);
        for (const std::string& assignment : overrides) {
          egoact::apply_run_override(cfg, assignment);
        }
        std::ostringstream log;
        egoact::TrainArtifacts a = egoact::run_train(cfg, log);
        py::dict out;
        out["config"] = a.config_echo.string();
        out["history_csv"] = a.history_csv.string();
        out["final_checkpoint"] = a.final_checkpoint.string();
        out["best_checkpoint"] = a.best_checkpoint.string();
        out["final_train_loss"] = a.final_train_loss;
        if (a.best_val_accuracy) out["best_val_accuracy"] = *a.best_val_accuracy;
        out["log"] = log.str();
        return out;
      },
      py::arg("config_json"), py::arg("overrides") = std::vector<std::string>{},
      "Full training run from a run-config JSON string; returns artifact paths.");

  m.def(
      "evaluate_checkpoint",
      [](const std::string& checkpoint, const std::string& manifest, const std::string& root,
         const std::string& split, const std::string& mask) {
        egoact::LoadedCheckpoint loaded = egoact::load_checkpoint(checkpoint);
        egoact::RunConfig cfg;
        cfg.data.manifest = manifest;
        cfg.data.root = root;
        cfg.data.num_classes = loaded.model.cfg.num_classes;
        egoact::Dataset data = egoact::load_run_dataset(cfg);
        egoact::EvalReport report =
            egoact::evaluate(loaded.model, data, egoact::parse_split(split),
                             egoact::parse_mask_spec(mask), loaded.num_object_classes);
        py::dict out;
        out["accuracy"] = report.accuracy;
        out["n_samples"] = report.n_samples;
        out["per_class_accuracy"] = report.per_class_accuracy;
        return out;
      },
      py::arg("checkpoint"), py::arg("manifest"), py::arg("root") = "",
      py::arg("split") = "test", py::arg("mask") = "hands+bbox+label",
      "Evaluate a checkpoint on one dataset split.");

  m.def(
      "predict_file",
      [](const std::string& checkpoint, const std::string& sequence_path) {
        egoact::LoadedCheckpoint loaded = egoact::load_checkpoint(checkpoint);
        std::ifstream in(sequence_path);
        if (!in) throw egoact::IoError("cannot open " + sequence_path);
        egoact::SequenceRecord rec = egoact::parse_sequence_2d(in);
        egoact::Rng rng = egoact::make_rng(0);
        std::vector<int> idx =
            egoact::sample_indices(static_cast<int>(rec.frames.size()),
                                   egoact::kSequenceLength, egoact::SampleMode::Equal, rng);
        egoact::SequenceTensor seq = egoact::build_sequence_tensor(
            rec, idx, egoact::MaskConfig{}, loaded.num_object_classes);
        egoact::Prediction pred = egoact::predict(loaded.model, seq);
        return std::make_pair(pred.class_id, pred.probabilities);
      },
      py::arg("checkpoint"), py::arg("sequence_path"),
      "Classify one .eseq file; returns (class_id, probabilities).");

  m.def(
      "selftest",
      [] {
        std::ostringstream log;
        const int failures = egoact::run_selftest(log);
        return std::make_pair(failures, log.str());
      },
      "Run the invariant suite; returns (failure_count, log).");

  m.def(
      "gradcheck",
      [] {
        std::ostringstream log;
        egoact::GradcheckReport r = egoact::run_gradcheck(log);
        py::dict out;
        out["primitive_max"] = r.primitive_max;
        out["model_max"] = r.model_max;
        out["pass"] = r.pass;
        return out;
      },
      "Finite-difference gradient verification; returns max relative errors.");
}
