#include "egoact/harness.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>

namespace egoact {

namespace {

std::filesystem::path dataset_root(const RunConfig& cfg) {
  if (!cfg.data.root.empty()) return cfg.data.root;
  std::filesystem::path manifest(cfg.data.manifest);
  return manifest.has_parent_path() ? manifest.parent_path() : std::filesystem::path(".");
}

}  // namespace

Dataset load_run_dataset(const RunConfig& cfg) {
  return load_dataset(cfg.data.manifest, dataset_root(cfg), cfg.data.num_classes);
}

int resolve_num_classes(const RunConfig& cfg, const Dataset& data) {
  const int resolved = cfg.model.num_classes > 0 ? cfg.model.num_classes : data.num_classes;
  if (resolved < 1) {
    throw ConfigError("cannot resolve num_classes: none configured and the dataset is empty");
  }
  if (resolved < data.num_classes) {
    throw ConfigError("model.num_classes=" + std::to_string(resolved) +
                      " is smaller than the dataset's " + std::to_string(data.num_classes) +
                      " classes");
  }
  return resolved;
}

TrainArtifacts run_train(RunConfig cfg, std::ostream& log) {
  Dataset data = load_run_dataset(cfg);
  cfg.model.num_classes = resolve_num_classes(cfg, data);
  cfg.model.validate();
  cfg.train.validate();

  const std::filesystem::path out_dir(cfg.output_dir);
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create output directory " + out_dir.string());

  TrainArtifacts artifacts;
  artifacts.config_echo = out_dir / "config.json";
  {
    std::ofstream echo(artifacts.config_echo, std::ios::binary);
    if (!echo) throw IoError("cannot write " + artifacts.config_echo.string());
    echo << run_config_json(cfg);
  }

  log << "training on " << data.train.size() << " sequences (" << data.val.size() << " val, "
      << data.test.size() << " test), " << cfg.model.num_classes << " classes\n";

  Rng init_rng = make_rng(cfg.train.seed, kModelInitStream);
  Model model = init_model(cfg.model, init_rng);
  log << "model parameters: " << model.parameter_count() << "\n";

  TrainResult result = train(model, data, cfg.train, cfg.data.num_object_classes, &log);

  artifacts.history_csv = out_dir / "history.csv";
  write_history_csv(artifacts.history_csv, result.history);
  if (!result.history.empty()) {
    artifacts.final_train_loss = result.history.back().train_loss;
  }

  artifacts.final_checkpoint = out_dir / "final.ckpt";
  save_checkpoint(model, cfg.data.num_object_classes, artifacts.final_checkpoint);

  if (result.best) {
    artifacts.best_checkpoint = out_dir / "best.ckpt";
    save_checkpoint(*result.best, cfg.data.num_object_classes, artifacts.best_checkpoint);
    EvalReport report =
        evaluate(*result.best, data, Split::Val, cfg.train.mask, cfg.data.num_object_classes);
    artifacts.best_val_accuracy = report.accuracy;
    artifacts.val_report = out_dir / "eval_val.json";
    write_eval_report(artifacts.val_report, report);
    log << "best val accuracy " << report.accuracy << "\n";
  }
  log << "artifacts written to " << out_dir.string() << "\n";
  return artifacts;
}

std::vector<AblationRow> run_ablation(const Model& model, const Dataset& data,
                                      int num_object_classes) {
  const std::vector<std::string> specs = {"hands+label", "left+bbox+label", "right+bbox+label",
                                          "hands+bbox+label"};
  std::vector<AblationRow> rows;
  rows.reserve(specs.size());
  for (const std::string& spec : specs) {
    const MaskConfig mask = parse_mask_spec(spec);
    AblationRow row;
    row.mask_spec = spec;
    if (!data.val.empty()) {
      row.val_accuracy = evaluate(model, data, Split::Val, mask, num_object_classes).accuracy;
    }
    if (!data.test.empty()) {
      row.test_accuracy = evaluate(model, data, Split::Test, mask, num_object_classes).accuracy;
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string ablation_table_text(const std::vector<AblationRow>& rows) {
  auto pct = [](const std::optional<double>& v) -> std::string {
    if (!v) return "-";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", *v * 100.0);
    return buf;
  };
  size_t name_width = std::string("mask").size();
  for (const AblationRow& row : rows) name_width = std::max(name_width, row.mask_spec.size());

  std::ostringstream out;
  out << std::left;
  out.width(static_cast<std::streamsize>(name_width + 2));
  out << "mask";
  out << std::right;
  out.width(14);
  out << "validation %";
  out.width(10);
  out << "test %";
  out << "\n";
  for (const AblationRow& row : rows) {
    out << std::left;
    out.width(static_cast<std::streamsize>(name_width + 2));
    out << row.mask_spec;
    out << std::right;
    out.width(14);
    out << pct(row.val_accuracy);
    out.width(10);
    out << pct(row.test_accuracy);
    out << "\n";
  }
  return out.str();
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
  auto frac = [](const std::optional<double>& v) -> std::string {
    if (!v) return "";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.10g", *v);
    return buf;
  };
  std::ostringstream out;
  out << "mask,val_accuracy,test_accuracy\n";
  for (const AblationRow& row : rows) {
    out << row.mask_spec << ',' << frac(row.val_accuracy) << ',' << frac(row.test_accuracy)
        << '\n';
  }
  return out.str();
}

ProjectSummary run_project(const std::filesystem::path& raw_dir,
                           const std::filesystem::path& intrinsics_path,
                           const std::filesystem::path& out_dir, std::ostream& log) {
  std::ifstream intr(intrinsics_path);
  if (!intr) throw IoError("cannot open intrinsics file " + intrinsics_path.string());
  CameraIntrinsics cam;
  try {
    cam = parse_intrinsics(intr);
  } catch (const FormatError& e) {
    throw FormatError(intrinsics_path.string() + ": " + e.what());
  }

  if (!std::filesystem::is_directory(raw_dir)) {
    throw IoError("not a directory: " + raw_dir.string());
  }
  std::vector<std::filesystem::path> inputs;
  for (const auto& entry : std::filesystem::directory_iterator(raw_dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".eseq3") {
      inputs.push_back(entry.path());
    }
  }
  std::sort(inputs.begin(), inputs.end());

  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create output directory " + out_dir.string());

  ProjectSummary summary;
  for (const std::filesystem::path& input : inputs) {
    try {
      std::ifstream in(input);
      if (!in) throw IoError("cannot open " + input.string());
      RawSequence3D raw = parse_sequence_3d(in);
      if (raw.width != cam.width || raw.height != cam.height) {
        throw FormatError("sequence is " + std::to_string(raw.width) + "x" +
                          std::to_string(raw.height) + " but intrinsics are for " +
                          std::to_string(cam.width) + "x" + std::to_string(cam.height));
      }
      SequenceRecord rec;
      rec.frames = project_sequence(raw, cam);
      rec.source_id = input.filename().string();
      const std::filesystem::path out_path =
          out_dir / input.filename().replace_extension(".eseq");
      std::ofstream out(out_path, std::ios::binary);
      if (!out) throw IoError("cannot open " + out_path.string() + " for writing");
      write_sequence_2d(out, rec);
      if (!out) throw IoError("failed writing " + out_path.string());
      ++summary.converted;
    } catch (const Error& e) {
      log << "error: " << input.string() << ": " << e.what() << "\n";
      ++summary.failed;
    }
  }
  log << "converted " << summary.converted << " of " << inputs.size() << " sequence files\n";
  return summary;
}

}  // namespace egoact
