#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "egoact/config.hpp"

namespace egoact {

// Loads the dataset named by cfg.data; an empty data.root defaults to the
// manifest's parent directory.
Dataset load_run_dataset(const RunConfig& cfg);

// Explicit model.num_classes wins, then data.num_classes, then the
// dataset-derived count. A head smaller than the data is a config error.
int resolve_num_classes(const RunConfig& cfg, const Dataset& data);

struct TrainArtifacts {
  std::filesystem::path config_echo;
  std::filesystem::path history_csv;
  std::filesystem::path final_checkpoint;
  std::filesystem::path best_checkpoint;  // empty when there is no val split
  std::filesystem::path val_report;       // empty when there is no val split
  double final_train_loss = 0.0;
  std::optional<double> best_val_accuracy;
};

// Full training run: loads data, resolves the head size, echoes the
// effective config into the output directory, trains, and writes the
// history CSV plus final (and best-on-val) checkpoints.
TrainArtifacts run_train(RunConfig cfg, std::ostream& log);

struct AblationRow {
  std::string mask_spec;
  std::optional<double> val_accuracy;  // unset when the split is empty
  std::optional<double> test_accuracy;
};

// The four evaluation-time masking configurations: hands+label,
// left+bbox+label, right+bbox+label, and the unmasked hands+bbox+label.
std::vector<AblationRow> run_ablation(const Model& model, const Dataset& data,
                                      int num_object_classes);
std::string ablation_table_text(const std::vector<AblationRow>& rows);
std::string ablation_csv(const std::vector<AblationRow>& rows);

struct ProjectSummary {
  int converted = 0;
  int failed = 0;
};

// Converts every .eseq3 file under raw_dir into a same-named .eseq in
// out_dir using the camera intrinsics file. Per-file errors are logged
// and counted; remaining files still convert.
ProjectSummary run_project(const std::filesystem::path& raw_dir,
                           const std::filesystem::path& intrinsics_path,
                           const std::filesystem::path& out_dir, std::ostream& log);

}  // namespace egoact
