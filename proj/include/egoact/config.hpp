#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "egoact/synth.hpp"
#include "egoact/train.hpp"

namespace egoact {

struct DataConfig {
  std::string manifest;
  std::string root;  // defaults to the manifest's directory when empty
  int num_object_classes = 8;
  std::optional<int> num_classes;  // action classes; derived from data when unset
};

// Everything a training run needs, loaded from a JSON config file with
// `--set dotted.key=value` overrides applied on top (override wins).
// model.num_classes may be left unset in the file (sentinel -1); it is
// resolved against the dataset before use.
struct RunConfig {
  DataConfig data;
  ModelConfig model;
  TrainConfig train;
  std::string output_dir = "run";
};

RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::filesystem::path& path);
// assignment has the form "section.key=value", e.g. "train.lr=0.001".
void apply_run_override(RunConfig& cfg, const std::string& assignment);
// Effective-config echo; every field explicit, suitable for re-loading.
std::string run_config_json(const RunConfig& cfg);

SynthConfig parse_synth_config(const std::string& text);
SynthConfig load_synth_config(const std::filesystem::path& path);
// assignment has the form "key=value", e.g. "noise_sigma=0".
void apply_synth_override(SynthConfig& cfg, const std::string& assignment);
std::string synth_config_json(const SynthConfig& cfg);

}  // namespace egoact
