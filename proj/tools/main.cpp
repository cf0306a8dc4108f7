#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "egoact/harness.hpp"
#include "egoact/selfcheck.hpp"

namespace {

// Exit codes: 0 success, 1 usage/config, 2 data/format/io, 3 numeric.
int exit_code_for(const egoact::Error& e) {
  if (dynamic_cast<const egoact::ConfigError*>(&e) != nullptr) return 1;
  if (dynamic_cast<const egoact::FormatError*>(&e) != nullptr ||
      dynamic_cast<const egoact::IoError*>(&e) != nullptr ||
      dynamic_cast<const egoact::GeometryError*>(&e) != nullptr) {
    return 2;
  }
  if (dynamic_cast<const egoact::ShapeError*>(&e) != nullptr ||
      dynamic_cast<const egoact::NumericError*>(&e) != nullptr) {
    return 3;
  }
  return 1;
}

template <typename Fn>
int run_guarded(Fn&& body) {
  try {
    return body();
  } catch (const egoact::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

egoact::LoadedCheckpoint load_checkpoint_arg(const std::string& path) {
  return egoact::load_checkpoint(path);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"egocentric action recognition: projection, features, training, evaluation"};
  app.require_subcommand(1);

  // --- project ---------------------------------------------------------
  std::string raw3d_dir, intrinsics_path, project_out;
  CLI::App* project = app.add_subcommand("project", "convert .eseq3 files to 2D .eseq files");
  project->add_option("--raw3d", raw3d_dir, "directory of .eseq3 inputs")->required();
  project->add_option("--intrinsics", intrinsics_path, "camera intrinsics file")->required();
  project->add_option("--out", project_out, "output directory")->required();

  // --- synth -----------------------------------------------------------
  std::string synth_config_path, synth_out;
  std::vector<std::string> synth_sets;
  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic dataset with manifest");
  synth->add_option("--config", synth_config_path, "synth config JSON (defaults when omitted)");
  synth->add_option("--out", synth_out, "output directory")->required();
  synth->add_option("--set", synth_sets, "override, key=value (repeatable)");

  // --- train -----------------------------------------------------------
  std::string train_config_path;
  std::vector<std::string> train_sets;
  CLI::App* train_cmd = app.add_subcommand("train", "train a classifier from a run config");
  train_cmd->add_option("--config", train_config_path, "run config JSON")->required();
  train_cmd->add_option("--set", train_sets, "override, dotted.key=value (repeatable)");

  // --- eval ------------------------------------------------------------
  std::string eval_ckpt, eval_manifest, eval_root, eval_split = "test";
  std::string eval_mask = "hands+bbox+label", eval_out = "eval_report.json";
  CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a dataset split");
  eval_cmd->add_option("--checkpoint", eval_ckpt, "model checkpoint (.ckpt)")->required();
  eval_cmd->add_option("--manifest", eval_manifest, "dataset manifest CSV")->required();
  eval_cmd->add_option("--root", eval_root, "dataset root (default: manifest directory)");
  eval_cmd->add_option("--split", eval_split, "train, val or test (default test)");
  eval_cmd->add_option("--mask", eval_mask, "feature mask spec, e.g. left+bbox+label");
  eval_cmd->add_option("--out", eval_out, "eval report output path");

  // --- ablate ----------------------------------------------------------
  std::string abl_ckpt, abl_manifest, abl_root, abl_csv = "ablation.csv";
  CLI::App* ablate = app.add_subcommand("ablate", "evaluate the four masking configurations");
  ablate->add_option("--checkpoint", abl_ckpt, "model checkpoint (.ckpt)")->required();
  ablate->add_option("--manifest", abl_manifest, "dataset manifest CSV")->required();
  ablate->add_option("--root", abl_root, "dataset root (default: manifest directory)");
  ablate->add_option("--out-csv", abl_csv, "ablation table CSV output path");

  // --- gradcheck / selftest ---------------------------------------------
  CLI::App* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient verification");
  CLI::App* selftest = app.add_subcommand("selftest", "run the cross-module invariant suite");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  if (project->parsed()) {
    return run_guarded([&] {
      egoact::ProjectSummary summary =
          egoact::run_project(raw3d_dir, intrinsics_path, project_out, std::cout);
      return summary.failed == 0 ? 0 : 2;
    });
  }

  if (synth->parsed()) {
    return run_guarded([&] {
      egoact::SynthConfig cfg;
      if (!synth_config_path.empty()) cfg = egoact::load_synth_config(synth_config_path);
      for (const std::string& assignment : synth_sets) {
        egoact::apply_synth_override(cfg, assignment);
      }
      egoact::GenerateSummary summary = egoact::generate(cfg, synth_out);
      std::cout << "wrote " << summary.files_written << " sequence files under " << synth_out
                << "\nmanifest: " << summary.manifest_path.string() << "\n";
      egoact::BayesReport oracle = egoact::bayes_separability_check(cfg);
      std::cout << "oracle accuracy: train " << oracle.train_accuracy << " (n=" << oracle.n_train
                << "), val " << oracle.val_accuracy << " (n=" << oracle.n_val << "), test "
                << oracle.test_accuracy << " (n=" << oracle.n_test << ")\n";
      return 0;
    });
  }

  if (train_cmd->parsed()) {
    return run_guarded([&] {
      egoact::RunConfig cfg = egoact::load_run_config(train_config_path);
      for (const std::string& assignment : train_sets) {
        egoact::apply_run_override(cfg, assignment);
      }
      egoact::run_train(cfg, std::cout);
      return 0;
    });
  }

  if (eval_cmd->parsed()) {
    return run_guarded([&] {
      egoact::LoadedCheckpoint loaded = load_checkpoint_arg(eval_ckpt);
      egoact::RunConfig data_cfg;
      data_cfg.data.manifest = eval_manifest;
      data_cfg.data.root = eval_root;
      data_cfg.data.num_classes = loaded.model.cfg.num_classes;
      egoact::Dataset data = egoact::load_run_dataset(data_cfg);
      const egoact::Split split = egoact::parse_split(eval_split);
      const egoact::MaskConfig mask = egoact::parse_mask_spec(eval_mask);
      egoact::EvalReport report =
          egoact::evaluate(loaded.model, data, split, mask, loaded.num_object_classes);
      std::cout << "accuracy " << report.accuracy << " on " << eval_split
                << " (n=" << report.n_samples << ", mask " << egoact::mask_spec_string(mask)
                << ")\n";
      egoact::write_eval_report(eval_out, report);
      std::cout << "report: " << eval_out << "\n";
      return 0;
    });
  }

  if (ablate->parsed()) {
    return run_guarded([&] {
      egoact::LoadedCheckpoint loaded = load_checkpoint_arg(abl_ckpt);
      egoact::RunConfig data_cfg;
      data_cfg.data.manifest = abl_manifest;
      data_cfg.data.root = abl_root;
      data_cfg.data.num_classes = loaded.model.cfg.num_classes;
      egoact::Dataset data = egoact::load_run_dataset(data_cfg);
      std::vector<egoact::AblationRow> rows =
          egoact::run_ablation(loaded.model, data, loaded.num_object_classes);
      std::cout << egoact::ablation_table_text(rows);
      std::ofstream csv(abl_csv, std::ios::binary);
      if (!csv) throw egoact::IoError("cannot open " + abl_csv + " for writing");
      csv << egoact::ablation_csv(rows);
      std::cout << "csv: " << abl_csv << "\n";
      return 0;
    });
  }

  if (gradcheck->parsed()) {
    return run_guarded([&] {
      std::cout << "gradcheck:\n";
      egoact::GradcheckReport report = egoact::run_gradcheck(std::cout);
      std::cout << "primitive max rel err " << report.primitive_max << " (tolerance 1e-6)\n"
                << "full model max rel err " << report.model_max << " (tolerance 1e-4)\n"
                << (report.pass ? "PASS" : "FAIL") << "\n";
      return report.pass ? 0 : 3;
    });
  }

  if (selftest->parsed()) {
    return run_guarded([&] {
      const int failures = egoact::run_selftest(std::cout);
      if (failures == 0) {
        std::cout << "selftest: all checks passed\n";
        return 0;
      }
      std::cout << "selftest: " << failures << " check(s) failed\n";
      return 3;
    });
  }

  return 1;  // unreachable: a subcommand is required
}
