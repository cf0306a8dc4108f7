// Acceptance gate: each test case verifies one release criterion and
// prints a single [PASS]/[FAIL] line so the suite output doubles as a
// checklist. Thresholds are fixed here, not tuned to the implementation.
#include <doctest.h>

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>

#include "egoact/harness.hpp"
#include "egoact/selfcheck.hpp"

using namespace egoact;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("egoact_accept_" + std::to_string(std::random_device{}()));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
};

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const fs::path& p, const std::string& content) {
  std::ofstream out(p, std::ios::binary);
  out << content;
}

#ifndef EGOACT_CLI_PATH
#define EGOACT_CLI_PATH ""
#endif

std::string cli_path() {
  if (const char* env = std::getenv("EGOACT_CLI_PATH")) return env;
  return EGOACT_CLI_PATH;
}

// Runs the real binary; returns its exit code (-1 when it did not exit
// normally). Output streams are discarded — assertions here are about
// artifacts and codes.
int run_cli(const std::string& args) {
  const std::string bin = cli_path();
  REQUIRE_MESSAGE(!bin.empty(), "EGOACT_CLI_PATH must point at the cli binary");
  const std::string cmd = "'" + bin + "' " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// Accumulates sub-checks and prints the one-line verdict when the
// criterion goes out of scope.
struct Criterion {
  std::string name;
  bool ok = true;
  std::ostringstream detail;

  explicit Criterion(std::string n) : name(std::move(n)) {}
  ~Criterion() {
    std::cout << (ok ? "[PASS] " : "[FAIL] ") << name;
    const std::string extra = detail.str();
    if (!extra.empty()) std::cout << " (" << extra << ")";
    std::cout << std::endl;
  }
  void expect(bool cond, const std::string& what) {
    CHECK_MESSAGE(cond, (name + ": " + what));
    ok = ok && cond;
  }
};

double elapsed_seconds(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

// Small synthetic 3D recording standing in for externally converted
// capture data; per-class depth offsets keep the files distinguishable.
RawSequence3D converted_style_raw3d(int frames, int class_id, int variant) {
  RawSequence3D seq;
  seq.width = 640;
  seq.height = 480;
  for (int t = 0; t < frames; ++t) {
    Raw3DFrame f;
    f.left.valid = true;
    f.right.valid = true;
    const double drift = 0.002 * t * (1 + class_id);
    for (int i = 0; i < kHandJointCount; ++i) {
      f.left.joints[i] = {-0.1 + 0.01 * i + drift, 0.005 * i, 0.6 + 0.01 * variant};
      f.right.joints[i] = {0.1 - 0.01 * i - drift, -0.005 * i, 0.7 + 0.01 * variant};
    }
    for (int i = 0; i < kBoxCornerCount3D; ++i) {
      f.object.corners[i] = {0.05 * (i % 2) - 0.02 - drift, 0.05 * ((i / 2) % 2),
                             0.8 + 0.02 * (i / 4)};
    }
    f.object.label = class_id;
    seq.frames.push_back(f);
  }
  return seq;
}

// Extracts one accuracy column from the ablation CSV written by the cli.
std::optional<double> ablation_test_accuracy(const std::string& csv, const std::string& mask) {
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    if (line.rfind(mask + ",", 0) != 0) continue;
    const size_t c1 = line.find(',');
    const size_t c2 = line.find(',', c1 + 1);
    if (c2 == std::string::npos || c2 + 1 >= line.size()) return std::nullopt;
    return std::stod(line.substr(c2 + 1));
  }
  return std::nullopt;
}

SequenceTensor permuted_rows(const SequenceTensor& seq, const std::vector<int>& order) {
  SequenceTensor out = seq;
  for (int r = 0; r < kSequenceLength; ++r) {
    for (int c = 0; c < kFeatureDim; ++c) {
      out.values[static_cast<size_t>(r) * kFeatureDim + c] = seq.at(order[r], c);
    }
  }
  return out;
}

SequenceTensor random_sequence_tensor(Rng& rng) {
  SequenceTensor seq;
  seq.values.resize(static_cast<size_t>(kSequenceLength) * kFeatureDim);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (double& v : seq.values) v = u(rng);
  return seq;
}

}  // namespace

TEST_CASE("criterion 1: converted external data runs the full pipeline end to end") {
  Criterion crit("criterion 1: converted 3D data runs project/train/eval/ablate end to end");
  TempDir dir;

  // Fabricate a small converted-format corpus: six 3D recordings.
  const fs::path raw = dir.path / "raw";
  fs::create_directories(raw);
  const fs::path intr = dir.path / "intrinsics.txt";
  write_file(intr, "600 600 320 240 640 480\n");
  const char* names[] = {"c0_t", "c1_t", "c0_v", "c1_v", "c0_e", "c1_e"};
  for (int i = 0; i < 6; ++i) {
    std::ofstream out(raw / (std::string(names[i]) + ".eseq3"), std::ios::binary);
    write_sequence_3d(out, converted_style_raw3d(44 + i, i % 2, i / 2));
  }

  const fs::path proj = dir.path / "projected";
  crit.expect(run_cli("project --raw3d '" + raw.string() + "' --intrinsics '" + intr.string() +
                      "' --out '" + proj.string() + "'") == 0,
              "projection converts every file");
  for (int i = 0; i < 6; ++i) {
    crit.expect(fs::exists(proj / (std::string(names[i]) + ".eseq")), "converted file exists");
  }

  write_file(proj / "manifest.csv",
             "sequence_path,action_id,split\n"
             "c0_t.eseq,0,train\n"
             "c1_t.eseq,1,train\n"
             "c0_v.eseq,0,val\n"
             "c1_v.eseq,1,val\n"
             "c0_e.eseq,0,test\n"
             "c1_e.eseq,1,test\n");

  RunConfig cfg;
  cfg.data.manifest = (proj / "manifest.csv").generic_string();
  cfg.model = ModelConfig{16, 2, 1, 32, 0.0, kSequenceLength, kFeatureDim, -1};
  cfg.train.lr = 1e-3;
  cfg.train.batch_size = 2;
  cfg.train.epochs = 2;
  cfg.train.seed = 5;
  cfg.output_dir = (dir.path / "run").generic_string();
  write_file(dir.path / "cfg.json", run_config_json(cfg));

  crit.expect(run_cli("train --config '" + (dir.path / "cfg.json").string() + "'") == 0,
              "training completes");
  crit.expect(fs::exists(dir.path / "run" / "final.ckpt"), "final checkpoint written");
  crit.expect(fs::exists(dir.path / "run" / "history.csv"), "history written");

  const std::string ckpt = (dir.path / "run" / "final.ckpt").string();
  const std::string manifest = (proj / "manifest.csv").string();
  crit.expect(run_cli("eval --checkpoint '" + ckpt + "' --manifest '" + manifest +
                      "' --split test --out '" + (dir.path / "report.json").string() + "'") == 0,
              "evaluation completes");
  crit.expect(fs::exists(dir.path / "report.json"), "eval report written");
  crit.expect(run_cli("ablate --checkpoint '" + ckpt + "' --manifest '" + manifest +
                      "' --out-csv '" + (dir.path / "ablation.csv").string() + "'") == 0,
              "ablation completes");
  crit.expect(fs::exists(dir.path / "ablation.csv"), "ablation table written");
  // No accuracy threshold here: the promise is that the protocol runs.
}

TEST_CASE("criterion 2: gradient checks pass within tolerance and time") {
  Criterion crit("criterion 2: finite-difference gradcheck (primitives < 1e-6, model < 1e-4, < 60 s)");
  const auto start = std::chrono::steady_clock::now();
  std::ostringstream log;
  GradcheckReport report = run_gradcheck(log);
  const double secs = elapsed_seconds(start);

  crit.expect(report.pass, "gradcheck reports pass");
  crit.expect(report.primitive_max < 1e-6, "primitive max relative error < 1e-6");
  crit.expect(report.model_max < 1e-4, "full-model max relative error < 1e-4");
  crit.expect(!report.primitives.empty(), "primitive checks ran");
  crit.expect(secs < 60.0, "runtime under 60 s");
  crit.detail << "primitives " << report.primitive_max << ", model " << report.model_max << ", "
              << secs << " s";
}

TEST_CASE("criterion 3: training on separable synthetic data reaches 0.95 test accuracy") {
  Criterion crit("criterion 3: stock-config training reaches test accuracy >= 0.95 in < 5 min");
  TempDir dir;

  SynthConfig synth_cfg;  // stock generator settings
  const fs::path data_dir = dir.path / "data";
  GenerateSummary gen = generate(synth_cfg, data_dir);
  crit.expect(gen.files_written == 420, "6 classes x (50+10+10) sequences written");

  Dataset data = load_dataset(gen.manifest_path, data_dir, std::nullopt);
  crit.expect(data.train.size() == 300, "300 training sequences");
  crit.expect(data.val.size() == 60, "60 validation sequences");
  crit.expect(data.test.size() == 60, "60 test sequences");
  crit.expect(data.num_classes == 6, "6 classes");

  BayesReport oracle = bayes_separability_check(synth_cfg);
  crit.expect(oracle.train_accuracy >= 0.99, "oracle train accuracy >= 0.99");
  crit.expect(oracle.val_accuracy >= 0.99, "oracle val accuracy >= 0.99");
  crit.expect(oracle.test_accuracy >= 0.99, "oracle test accuracy >= 0.99");

  RunConfig cfg;  // stock model and optimizer settings
  cfg.data.manifest = gen.manifest_path.generic_string();
  cfg.model.num_classes = -1;  // resolved from the data, as config files do
  cfg.train.epochs = 16;       // within the <= 30 epoch budget
  cfg.train.seed = 1;
  cfg.output_dir = (dir.path / "run").generic_string();

  const auto start = std::chrono::steady_clock::now();
  std::ostringstream log;
  TrainArtifacts artifacts = run_train(cfg, log);
  const double secs = elapsed_seconds(start);
  crit.expect(secs < 300.0, "training runtime under 5 minutes");

  crit.expect(!artifacts.best_checkpoint.empty(), "best checkpoint tracked on val");
  LoadedCheckpoint best = load_checkpoint(artifacts.best_checkpoint);
  EvalReport report = evaluate(best.model, data, Split::Test, MaskConfig{}, 8);
  crit.expect(report.accuracy >= 0.95, "test accuracy >= 0.95");
  crit.detail << "test accuracy " << report.accuracy << ", " << secs << " s";
}

TEST_CASE("criterion 4: masked evaluation isolates the signal-bearing features") {
  Criterion crit("criterion 4: ablation keeps full-feature accuracy and floors the masked signal");
  TempDir dir;

  // Fast training recipe shared by both runs; the generator settings
  // match the learning-capability dataset except for the signal source.
  auto train_on = [&](const fs::path& data_dir, const fs::path& out_dir) {
    RunConfig cfg;
    cfg.data.manifest = (data_dir / "manifest.csv").generic_string();
    cfg.model = ModelConfig{64, 4, 2, 256, 0.0, kSequenceLength, kFeatureDim, -1};
    cfg.train.lr = 3e-4;
    cfg.train.epochs = 25;
    cfg.train.seed = 1;
    cfg.train.augment_hflip_p = 0.0;
    cfg.train.augment_crop_p = 0.0;
    cfg.output_dir = out_dir.generic_string();
    std::ostringstream log;
    return run_train(cfg, log);
  };
  auto full_row_and_masked = [&](const fs::path& data_dir, const fs::path& ckpt,
                                 const std::string& masked_spec) {
    const fs::path csv = dir.path / "ablation.csv";
    crit.expect(run_cli("ablate --checkpoint '" + ckpt.string() + "' --manifest '" +
                        (data_dir / "manifest.csv").string() + "' --out-csv '" + csv.string() +
                        "'") == 0,
                "ablate command succeeds");
    std::optional<double> full = ablation_test_accuracy(read_text(csv), "hands+bbox+label");
    crit.expect(full.has_value(), "full-feature row present in the ablation table");

    LoadedCheckpoint loaded = load_checkpoint(ckpt);
    Dataset data = load_dataset(data_dir / "manifest.csv", data_dir, loaded.model.cfg.num_classes);
    EvalReport masked = evaluate(loaded.model, data, Split::Test, parse_mask_spec(masked_spec),
                                 loaded.num_object_classes);
    return std::make_pair(full.value_or(0.0), masked.accuracy);
  };

  SynthConfig hands_cfg;
  hands_cfg.signal_source = SignalSource::HandsOnly;
  const fs::path hands_dir = dir.path / "hands";
  generate(hands_cfg, hands_dir);
  BayesReport hands_oracle = bayes_separability_check(hands_cfg);
  crit.expect(hands_oracle.test_accuracy >= 0.99, "hand-signal data is oracle-separable");

  TrainArtifacts hands_run = train_on(hands_dir, dir.path / "hands_run");
  auto [hands_full, hands_masked] =
      full_row_and_masked(hands_dir, hands_run.best_checkpoint, "bbox+label");
  crit.expect(hands_full >= 0.90, "hand signal: full-feature accuracy >= 0.90");
  crit.expect(hands_masked <= 1.0 / 6.0 + 0.10, "hand signal: hands-masked accuracy at chance");

  SynthConfig object_cfg;
  object_cfg.signal_source = SignalSource::ObjectOnly;
  const fs::path object_dir = dir.path / "object";
  generate(object_cfg, object_dir);
  BayesReport object_oracle = bayes_separability_check(object_cfg);
  crit.expect(object_oracle.test_accuracy >= 0.99, "object-signal data is oracle-separable");

  TrainArtifacts object_run = train_on(object_dir, dir.path / "object_run");
  auto [object_full, object_masked] =
      full_row_and_masked(object_dir, object_run.best_checkpoint, "hands");
  crit.expect(object_full >= 0.90, "object signal: full-feature accuracy >= 0.90");
  crit.expect(object_masked <= 1.0 / 6.0 + 0.10, "object signal: object-masked accuracy at chance");

  crit.detail << "hands " << hands_full << "/" << hands_masked << ", object " << object_full << "/"
              << object_masked;
}

TEST_CASE("criterion 5: eight sequences overfit to near-zero training loss") {
  Criterion crit("criterion 5: 8-sequence overfit reaches train cross-entropy < 0.01 in 200 epochs");
  TempDir dir;

  SynthConfig synth_cfg;
  synth_cfg.num_classes = 4;
  synth_cfg.per_class_train = 2;
  synth_cfg.per_class_val = 0;
  synth_cfg.per_class_test = 0;
  synth_cfg.min_frames = 40;
  synth_cfg.max_frames = 40;
  const fs::path data_dir = dir.path / "data";
  GenerateSummary gen = generate(synth_cfg, data_dir);
  crit.expect(gen.files_written == 8, "exactly 8 training sequences");

  RunConfig cfg;
  cfg.data.manifest = gen.manifest_path.generic_string();
  cfg.model = ModelConfig{128, 4, 1, 512, 0.0, kSequenceLength, kFeatureDim, -1};
  cfg.train.lr = 2e-3;
  cfg.train.batch_size = 4;
  cfg.train.epochs = 200;
  cfg.train.seed = 1;
  cfg.train.augment_hflip_p = 0.0;
  cfg.train.augment_crop_p = 0.0;
  cfg.output_dir = (dir.path / "run").generic_string();

  std::ostringstream log;
  TrainArtifacts artifacts = run_train(cfg, log);

  const std::string history = read_text(artifacts.history_csv);
  crit.expect(std::count(history.begin(), history.end(), '\n') == 201, "200 epochs recorded");
  crit.expect(artifacts.final_train_loss < 0.01, "final train cross-entropy < 0.01");
  crit.detail << "final loss " << artifacts.final_train_loss;
}

TEST_CASE("criterion 6: exact-value invariants hold") {
  Criterion crit("criterion 6: exact invariants (hflip, dims, sampling, EPE, checkpoint, softmax)");

  // Horizontal flip is an involution, bit for bit, on representable
  // coordinates (quarter-pixel grid keeps width - x exact).
  SequenceRecord rec;
  for (int t = 0; t < 5; ++t) {
    FramePose f;
    f.width = 1280;
    f.height = 720;
    f.left.valid = true;
    f.right.valid = (t % 2 == 0);
    for (int i = 0; i < kHandJointCount; ++i) {
      f.left.joints[i] = {100.0 + 0.25 * i + t, 50.0 + 0.5 * i};
      if (f.right.valid) f.right.joints[i] = {900.0 - 0.25 * i, 60.0 + 0.25 * i + t};
    }
    f.object.corners = {Vec2{100.25, 50}, Vec2{300.5, 50}, Vec2{300.5, 200}, Vec2{100.25, 200}};
    f.object.label = 3;
    rec.frames.push_back(f);
  }
  SequenceRecord flipped_twice = hflip(hflip(rec));
  crit.expect(flipped_twice == rec, "hflip twice returns the identical record");

  crit.expect(kFeatureDim == 93, "feature dimension is 93");
  crit.expect(kSequenceLength == 40, "sequence length is 40");
  FrameFeature feat = embed_frame(rec.frames[0], 8);
  crit.expect(feat.values.size() == 93, "embedded frame has 93 values");

  Rng rng = make_rng(0);
  std::vector<int> idx80 = sample_indices(80, 40, SampleMode::Equal, rng);
  std::vector<int> idx40 = sample_indices(40, 40, SampleMode::Equal, rng);
  std::vector<int> idx20 = sample_indices(20, 40, SampleMode::Equal, rng);
  bool sampling_ok = idx80.size() == 40 && idx40.size() == 40 && idx20.size() == 40;
  for (int i = 0; i < 40 && sampling_ok; ++i) {
    sampling_ok = idx80[i] == 2 * i && idx40[i] == i && idx20[i] == i / 2;
  }
  crit.expect(sampling_ok, "equal sampling matches the closed form for T in {20, 40, 80}");

  HandPose2D a, b;
  a.valid = b.valid = true;
  for (int i = 0; i < kHandJointCount; ++i) {
    a.joints[i] = {10.0 * i, 5.0 * i};
    b.joints[i] = {10.0 * i + 3.0, 5.0 * i + 4.0};
  }
  crit.expect(epe(a, a) == 0.0, "EPE of identical poses is exactly 0");
  crit.expect(epe(a, b) == 5.0, "EPE of a uniform 3-4 offset is exactly 5");

  TempDir dir;
  ModelConfig mc{24, 2, 1, 48, 0.0, kSequenceLength, kFeatureDim, 4};
  Rng init_rng = make_rng(11, kModelInitStream);
  Model model = init_model(mc, init_rng);
  save_checkpoint(model, 8, dir.path / "a.ckpt");
  LoadedCheckpoint loaded = load_checkpoint(dir.path / "a.ckpt");
  save_checkpoint(loaded.model, loaded.num_object_classes, dir.path / "b.ckpt");
  crit.expect(read_text(dir.path / "a.ckpt") == read_text(dir.path / "b.ckpt"),
              "checkpoint round-trip is bitwise identical");

  nn::Tape tape;
  Rng soft_rng = make_rng(17);
  std::uniform_real_distribution<double> u(-200.0, 200.0);
  std::vector<double> logits(7 * 9);
  for (double& v : logits) v = u(soft_rng);
  nn::TensorPtr soft = tape.softmax_lastdim(nn::make_tensor({7, 9}, logits));
  bool rows_ok = true;
  for (int r = 0; r < 7; ++r) {
    double sum = 0.0;
    for (int c = 0; c < 9; ++c) sum += soft->data[static_cast<size_t>(r) * 9 + c];
    rows_ok = rows_ok && std::abs(sum - 1.0) <= 1e-12;
  }
  crit.expect(rows_ok, "softmax rows sum to 1 within 1e-12");
}

TEST_CASE("criterion 7: positional embeddings are the only source of order sensitivity") {
  Criterion crit("criterion 7: zero positions => permutation-invariant; random => order-sensitive");

  ModelConfig mc{32, 2, 2, 64, 0.0, kSequenceLength, kFeatureDim, 5};
  Rng init_rng = make_rng(23, kModelInitStream);
  Model model = init_model(mc, init_rng);

  Rng data_rng = make_rng(29);
  SequenceTensor seq = random_sequence_tensor(data_rng);

  std::vector<int> order(kSequenceLength);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), data_rng);
  SequenceTensor shuffled = permuted_rows(seq, order);

  std::fill(model.pos_embed->data.begin(), model.pos_embed->data.end(), 0.0);
  std::vector<double> base = forward(model, seq);
  std::vector<double> permuted = forward(model, shuffled);
  double max_delta = 0.0;
  for (size_t i = 0; i < base.size(); ++i) {
    max_delta = std::max(max_delta, std::abs(base[i] - permuted[i]));
  }
  crit.expect(max_delta <= 1e-9, "zero positional embeddings: logits permutation-invariant");
  crit.detail << "zero-pos delta " << max_delta;

  Rng fresh_rng = make_rng(23, kModelInitStream);
  Model positional = init_model(mc, fresh_rng);  // stock init, nonzero positions
  std::vector<double> with_pos = forward(positional, seq);
  std::vector<double> with_pos_perm = forward(positional, shuffled);
  double pos_delta = 0.0;
  for (size_t i = 0; i < with_pos.size(); ++i) {
    pos_delta = std::max(pos_delta, std::abs(with_pos[i] - with_pos_perm[i]));
  }
  crit.expect(pos_delta > 1e-6, "random positional embeddings: some logit moves by > 1e-6");
  crit.detail << ", random-pos delta " << pos_delta;
}

TEST_CASE("criterion 8: repeated training runs are bitwise identical") {
  Criterion crit("criterion 8: identical config/seed => identical history and final checkpoint");
  TempDir dir;

  SynthConfig synth_cfg;
  synth_cfg.num_classes = 3;
  synth_cfg.per_class_train = 4;
  synth_cfg.per_class_val = 2;
  synth_cfg.per_class_test = 2;
  synth_cfg.min_frames = 40;
  synth_cfg.max_frames = 44;
  const fs::path data_dir = dir.path / "data";
  GenerateSummary gen = generate(synth_cfg, data_dir);

  // Dropout and both augmentations stay on so every rng-consuming path
  // is exercised by the reproducibility claim.
  RunConfig cfg;
  cfg.data.manifest = gen.manifest_path.generic_string();
  cfg.model = ModelConfig{64, 4, 2, 256, 0.1, kSequenceLength, kFeatureDim, -1};
  cfg.train.epochs = 5;
  cfg.train.seed = 7;
  cfg.output_dir = (dir.path / "run_a").generic_string();
  write_file(dir.path / "cfg.json", run_config_json(cfg));

  crit.expect(run_cli("train --config '" + (dir.path / "cfg.json").string() + "'") == 0,
              "first training run succeeds");
  crit.expect(run_cli("train --config '" + (dir.path / "cfg.json").string() +
                      "' --set output_dir='" + (dir.path / "run_b").generic_string() + "'") == 0,
              "second training run succeeds");

  const std::string history_a = read_text(dir.path / "run_a" / "history.csv");
  crit.expect(!history_a.empty(), "history written");
  crit.expect(history_a == read_text(dir.path / "run_b" / "history.csv"),
              "history CSVs are byte-identical");
  crit.expect(read_text(dir.path / "run_a" / "final.ckpt") ==
                  read_text(dir.path / "run_b" / "final.ckpt"),
              "final checkpoints are bitwise identical");
  crit.expect(read_text(dir.path / "run_a" / "best.ckpt") ==
                  read_text(dir.path / "run_b" / "best.ckpt"),
              "best checkpoints are bitwise identical");
}
