#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "egoact/featurize.hpp"
#include "egoact/synth.hpp"

using namespace egoact;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("egoact_synth_" + std::to_string(std::random_device{}()));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
};

std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

SynthConfig quick_config() {
  SynthConfig cfg;
  cfg.num_classes = 3;
  cfg.per_class_train = 2;
  cfg.per_class_val = 1;
  cfg.per_class_test = 1;
  cfg.min_frames = 30;
  cfg.max_frames = 40;
  cfg.seed = 12;
  return cfg;
}

}  // namespace

TEST_CASE("class templates have distinct directions and bounded speeds") {
  const int C = 6;
  for (int k = 0; k < C; ++k) {
    MotionTemplate t = class_template(k, C);
    double speed = std::hypot(t.vx, t.vy);
    double expected = 1.2 * (1.0 + 0.5 * (k % 3));
    CHECK(speed == doctest::Approx(expected).epsilon(1e-12));
    double angle = std::atan2(t.vy, t.vx);
    double want = 2.0 * std::numbers::pi * k / C;
    if (want > std::numbers::pi) want -= 2.0 * std::numbers::pi;
    CHECK(angle == doctest::Approx(want).epsilon(1e-9));
  }
  for (int a = 0; a < C; ++a) {
    for (int b = a + 1; b < C; ++b) {
      MotionTemplate ta = class_template(a, C);
      MotionTemplate tb = class_template(b, C);
      CHECK(std::hypot(ta.vx - tb.vx, ta.vy - tb.vy) > 0.5);
    }
  }
}

TEST_CASE("generate_dataset honors the configured counts and classes") {
  SynthConfig cfg = quick_config();
  Dataset ds = generate_dataset(cfg);
  CHECK(ds.train.size() == 6);
  CHECK(ds.val.size() == 3);
  CHECK(ds.test.size() == 3);
  CHECK(ds.num_classes == 3);
  for (const SequenceRecord& rec : ds.train) {
    CHECK(rec.action_id >= 0);
    CHECK(rec.action_id < 3);
    CHECK(rec.frames.size() >= 30);
    CHECK(rec.frames.size() <= 40);
    for (const FramePose& f : rec.frames) {
      CHECK(f.width == cfg.width);
      CHECK(f.height == cfg.height);
    }
  }
}

TEST_CASE("generation is deterministic on disk, byte for byte") {
  TempDir a, b;
  SynthConfig cfg = quick_config();
  GenerateSummary sa = generate(cfg, a.path);
  GenerateSummary sb = generate(cfg, b.path);
  CHECK(sa.files_written == 12);
  CHECK(sa.files_written == sb.files_written);
  CHECK(read_bytes(sa.manifest_path) == read_bytes(sb.manifest_path));

  Manifest manifest;
  {
    std::ifstream in(sa.manifest_path);
    manifest = parse_manifest(in);
  }
  REQUIRE(manifest.entries.size() == 12);
  for (const ManifestEntry& e : manifest.entries) {
    CHECK(read_bytes(a.path / e.sequence_path) == read_bytes(b.path / e.sequence_path));
  }
}

TEST_CASE("written files reload into the in-memory dataset") {
  TempDir dir;
  SynthConfig cfg = quick_config();
  GenerateSummary summary = generate(cfg, dir.path);
  Dataset from_disk = load_dataset(summary.manifest_path, dir.path);
  Dataset in_memory = generate_dataset(cfg);
  REQUIRE(from_disk.train.size() == in_memory.train.size());
  REQUIRE(from_disk.test.size() == in_memory.test.size());
  for (size_t i = 0; i < in_memory.train.size(); ++i) {
    CHECK(from_disk.train[i].action_id == in_memory.train[i].action_id);
    CHECK(from_disk.train[i].frames == in_memory.train[i].frames);
  }
}

TEST_CASE("hands-only data keeps the object block identical across classes") {
  SynthConfig cfg;
  cfg.num_classes = 2;
  cfg.per_class_train = 3;
  cfg.per_class_val = 0;
  cfg.per_class_test = 0;
  cfg.min_frames = 40;
  cfg.max_frames = 40;  // equal lengths align the sequences pairwise
  cfg.noise_sigma = 0.0;
  cfg.signal_source = SignalSource::HandsOnly;
  cfg.seed = 3;
  Dataset ds = generate_dataset(cfg);
  REQUIRE(ds.train.size() == 6);

  // Records i and i+3 share a per-index layout stream, so only the class
  // template separates them.
  for (int i = 0; i < 3; ++i) {
    const SequenceRecord& a = ds.train[static_cast<size_t>(i)];
    const SequenceRecord& b = ds.train[static_cast<size_t>(i + 3)];
    REQUIRE(a.action_id != b.action_id);
    REQUIRE(a.frames.size() == b.frames.size());
    bool hands_differ = false;
    for (size_t t = 0; t < a.frames.size(); ++t) {
      CHECK(a.frames[t].object == b.frames[t].object);
      CHECK(a.frames[t].object.label == 0);
      FrameFeature fa = embed_frame(a.frames[t], cfg.num_object_classes);
      FrameFeature fb = embed_frame(b.frames[t], cfg.num_object_classes);
      for (int c = kBboxOffset; c < kFeatureDim; ++c) {
        CHECK(fa.values[c] == fb.values[c]);
      }
      for (int c = 0; c < kBboxOffset; ++c) {
        hands_differ = hands_differ || fa.values[c] != fb.values[c];
      }
    }
    CHECK(hands_differ);
  }
}

TEST_CASE("object-only data has no hands at all") {
  SynthConfig cfg = quick_config();
  cfg.signal_source = SignalSource::ObjectOnly;
  Dataset ds = generate_dataset(cfg);
  for (const SequenceRecord& rec : ds.train) {
    for (const FramePose& f : rec.frames) {
      CHECK_FALSE(f.left.valid);
      CHECK_FALSE(f.right.valid);
      CHECK(f.object.label == rec.action_id % cfg.num_object_classes);
    }
  }
}

TEST_CASE("both-sources data moves hands and object oppositely") {
  SynthConfig cfg = quick_config();
  cfg.noise_sigma = 0.0;
  cfg.min_frames = 40;
  cfg.max_frames = 40;
  Dataset ds = generate_dataset(cfg);
  for (const SequenceRecord& rec : ds.train) {
    MotionTemplate tpl = class_template(rec.action_id, cfg.num_classes);
    const FramePose& first = rec.frames.front();
    const FramePose& last = rec.frames.back();
    const double T = static_cast<double>(rec.frames.size() - 1);

    REQUIRE(first.left.valid);
    double hand_dx = (last.left.joints[0].x - first.left.joints[0].x) / T;
    double hand_dy = (last.left.joints[0].y - first.left.joints[0].y) / T;
    CHECK(hand_dx == doctest::Approx(tpl.vx).epsilon(1e-9));
    CHECK(hand_dy == doctest::Approx(tpl.vy).epsilon(1e-9));

    double box_dx = (last.object.corners[0].x - first.object.corners[0].x) / T;
    double box_dy = (last.object.corners[0].y - first.object.corners[0].y) / T;
    CHECK(box_dx == doctest::Approx(-tpl.vx).epsilon(1e-9));
    CHECK(box_dy == doctest::Approx(-tpl.vy).epsilon(1e-9));
  }
}

TEST_CASE("coordinates stay inside the image") {
  SynthConfig cfg = quick_config();
  cfg.noise_sigma = 40.0;
  Dataset ds = generate_dataset(cfg);
  auto in_image = [&](const Vec2& p) {
    return p.x >= 0 && p.x <= cfg.width && p.y >= 0 && p.y <= cfg.height;
  };
  for (const SequenceRecord& rec : ds.train) {
    for (const FramePose& f : rec.frames) {
      if (f.left.valid) {
        for (const Vec2& j : f.left.joints) CHECK(in_image(j));
      }
      if (f.right.valid) {
        for (const Vec2& j : f.right.joints) CHECK(in_image(j));
      }
      for (const Vec2& c : f.object.corners) CHECK(in_image(c));
    }
  }
}

TEST_CASE("the oracle is perfect on noiseless data") {
  SynthConfig cfg = quick_config();
  cfg.noise_sigma = 0.0;
  BayesReport report = bayes_separability_check(cfg);
  CHECK(report.train_accuracy == 1.0);
  CHECK(report.val_accuracy == 1.0);
  CHECK(report.test_accuracy == 1.0);
  CHECK(report.n_train == 6);
  CHECK(report.n_val == 3);
  CHECK(report.n_test == 3);
}

TEST_CASE("the oracle collapses toward chance under overwhelming noise") {
  SynthConfig cfg;
  cfg.num_classes = 4;
  cfg.per_class_train = 40;
  cfg.per_class_val = 0;
  cfg.per_class_test = 0;
  cfg.noise_sigma = 500.0;  // template separation is a few pixels/frame
  cfg.seed = 9;
  BayesReport report = bayes_separability_check(cfg);
  CHECK(report.train_accuracy < 0.55);  // 1/C = 0.25 plus generous slack
}

TEST_CASE("the oracle stays calibrated at the stock generation settings") {
  SynthConfig cfg;  // default: 6 classes, 50/10/10, sigma 5
  BayesReport report = bayes_separability_check(cfg);
  CHECK(report.train_accuracy >= 0.99);
  CHECK(report.val_accuracy >= 0.99);
  CHECK(report.test_accuracy >= 0.99);
}

TEST_CASE("bayes_classify recovers the class of clean sequences") {
  SynthConfig cfg = quick_config();
  cfg.noise_sigma = 0.0;
  Dataset ds = generate_dataset(cfg);
  for (const SequenceRecord& rec : ds.train) {
    CHECK(bayes_classify(rec, cfg) == rec.action_id);
  }
}

TEST_CASE("config validation rejects nonsense") {
  SynthConfig cfg = quick_config();
  cfg.num_classes = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = quick_config();
  cfg.noise_sigma = -1.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = quick_config();
  cfg.min_frames = 50;
  cfg.max_frames = 40;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = quick_config();
  cfg.per_class_train = -1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("signal source names round-trip") {
  CHECK(parse_signal_source("hands_only") == SignalSource::HandsOnly);
  CHECK(parse_signal_source("object_only") == SignalSource::ObjectOnly);
  CHECK(parse_signal_source("both") == SignalSource::Both);
  CHECK(signal_source_name(SignalSource::HandsOnly) == "hands_only");
  CHECK(signal_source_name(SignalSource::ObjectOnly) == "object_only");
  CHECK(signal_source_name(SignalSource::Both) == "both");
  CHECK_THROWS_AS(parse_signal_source("none"), ConfigError);
}
