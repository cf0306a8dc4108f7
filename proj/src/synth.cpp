#include "egoact/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>

namespace egoact {

namespace {

constexpr double kAnchorJitter = 50.0;   // uniform offset of the scene anchor, px
constexpr double kHandSpacing = 90.0;    // left/right hand distance from anchor, px
constexpr double kBoxHalfWidth = 60.0;   // object box is 120 x 90 px
constexpr double kBoxHalfHeight = 45.0;

// Seed-stream tags so layout draws (shared across classes) and noise
// draws (per class) never reuse a sequence.
constexpr std::uint64_t kLayoutStream = 0x4C41ull << 32;  // "LA"
constexpr std::uint64_t kNoiseStream = 0x4E6Full << 32;   // "No"

int split_id(Split s) {
  switch (s) {
    case Split::Train: return 0;
    case Split::Val: return 1;
    default: return 2;
  }
}

// A stylized 21-joint hand: wrist at the origin, five 4-joint fingers
// fanned upward, all within a 32 px radius. The left hand mirrors it.
std::array<Vec2, kHandJointCount> hand_offsets(bool mirror_x) {
  std::array<Vec2, kHandJointCount> out{};
  out[0] = {0.0, 0.0};
  for (int finger = 0; finger < 5; ++finger) {
    const double angle = (finger - 2) * 0.35;  // radians off vertical
    for (int seg = 1; seg <= 4; ++seg) {
      const double r = 8.0 * seg;
      const size_t joint = static_cast<size_t>(1 + finger * 4 + (seg - 1));
      out[joint] = {std::sin(angle) * r, -std::cos(angle) * r};
    }
  }
  if (mirror_x) {
    for (Vec2& v : out) v.x = -v.x;
  }
  return out;
}

double clamp_to(double v, double hi) { return std::clamp(v, 0.0, hi); }

struct NoiseSource {
  Rng& rng;
  double sigma;
  std::normal_distribution<double> dist{0.0, 1.0};

  Vec2 jitter() {
    if (sigma <= 0.0) return {0.0, 0.0};
    const double dx = dist(rng) * sigma;
    const double dy = dist(rng) * sigma;
    return {dx, dy};
  }
};

HandPose2D make_hand(const Vec2& center, const std::array<Vec2, kHandJointCount>& offsets,
                     NoiseSource& noise, double w, double h) {
  HandPose2D hand;
  hand.valid = true;
  for (int j = 0; j < kHandJointCount; ++j) {
    const Vec2 n = noise.jitter();
    hand.joints[static_cast<size_t>(j)] = {
        clamp_to(center.x + offsets[static_cast<size_t>(j)].x + n.x, w),
        clamp_to(center.y + offsets[static_cast<size_t>(j)].y + n.y, h)};
  }
  return hand;
}

ObjectPose2D make_box(const Vec2& center, int label, double w, double h) {
  ObjectPose2D box;
  box.label = label;
  const double x0 = clamp_to(center.x - kBoxHalfWidth, w);
  const double x1 = clamp_to(center.x + kBoxHalfWidth, w);
  const double y0 = clamp_to(center.y - kBoxHalfHeight, h);
  const double y1 = clamp_to(center.y + kBoxHalfHeight, h);
  box.corners = {Vec2{x0, y0}, Vec2{x1, y0}, Vec2{x1, y1}, Vec2{x0, y1}};
  return box;
}

SequenceRecord make_record(const SynthConfig& cfg, Split split, int class_id, int index) {
  const MotionTemplate v = class_template(class_id, cfg.num_classes);
  const double w = cfg.width;
  const double h = cfg.height;
  const Vec2 center{w / 2.0, h / 2.0};
  const bool hands_signal = cfg.signal_source != SignalSource::ObjectOnly;
  const bool object_signal = cfg.signal_source != SignalSource::HandsOnly;

  // Layout draws are shared across classes so that, at equal (split,
  // index), two classes differ only through their motion templates.
  Rng layout_rng = make_rng(cfg.seed, kLayoutStream | static_cast<std::uint64_t>(split_id(split)),
                            static_cast<std::uint64_t>(index));
  std::uniform_int_distribution<int> frames_dist(cfg.min_frames, cfg.max_frames);
  std::uniform_real_distribution<double> anchor_dist(-kAnchorJitter, kAnchorJitter);
  const int num_frames = frames_dist(layout_rng);
  const Vec2 hand_anchor{center.x + anchor_dist(layout_rng), center.y + anchor_dist(layout_rng)};
  const Vec2 object_anchor{center.x + anchor_dist(layout_rng), center.y + anchor_dist(layout_rng)};

  Rng noise_rng =
      make_rng(cfg.seed,
               kNoiseStream | (static_cast<std::uint64_t>(split_id(split)) << 16) |
                   static_cast<std::uint64_t>(class_id),
               static_cast<std::uint64_t>(index));
  NoiseSource noise{noise_rng, cfg.noise_sigma};

  const auto left_offsets = hand_offsets(true);
  const auto right_offsets = hand_offsets(false);
  const int label = object_signal ? class_id % cfg.num_object_classes : 0;

  SequenceRecord rec;
  rec.action_id = class_id;
  rec.frames.reserve(static_cast<size_t>(num_frames));
  for (int t = 0; t < num_frames; ++t) {
    FramePose frame;
    frame.width = cfg.width;
    frame.height = cfg.height;
    if (hands_signal) {
      const Vec2 drift{v.vx * t, v.vy * t};
      frame.left = make_hand({hand_anchor.x - kHandSpacing + drift.x, hand_anchor.y + drift.y},
                             left_offsets, noise, w, h);
      frame.right = make_hand({hand_anchor.x + kHandSpacing + drift.x, hand_anchor.y + drift.y},
                              right_offsets, noise, w, h);
    }
    if (object_signal) {
      const Vec2 n = noise.jitter();
      frame.object = make_box({object_anchor.x - v.vx * t + n.x, object_anchor.y - v.vy * t + n.y},
                              label, w, h);
    } else {
      // Static, noise-free box at the image center: by construction the
      // object block carries no class information.
      frame.object = make_box(center, 0, w, h);
    }
    rec.frames.push_back(frame);
  }
  return rec;
}

int per_class_count(const SynthConfig& cfg, Split split) {
  switch (split) {
    case Split::Train: return cfg.per_class_train;
    case Split::Val: return cfg.per_class_val;
    default: return cfg.per_class_test;
  }
}

}  // namespace

SignalSource parse_signal_source(const std::string& s) {
  if (s == "hands_only") return SignalSource::HandsOnly;
  if (s == "object_only") return SignalSource::ObjectOnly;
  if (s == "both") return SignalSource::Both;
  throw ConfigError("unknown signal source \"" + s +
                    "\" (expected hands_only, object_only or both)");
}

std::string signal_source_name(SignalSource s) {
  switch (s) {
    case SignalSource::HandsOnly: return "hands_only";
    case SignalSource::ObjectOnly: return "object_only";
    default: return "both";
  }
}

void SynthConfig::validate() const {
  if (num_classes < 1) throw ConfigError("synth config: num_classes must be >= 1");
  if (per_class_train < 0 || per_class_val < 0 || per_class_test < 0) {
    throw ConfigError("synth config: per-class counts must be >= 0");
  }
  if (min_frames < 1) throw ConfigError("synth config: min_frames must be >= 1");
  if (max_frames < min_frames) throw ConfigError("synth config: max_frames < min_frames");
  if (noise_sigma < 0.0) throw ConfigError("synth config: noise_sigma must be >= 0");
  if (width < 2 || height < 2) throw ConfigError("synth config: image size must be >= 2x2");
  if (num_object_classes < 1) throw ConfigError("synth config: num_object_classes must be >= 1");
}

MotionTemplate class_template(int class_id, int num_classes) {
  const double angle = 2.0 * std::numbers::pi * class_id / num_classes;
  const double speed = 1.2 * (1.0 + 0.5 * (class_id % 3));
  return {speed * std::cos(angle), speed * std::sin(angle)};
}

Dataset generate_dataset(const SynthConfig& cfg) {
  cfg.validate();
  Dataset data;
  data.num_classes = cfg.num_classes;
  for (Split split : {Split::Train, Split::Val, Split::Test}) {
    const int count = per_class_count(cfg, split);
    for (int k = 0; k < cfg.num_classes; ++k) {
      for (int i = 0; i < count; ++i) {
        SequenceRecord rec = make_record(cfg, split, k, i);
        switch (split) {
          case Split::Train: data.train.push_back(std::move(rec)); break;
          case Split::Val: data.val.push_back(std::move(rec)); break;
          default: data.test.push_back(std::move(rec)); break;
        }
      }
    }
  }
  return data;
}

GenerateSummary generate(const SynthConfig& cfg, const std::filesystem::path& out_dir) {
  cfg.validate();
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create output directory " + out_dir.string());

  Manifest manifest;
  GenerateSummary summary;
  for (Split split : {Split::Train, Split::Val, Split::Test}) {
    const std::string dir_name = split_name(split);
    const int count = per_class_count(cfg, split);
    if (count > 0 && cfg.num_classes > 0) {
      std::filesystem::create_directories(out_dir / dir_name, ec);
      if (ec) throw IoError("cannot create output directory " + (out_dir / dir_name).string());
    }
    for (int k = 0; k < cfg.num_classes; ++k) {
      for (int i = 0; i < count; ++i) {
        SequenceRecord rec = make_record(cfg, split, k, i);
        char name[32];
        std::snprintf(name, sizeof(name), "c%d_s%04d.eseq", k, i);
        const std::string rel = dir_name + "/" + name;
        std::ofstream out(out_dir / rel, std::ios::binary);
        if (!out) throw IoError("cannot open " + (out_dir / rel).string() + " for writing");
        write_sequence_2d(out, rec);
        if (!out) throw IoError("failed writing " + (out_dir / rel).string());
        manifest.entries.push_back({rel, k, split});
        ++summary.files_written;
      }
    }
  }
  summary.manifest_path = out_dir / "manifest.csv";
  std::ofstream out(summary.manifest_path, std::ios::binary);
  if (!out) throw IoError("cannot open " + summary.manifest_path.string() + " for writing");
  write_manifest(out, manifest);
  if (!out) throw IoError("failed writing " + summary.manifest_path.string());
  return summary;
}

int bayes_classify(const SequenceRecord& rec, const SynthConfig& cfg) {
  if (rec.frames.empty()) throw FormatError("bayes_classify: empty sequence");
  const bool hands_signal = cfg.signal_source != SignalSource::ObjectOnly;

  auto signal_point = [&](const FramePose& frame) -> Vec2 {
    if (hands_signal) {
      double sx = 0.0, sy = 0.0;
      int n = 0;
      for (const HandPose2D* hand : {&frame.left, &frame.right}) {
        if (!hand->valid) continue;
        for (const Vec2& j : hand->joints) {
          sx += j.x;
          sy += j.y;
          ++n;
        }
      }
      if (n > 0) return {sx / n, sy / n};
    }
    double sx = 0.0, sy = 0.0;
    for (const Vec2& c : frame.object.corners) {
      sx += c.x;
      sy += c.y;
    }
    return {sx / kBoxCornerCount2D, sy / kBoxCornerCount2D};
  };

  Vec2 displacement{0.0, 0.0};
  if (rec.frames.size() > 1) {
    const Vec2 first = signal_point(rec.frames.front());
    const Vec2 last = signal_point(rec.frames.back());
    const double span = static_cast<double>(rec.frames.size() - 1);
    displacement = {(last.x - first.x) / span, (last.y - first.y) / span};
  }

  // The object drifts against the hand direction; flip the estimate when
  // it was measured from the object so both compare against +v_k.
  if (!hands_signal) displacement = {-displacement.x, -displacement.y};

  int best = 0;
  double best_dist = std::numeric_limits<double>::infinity();
  for (int k = 0; k < cfg.num_classes; ++k) {
    const MotionTemplate v = class_template(k, cfg.num_classes);
    const double dx = displacement.x - v.vx;
    const double dy = displacement.y - v.vy;
    const double d2 = dx * dx + dy * dy;
    if (d2 < best_dist) {
      best_dist = d2;
      best = k;
    }
  }
  return best;
}

BayesReport bayes_separability_check(const SynthConfig& cfg) {
  const Dataset data = generate_dataset(cfg);
  BayesReport report;
  auto run = [&](const std::vector<SequenceRecord>& records, double& accuracy, std::int64_t& n) {
    n = static_cast<std::int64_t>(records.size());
    if (records.empty()) return;
    std::int64_t correct = 0;
    for (const SequenceRecord& rec : records) {
      if (bayes_classify(rec, cfg) == rec.action_id) ++correct;
    }
    accuracy = static_cast<double>(correct) / static_cast<double>(n);
  };
  run(data.train, report.train_accuracy, report.n_train);
  run(data.val, report.val_accuracy, report.n_val);
  run(data.test, report.test_accuracy, report.n_test);
  return report;
}

}  // namespace egoact
