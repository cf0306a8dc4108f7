#include "egoact/featurize.hpp"

#include <algorithm>
#include <cmath>

namespace egoact {

namespace {

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

void mask_block(std::span<double> row, const MaskConfig& mask) {
  if (!mask.use_left) std::fill(row.begin() + kLeftOffset, row.begin() + kRightOffset, 0.0);
  if (!mask.use_right) std::fill(row.begin() + kRightOffset, row.begin() + kBboxOffset, 0.0);
  if (!mask.use_bbox) std::fill(row.begin() + kBboxOffset, row.begin() + kLabelOffset, 0.0);
  if (!mask.use_label) row[kLabelOffset] = 0.0;
}

HandPose2D flip_hand(const HandPose2D& h, double width) {
  HandPose2D out;
  if (!h.valid) return out;  // absent hands stay all-zero
  out.valid = true;
  for (int i = 0; i < kHandJointCount; ++i) {
    out.joints[i] = {width - h.joints[i].x, h.joints[i].y};
  }
  return out;
}

}  // namespace

MaskConfig parse_mask_spec(std::string_view spec) {
  MaskConfig mask{false, false, false, false};
  if (spec.empty()) {
    throw ConfigError("empty mask spec; expected `+`-joined tokens from "
                      "{left, right, hands, bbox, label}");
  }
  size_t pos = 0;
  while (pos <= spec.size()) {
    size_t next = spec.find('+', pos);
    std::string_view tok = spec.substr(pos, next == std::string_view::npos ? next : next - pos);
    if (tok == "left") {
      mask.use_left = true;
    } else if (tok == "right") {
      mask.use_right = true;
    } else if (tok == "hands") {
      mask.use_left = mask.use_right = true;
    } else if (tok == "bbox") {
      mask.use_bbox = true;
    } else if (tok == "label") {
      mask.use_label = true;
    } else {
      throw ConfigError("bad mask token \"" + std::string(tok) +
                        "\"; expected left, right, hands, bbox or label");
    }
    if (next == std::string_view::npos) break;
    pos = next + 1;
  }
  return mask;
}

std::string mask_spec_string(const MaskConfig& mask) {
  std::string s;
  auto append = [&s](const char* tok) {
    if (!s.empty()) s += '+';
    s += tok;
  };
  if (mask.use_left && mask.use_right) {
    append("hands");
  } else {
    if (mask.use_left) append("left");
    if (mask.use_right) append("right");
  }
  if (mask.use_bbox) append("bbox");
  if (mask.use_label) append("label");
  return s.empty() ? "none" : s;
}

FrameFeature embed_frame(const FramePose& frame, int num_object_classes) {
  if (frame.width <= 0 || frame.height <= 0) {
    throw ConfigError("embed_frame: frame has no image size");
  }
  if (frame.object.label >= num_object_classes) {
    throw ConfigError("embed_frame: object label " + std::to_string(frame.object.label) +
                      " out of range for " + std::to_string(num_object_classes) +
                      " object classes");
  }
  const double w = frame.width;
  const double h = frame.height;
  FrameFeature f;
  auto put_hand = [&](const HandPose2D& hand, int offset) {
    if (!hand.valid) return;  // leave the 42 zeros
    for (int i = 0; i < kHandJointCount; ++i) {
      f.values[offset + 2 * i] = clamp01(hand.joints[i].x / w);
      f.values[offset + 2 * i + 1] = clamp01(hand.joints[i].y / h);
    }
  };
  put_hand(frame.left, kLeftOffset);
  put_hand(frame.right, kRightOffset);
  for (int i = 0; i < kBoxCornerCount2D; ++i) {
    f.values[kBboxOffset + 2 * i] = clamp01(frame.object.corners[i].x / w);
    f.values[kBboxOffset + 2 * i + 1] = clamp01(frame.object.corners[i].y / h);
  }
  f.values[kLabelOffset] = static_cast<double>(frame.object.label) / num_object_classes;
  return f;
}

void mask_apply(FrameFeature& feature, const MaskConfig& mask) {
  mask_block(feature.values, mask);
}

void mask_apply(SequenceTensor& tensor, const MaskConfig& mask) {
  for (int r = 0; r < kSequenceLength; ++r) {
    mask_block(std::span<double>(tensor.values.data() + static_cast<size_t>(r) * kFeatureDim,
                                 kFeatureDim),
               mask);
  }
}

std::vector<int> sample_indices(int num_frames, int n, SampleMode mode, Rng& rng) {
  if (num_frames <= 0) {
    throw FormatError("cannot sample from an empty sequence");
  }
  if (n <= 0) {
    throw ConfigError("sample_indices: n must be >= 1");
  }
  std::vector<int> out;
  out.reserve(static_cast<size_t>(n));
  if (mode == SampleMode::Equal) {
    for (int i = 0; i < n; ++i) {
      out.push_back(static_cast<int>(static_cast<long long>(i) * num_frames / n));
    }
    return out;
  }
  if (num_frames >= n) {
    // Uniform subset without replacement: partial Fisher-Yates over
    // the index pool, then sort back into temporal order.
    std::vector<int> pool(static_cast<size_t>(num_frames));
    for (int i = 0; i < num_frames; ++i) pool[static_cast<size_t>(i)] = i;
    for (int i = 0; i < n; ++i) {
      std::uniform_int_distribution<int> pick(i, num_frames - 1);
      std::swap(pool[static_cast<size_t>(i)], pool[static_cast<size_t>(pick(rng))]);
    }
    out.assign(pool.begin(), pool.begin() + n);
  } else {
    std::uniform_int_distribution<int> pick(0, num_frames - 1);
    for (int i = 0; i < n; ++i) out.push_back(pick(rng));
  }
  std::sort(out.begin(), out.end());
  return out;
}

SequenceTensor build_sequence_tensor(const SequenceRecord& rec, std::span<const int> indices,
                                     const MaskConfig& mask, int num_object_classes) {
  if (indices.size() != kSequenceLength) {
    throw Error("build_sequence_tensor: expected " + std::to_string(kSequenceLength) +
                " indices, got " + std::to_string(indices.size()));
  }
  SequenceTensor t;
  t.values.resize(static_cast<size_t>(kSequenceLength) * kFeatureDim);
  t.action_id = rec.action_id;
  for (int r = 0; r < kSequenceLength; ++r) {
    int idx = indices[static_cast<size_t>(r)];
    if (idx < 0 || idx >= static_cast<int>(rec.frames.size())) {
      throw Error("build_sequence_tensor: frame index " + std::to_string(idx) +
                  " out of range for " + std::to_string(rec.frames.size()) + " frames");
    }
    FrameFeature f = embed_frame(rec.frames[static_cast<size_t>(idx)], num_object_classes);
    mask_apply(f, mask);
    std::copy(f.values.begin(), f.values.end(),
              t.values.begin() + static_cast<size_t>(r) * kFeatureDim);
  }
  return t;
}

SequenceRecord hflip(const SequenceRecord& rec) {
  SequenceRecord out;
  out.action_id = rec.action_id;
  out.source_id = rec.source_id;
  out.frames.reserve(rec.frames.size());
  for (const FramePose& frame : rec.frames) {
    const double w = frame.width;
    FramePose flipped;
    flipped.width = frame.width;
    flipped.height = frame.height;
    flipped.left = flip_hand(frame.right, w);
    flipped.right = flip_hand(frame.left, w);
    const auto& c = frame.object.corners;
    // Reflected TL comes from the old TR and so on; y stays put.
    flipped.object.corners = {Vec2{w - c[1].x, c[1].y}, Vec2{w - c[0].x, c[0].y},
                              Vec2{w - c[3].x, c[3].y}, Vec2{w - c[2].x, c[2].y}};
    flipped.object.label = frame.object.label;
    out.frames.push_back(flipped);
  }
  return out;
}

SequenceRecord random_crop(const SequenceRecord& rec, Rng& rng, double min_scale) {
  if (!(min_scale > 0.0) || min_scale > 1.0) {
    throw ConfigError("random_crop: min_scale must be in (0, 1]");
  }
  if (rec.frames.empty()) {
    throw FormatError("random_crop: empty sequence");
  }
  const int width = rec.frames.front().width;
  const int height = rec.frames.front().height;
  std::uniform_real_distribution<double> scale(min_scale, 1.0);
  int crop_w = std::max(1, static_cast<int>(std::lround(scale(rng) * width)));
  int crop_h = std::max(1, static_cast<int>(std::lround(scale(rng) * height)));
  crop_w = std::min(crop_w, width);
  crop_h = std::min(crop_h, height);
  std::uniform_int_distribution<int> ox(0, width - crop_w);
  std::uniform_int_distribution<int> oy(0, height - crop_h);
  const double x0 = ox(rng);
  const double y0 = oy(rng);

  auto move_point = [&](Vec2 p) -> Vec2 {
    return {std::clamp(p.x - x0, 0.0, static_cast<double>(crop_w)),
            std::clamp(p.y - y0, 0.0, static_cast<double>(crop_h))};
  };

  SequenceRecord out;
  out.action_id = rec.action_id;
  out.source_id = rec.source_id;
  out.frames.reserve(rec.frames.size());
  for (const FramePose& frame : rec.frames) {
    FramePose moved;
    moved.width = crop_w;
    moved.height = crop_h;
    auto move_hand = [&](const HandPose2D& hand) {
      HandPose2D h;
      if (!hand.valid) return h;
      h.valid = true;
      for (int i = 0; i < kHandJointCount; ++i) h.joints[i] = move_point(hand.joints[i]);
      return h;
    };
    moved.left = move_hand(frame.left);
    moved.right = move_hand(frame.right);
    // Clamping an axis-aligned window keeps the box axis-aligned.
    Vec2 tl = move_point(frame.object.corners[0]);
    Vec2 br = move_point(frame.object.corners[2]);
    moved.object.corners = {tl, Vec2{br.x, tl.y}, br, Vec2{tl.x, br.y}};
    moved.object.label = frame.object.label;
    out.frames.push_back(moved);
  }
  return out;
}

SequenceRecord temporal_crop(const SequenceRecord& rec, Rng& rng, double min_scale) {
  if (!(min_scale > 0.0) || min_scale > 1.0) {
    throw ConfigError("temporal_crop: min_scale must be in (0, 1]");
  }
  if (rec.frames.empty()) {
    throw FormatError("temporal_crop: empty sequence");
  }
  const int total = static_cast<int>(rec.frames.size());
  std::uniform_real_distribution<double> scale(min_scale, 1.0);
  int keep = std::clamp(static_cast<int>(std::lround(scale(rng) * total)), 1, total);
  std::uniform_int_distribution<int> offset(0, total - keep);
  const int start = offset(rng);
  SequenceRecord out;
  out.action_id = rec.action_id;
  out.source_id = rec.source_id;
  out.frames.assign(rec.frames.begin() + start, rec.frames.begin() + start + keep);
  return out;
}

}  // namespace egoact
