#pragma once

#include <array>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "egoact/ingest.hpp"

namespace egoact {

// Frame vector layout: [left hand 42 | right hand 42 | bbox 8 | label 1].
inline constexpr int kLeftOffset = 0;
inline constexpr int kRightOffset = 42;
inline constexpr int kBboxOffset = 84;
inline constexpr int kLabelOffset = 92;
inline constexpr int kFeatureDim = 93;
inline constexpr int kSequenceLength = 40;

struct FrameFeature {
  std::array<double, kFeatureDim> values{};
  bool operator==(const FrameFeature&) const = default;
};

// 40 stacked frame features plus the action label, row-major.
struct SequenceTensor {
  std::vector<double> values;  // kSequenceLength * kFeatureDim
  int action_id = 0;

  double at(int row, int col) const { return values[static_cast<size_t>(row) * kFeatureDim + col]; }
};

// Which feature blocks stay live; masked blocks are zeroed, mirroring
// the ablation protocol of evaluating with components exchanged for
// zero values.
struct MaskConfig {
  bool use_left = true;
  bool use_right = true;
  bool use_bbox = true;
  bool use_label = true;
  bool operator==(const MaskConfig&) const = default;
};

// Mask spec grammar: `+`-joined tokens from {left, right, hands, bbox,
// label}; `hands` expands to left+right. Everything not named is masked.
MaskConfig parse_mask_spec(std::string_view spec);
std::string mask_spec_string(const MaskConfig& mask);

// Pixel coordinates normalized by image size and clamped to [0,1];
// the label becomes label_id / num_object_classes. Absent hands stay
// all-zero.
FrameFeature embed_frame(const FramePose& frame, int num_object_classes);

void mask_apply(FrameFeature& feature, const MaskConfig& mask);
void mask_apply(SequenceTensor& tensor, const MaskConfig& mask);

enum class SampleMode { Random, Equal };

// Equal mode: idx_i = floor(i*T/n), deterministic and non-decreasing.
// Random mode: uniform without replacement when T >= n, with replacement
// otherwise, sorted ascending to keep temporal order.
std::vector<int> sample_indices(int num_frames, int n, SampleMode mode, Rng& rng);

SequenceTensor build_sequence_tensor(const SequenceRecord& rec, std::span<const int> indices,
                                     const MaskConfig& mask, int num_object_classes);

// Mirror the frame: x -> width - x, hands swapped (a mirrored left hand
// is a right hand), bbox corners re-canonicalized. Involutive.
SequenceRecord hflip(const SequenceRecord& rec);

// One crop window drawn per sequence and applied to every frame;
// keypoints are clamped into the window, frames take the window size.
SequenceRecord random_crop(const SequenceRecord& rec, Rng& rng, double min_scale = 0.7);

// Alternative reading of sequence cropping: keep a contiguous frame
// sub-range of relative length >= min_scale. Off by default in training.
SequenceRecord temporal_crop(const SequenceRecord& rec, Rng& rng, double min_scale = 0.7);

}  // namespace egoact
