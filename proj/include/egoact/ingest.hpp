#pragma once

#include <filesystem>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "egoact/pose.hpp"

namespace egoact {

// One labeled action segment: an ordered run of frames sharing one
// image size, plus its action class.
struct SequenceRecord {
  std::vector<FramePose> frames;
  int action_id = 0;
  std::string source_id;
  bool operator==(const SequenceRecord&) const = default;
};

struct Raw3DFrame {
  HandPose3D left;
  HandPose3D right;
  ObjectPose3D object;
};

// Raw recording before projection; width/height echo the recording
// camera and are informational until projection stamps the camera size.
struct RawSequence3D {
  std::vector<Raw3DFrame> frames;
  int width = 0;
  int height = 0;
};

enum class Split { Train, Val, Test };

Split parse_split(const std::string& s);
std::string split_name(Split s);

struct ManifestEntry {
  std::string sequence_path;  // relative to the dataset root
  int action_id = 0;
  Split split = Split::Train;
};

struct Manifest {
  std::vector<ManifestEntry> entries;
};

struct Dataset {
  std::vector<SequenceRecord> train;
  std::vector<SequenceRecord> val;
  std::vector<SequenceRecord> test;
  int num_classes = 0;
  std::vector<std::string> class_names;  // optional, empty when unknown

  const std::vector<SequenceRecord>& split(Split s) const;
};

// Single line `fx fy cx cy width height`. Throws FormatError with the
// offending content on malformed input.
CameraIntrinsics parse_intrinsics(std::istream& in);

// `.eseq`: JSON header line {"version":1,"width":W,"height":H,"num_frames":T},
// then one JSON object per frame. action_id/source_id are the caller's to
// attach. Errors name the 1-based line number.
SequenceRecord parse_sequence_2d(std::istream& in);
void write_sequence_2d(std::ostream& out, const SequenceRecord& rec);

// `.eseq3`: same header, frame payloads in meters.
RawSequence3D parse_sequence_3d(std::istream& in);
void write_sequence_3d(std::ostream& out, const RawSequence3D& seq);

// Per-frame project_hand + bbox_from_corners; output frames carry the
// camera's width/height. Errors are tagged with the frame index.
std::vector<FramePose> project_sequence(const RawSequence3D& raw, const CameraIntrinsics& cam);

// CSV with header `sequence_path,action_id,split`.
Manifest parse_manifest(std::istream& in);
void write_manifest(std::ostream& out, const Manifest& manifest);

// Reads every sequence named by the manifest, grouping records by split
// in manifest order. num_classes defaults to max action_id + 1.
Dataset load_dataset(const std::filesystem::path& manifest_path,
                     const std::filesystem::path& root_dir,
                     std::optional<int> num_classes = std::nullopt);

}  // namespace egoact
