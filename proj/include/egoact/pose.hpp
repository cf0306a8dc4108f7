#pragma once

#include <array>
#include <istream>

#include "egoact/common.hpp"

namespace egoact {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
  bool operator==(const Vec2&) const = default;
};

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  bool operator==(const Vec3&) const = default;
};

inline constexpr int kHandJointCount = 21;
inline constexpr int kBoxCornerCount3D = 8;
inline constexpr int kBoxCornerCount2D = 4;

// Pinhole intrinsics; width/height are the image size the pixel
// coordinates live in.
struct CameraIntrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 0;
  int height = 0;

  void validate() const;
};

// 21 camera-space joints in meters. An absent hand is valid=false with
// all joints zero; that zero convention carries through the whole
// pipeline, it is what ablation masking relies on.
struct HandPose3D {
  std::array<Vec3, kHandJointCount> joints{};
  bool valid = false;
};

// 21 image-plane joints in pixels. Joint order is opaque but fixed;
// index 0 is the wrist by convention.
struct HandPose2D {
  std::array<Vec2, kHandJointCount> joints{};
  bool valid = false;
  bool operator==(const HandPose2D&) const = default;
};

// 3D object box given by its 8 corners, plus class label.
struct ObjectPose3D {
  std::array<Vec3, kBoxCornerCount3D> corners{};
  int label = 0;
};

// Axis-aligned 2D box. Corner order is canonical: TL, TR, BR, BL.
struct ObjectPose2D {
  std::array<Vec2, kBoxCornerCount2D> corners{};
  int label = 0;
  bool operator==(const ObjectPose2D&) const = default;
};

// Everything one frame contributes to the feature vector.
struct FramePose {
  HandPose2D left;
  HandPose2D right;
  ObjectPose2D object;
  int width = 0;
  int height = 0;
  bool operator==(const FramePose&) const = default;
};

// x = fx*X/Z + cx, y = fy*Y/Z + cy. Throws GeometryError when Z <= 0.
// The result is not clamped to the image; clamping happens at
// featurization.
Vec2 project_point(const Vec3& p, const CameraIntrinsics& cam);

// Per-joint projection. Invalid hands map to the all-zero invalid hand;
// a valid hand with a joint at Z <= 0 throws, naming the joint index.
HandPose2D project_hand(const HandPose3D& hand, const CameraIntrinsics& cam);

// Axis-aligned hull of 8 projected box corners in canonical TL, TR, BR,
// BL order. Degenerate (zero-area) boxes are allowed.
ObjectPose2D bbox_from_corners(const std::array<Vec2, kBoxCornerCount3D>& corners, int label);

}  // namespace egoact
