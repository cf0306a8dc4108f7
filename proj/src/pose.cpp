#include "egoact/pose.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace egoact {

void CameraIntrinsics::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) {
    throw ConfigError("intrinsics: focal lengths must be positive, got fx=" +
                      std::to_string(fx) + " fy=" + std::to_string(fy));
  }
  if (width <= 0 || height <= 0) {
    throw ConfigError("intrinsics: image size must be positive, got " +
                      std::to_string(width) + "x" + std::to_string(height));
  }
}

Vec2 project_point(const Vec3& p, const CameraIntrinsics& cam) {
  if (!(p.z > 0.0)) {
    throw GeometryError("cannot project point with Z=" + std::to_string(p.z) +
                        " (point must lie in front of the camera)");
  }
  return {cam.fx * p.x / p.z + cam.cx, cam.fy * p.y / p.z + cam.cy};
}

HandPose2D project_hand(const HandPose3D& hand, const CameraIntrinsics& cam) {
  HandPose2D out;
  if (!hand.valid) {
    return out;  // all-zero joints, valid=false
  }
  out.valid = true;
  for (int i = 0; i < kHandJointCount; ++i) {
    if (!(hand.joints[i].z > 0.0)) {
      throw GeometryError("joint " + std::to_string(i) + ": Z=" +
                          std::to_string(hand.joints[i].z) + " is not projectable");
    }
    out.joints[i] = project_point(hand.joints[i], cam);
  }
  return out;
}

ObjectPose2D bbox_from_corners(const std::array<Vec2, kBoxCornerCount3D>& corners, int label) {
  double min_x = std::numeric_limits<double>::infinity();
  double min_y = std::numeric_limits<double>::infinity();
  double max_x = -std::numeric_limits<double>::infinity();
  double max_y = -std::numeric_limits<double>::infinity();
  for (const Vec2& c : corners) {
    if (!std::isfinite(c.x) || !std::isfinite(c.y)) {
      throw GeometryError("bbox_from_corners: non-finite corner coordinate");
    }
    min_x = std::min(min_x, c.x);
    min_y = std::min(min_y, c.y);
    max_x = std::max(max_x, c.x);
    max_y = std::max(max_y, c.y);
  }
  ObjectPose2D box;
  box.corners = {Vec2{min_x, min_y}, Vec2{max_x, min_y}, Vec2{max_x, max_y}, Vec2{min_x, max_y}};
  box.label = label;
  return box;
}

}  // namespace egoact
