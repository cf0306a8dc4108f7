#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "egoact/pose.hpp"

using namespace egoact;

namespace {

CameraIntrinsics unit_camera() { return CameraIntrinsics{1.0, 1.0, 0.0, 0.0, 10, 10}; }

}  // namespace

TEST_CASE("project_point applies the pinhole formula") {
  Vec2 p = project_point({2.0, 4.0, 2.0}, unit_camera());
  CHECK(p.x == 1.0);
  CHECK(p.y == 2.0);
}

TEST_CASE("project_point maps the optical axis to the principal point") {
  CameraIntrinsics cam{600.0, 600.0, 640.0, 360.0, 1280, 720};
  Vec2 p = project_point({0.0, 0.0, 5.0}, cam);
  CHECK(p.x == 640.0);
  CHECK(p.y == 360.0);
}

TEST_CASE("project_point matches hand-computed pixel coordinates") {
  CameraIntrinsics cam{636.66, 636.25, 635.28, 366.87, 1280, 720};
  Vec2 p = project_point({0.1, -0.05, 0.5}, cam);
  // fx*(0.1/0.5) + cx and fy*(-0.05/0.5) + cy, computed independently.
  CHECK(p.x == doctest::Approx(762.612).epsilon(1e-12));
  CHECK(p.y == doctest::Approx(303.245).epsilon(1e-12));
}

TEST_CASE("project_point rejects points at or behind the camera") {
  CHECK_THROWS_AS(project_point({0.0, 0.0, 0.0}, unit_camera()), GeometryError);
  CHECK_THROWS_AS(project_point({1.0, 1.0, -2.0}, unit_camera()), GeometryError);
}

TEST_CASE("project_point is scale invariant along the ray") {
  CameraIntrinsics cam{636.66, 636.25, 635.28, 366.87, 1280, 720};
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> coord(-2.0, 2.0);
  std::uniform_real_distribution<double> depth(0.1, 5.0);
  std::uniform_real_distribution<double> lambda(0.01, 100.0);
  for (int i = 0; i < 200; ++i) {
    Vec3 p{coord(rng), coord(rng), depth(rng)};
    double l = lambda(rng);
    Vec2 a = project_point(p, cam);
    Vec2 b = project_point({l * p.x, l * p.y, l * p.z}, cam);
    CHECK(std::abs(a.x - b.x) <= 1e-9 * std::max(1.0, std::abs(a.x)));
    CHECK(std::abs(a.y - b.y) <= 1e-9 * std::max(1.0, std::abs(a.y)));
  }
}

TEST_CASE("project_hand projects every joint and keeps validity") {
  HandPose3D hand;
  hand.valid = true;
  for (auto& j : hand.joints) j = {0.0, 0.0, 1.0};
  HandPose2D out = project_hand(hand, unit_camera());
  CHECK(out.valid);
  for (const Vec2& j : out.joints) {
    CHECK(j.x == 0.0);
    CHECK(j.y == 0.0);
  }
}

TEST_CASE("project_hand maps an absent hand to the all-zero sentinel") {
  HandPose3D hand;
  hand.valid = false;
  for (auto& j : hand.joints) j = {3.0, 4.0, -1.0};  // junk must be ignored
  HandPose2D out = project_hand(hand, unit_camera());
  CHECK_FALSE(out.valid);
  for (const Vec2& j : out.joints) CHECK(j == Vec2{0.0, 0.0});
}

TEST_CASE("project_hand names the offending joint index") {
  HandPose3D hand;
  hand.valid = true;
  for (auto& j : hand.joints) j = {0.1, 0.1, 1.0};
  hand.joints[13].z = -0.5;
  try {
    project_hand(hand, unit_camera());
    FAIL("expected GeometryError");
  } catch (const GeometryError& e) {
    CHECK(std::string(e.what()).find("13") != std::string::npos);
  }
}

TEST_CASE("project_hand equals 21 independent point projections") {
  CameraIntrinsics cam{636.66, 636.25, 635.28, 366.87, 1280, 720};
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> coord(-0.5, 0.5);
  std::uniform_real_distribution<double> depth(0.3, 2.0);
  HandPose3D hand;
  hand.valid = true;
  for (auto& j : hand.joints) j = {coord(rng), coord(rng), depth(rng)};
  HandPose2D out = project_hand(hand, cam);
  for (int i = 0; i < kHandJointCount; ++i) {
    Vec2 expect = project_point(hand.joints[i], cam);
    CHECK(out.joints[i].x == expect.x);
    CHECK(out.joints[i].y == expect.y);
  }
}

TEST_CASE("bbox_from_corners spans a plain rectangle exactly") {
  std::array<Vec2, kBoxCornerCount3D> pts = {
      Vec2{0, 0}, Vec2{2, 0}, Vec2{0, 3}, Vec2{2, 3},
      Vec2{0, 0}, Vec2{2, 0}, Vec2{0, 3}, Vec2{2, 3}};
  ObjectPose2D box = bbox_from_corners(pts, 5);
  CHECK(box.corners[0] == Vec2{0, 0});
  CHECK(box.corners[1] == Vec2{2, 0});
  CHECK(box.corners[2] == Vec2{2, 3});
  CHECK(box.corners[3] == Vec2{0, 3});
  CHECK(box.label == 5);
}

TEST_CASE("bbox_from_corners allows a degenerate box") {
  std::array<Vec2, kBoxCornerCount3D> pts;
  pts.fill(Vec2{5, 5});
  ObjectPose2D box = bbox_from_corners(pts, 0);
  for (const Vec2& c : box.corners) CHECK(c == Vec2{5, 5});
}

TEST_CASE("bbox_from_corners equals brute-force min/max and stays canonical") {
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> coord(-100.0, 100.0);
  for (int trial = 0; trial < 100; ++trial) {
    std::array<Vec2, kBoxCornerCount3D> pts;
    double min_x = 1e300, max_x = -1e300, min_y = 1e300, max_y = -1e300;
    for (auto& p : pts) {
      p = {coord(rng), coord(rng)};
      min_x = std::min(min_x, p.x);
      max_x = std::max(max_x, p.x);
      min_y = std::min(min_y, p.y);
      max_y = std::max(max_y, p.y);
    }
    ObjectPose2D box = bbox_from_corners(pts, 1);
    CHECK(box.corners[0] == Vec2{min_x, min_y});
    CHECK(box.corners[1] == Vec2{max_x, min_y});
    CHECK(box.corners[2] == Vec2{max_x, max_y});
    CHECK(box.corners[3] == Vec2{min_x, max_y});
    // Canonical axis-aligned invariant.
    CHECK(box.corners[0].y == box.corners[1].y);
    CHECK(box.corners[3].y == box.corners[2].y);
    CHECK(box.corners[0].x == box.corners[3].x);
    CHECK(box.corners[1].x == box.corners[2].x);
    CHECK(box.corners[0].x <= box.corners[1].x);
    CHECK(box.corners[0].y <= box.corners[3].y);
  }
}

TEST_CASE("bbox_from_corners rejects non-finite coordinates") {
  std::array<Vec2, kBoxCornerCount3D> pts;
  pts.fill(Vec2{1, 1});
  pts[3].y = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(bbox_from_corners(pts, 0), GeometryError);
  pts[3].y = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(bbox_from_corners(pts, 0), GeometryError);
}

TEST_CASE("intrinsics validation rejects non-positive parameters") {
  CHECK_THROWS_AS((CameraIntrinsics{0.0, 1.0, 0.0, 0.0, 10, 10}).validate(), ConfigError);
  CHECK_THROWS_AS((CameraIntrinsics{1.0, -2.0, 0.0, 0.0, 10, 10}).validate(), ConfigError);
  CHECK_THROWS_AS((CameraIntrinsics{1.0, 1.0, 0.0, 0.0, 0, 10}).validate(), ConfigError);
  CHECK_THROWS_AS((CameraIntrinsics{1.0, 1.0, 0.0, 0.0, 10, -1}).validate(), ConfigError);
  CHECK_NOTHROW((CameraIntrinsics{636.66, 636.25, 635.28, 366.87, 1280, 720}).validate());
}
