#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace flow {

struct Point3 {
  double x = 0.0, y = 0.0, z = 0.0;

  bool finite() const { return std::isfinite(x) && std::isfinite(y) && std::isfinite(z); }

  Point3 operator+(const Point3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Point3 operator-(const Point3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Point3 operator*(double s) const { return {x * s, y * s, z * s}; }

  double norm() const { return std::sqrt(x * x + y * y + z * z); }
  double squared_norm() const { return x * x + y * y + z * z; }
};

inline double squared_dist(const Point3& a, const Point3& b) {
  const double dx = a.x - b.x, dy = a.y - b.y, dz = a.z - b.z;
  return dx * dx + dy * dy + dz * dz;
}

// Ordered point set in the ego-compensated metric frame. Index i is the
// identity of a point across every flow structure referencing this cloud.
struct PointCloud {
  std::vector<Point3> points;
  int64_t frame_id = 0;

  size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
};

// Per-point displacement vectors (meters per frame interval) aligned to a
// source cloud by index.
struct FlowField {
  std::vector<Point3> vectors;

  size_t size() const { return vectors.size(); }

  static FlowField zeros(size_t n) {
    FlowField f;
    f.vectors.assign(n, Point3{});
    return f;
  }
};

enum class PointClass : uint8_t { Background = 0, Foreground = 1 };

// Rigid transform: p -> rotation * p + translation.
struct RigidMotion {
  std::array<std::array<double, 3>, 3> rotation{{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}};
  Point3 translation{};

  Point3 apply(const Point3& p) const {
    const auto& r = rotation;
    return {r[0][0] * p.x + r[0][1] * p.y + r[0][2] * p.z + translation.x,
            r[1][0] * p.x + r[1][1] * p.y + r[1][2] * p.z + translation.y,
            r[2][0] * p.x + r[2][1] * p.y + r[2][2] * p.z + translation.z};
  }

  // Max deviation from orthonormality, used by validation.
  double orthonormality_error() const;
  double determinant() const;

  static RigidMotion translation_only(const Point3& t) {
    RigidMotion m;
    m.translation = t;
    return m;
  }
  static RigidMotion yaw_about(double angle_rad, const Point3& center, const Point3& translation);
};

// Descriptor of one generated rigid object, kept so ground truth flow can be
// re-derived analytically in tests.
struct ObjectMeta {
  Point3 center;       // box center at t
  Point3 half_size;    // box half extents in its local frame
  double yaw = 0.0;    // box orientation at t
  RigidMotion motion;  // world-frame motion applied between t and t+1
  double speed_mps = 0.0;
  size_t first_point = 0;  // index range of this object's points in cloud_t
  size_t point_count = 0;
};

struct SceneMeta {
  uint64_t seed = 0;
  std::vector<ObjectMeta> objects;
};

// A frame pair with its analytic ground truth: the oracle every estimator is
// scored against.
struct SceneSample {
  PointCloud cloud_t;
  PointCloud cloud_t1;
  FlowField gt_flow;                // aligned to cloud_t
  std::vector<PointClass> classes;  // aligned to cloud_t
  double dt_seconds = 0.1;
  SceneMeta meta;

  void validate() const;
};

struct SceneConfig {
  double area_half_extent = 51.2;  // meters; 102.4 m box by default
  int n_background_points = 2000;
  int n_objects = 5;
  std::array<double, 2> object_size_range = {1.0, 4.0};   // box edge, meters
  std::array<double, 2> object_speed_range = {0.0, 8.0};  // m/s
  double lidar_noise_sigma = 0.01;                        // meters, observed t+1 only
  bool occlusion_enabled = false;
  uint64_t seed = 0;
  // When set, background structures and object intrinsics are drawn from this
  // seed while placement/sampling follow `seed`. Used by the contiguous
  // dataset mode; 0 means "same as seed".
  uint64_t layout_seed = 0;

  void validate() const;
};

}  // namespace flow
