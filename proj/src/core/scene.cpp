#include "flow/core/scene.hpp"

#include <algorithm>
#include <cmath>

#include "flow/core/rng.hpp"

namespace flow {

double RigidMotion::orthonormality_error() const {
  const auto& r = rotation;
  double worst = 0.0;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      double dot = 0.0;
      for (int k = 0; k < 3; ++k) dot += r[k][i] * r[k][j];
      worst = std::max(worst, std::abs(dot - (i == j ? 1.0 : 0.0)));
    }
  }
  return worst;
}

double RigidMotion::determinant() const {
  const auto& r = rotation;
  return r[0][0] * (r[1][1] * r[2][2] - r[1][2] * r[2][1]) -
         r[0][1] * (r[1][0] * r[2][2] - r[1][2] * r[2][0]) +
         r[0][2] * (r[1][0] * r[2][1] - r[1][1] * r[2][0]);
}

RigidMotion RigidMotion::yaw_about(double angle_rad, const Point3& center,
                                   const Point3& translation) {
  const double c = std::cos(angle_rad), s = std::sin(angle_rad);
  RigidMotion m;
  m.rotation = {{{c, -s, 0}, {s, c, 0}, {0, 0, 1}}};
  // p -> R(p - center) + center + translation
  Point3 rc{c * center.x - s * center.y, s * center.x + c * center.y, center.z};
  m.translation = center - rc + translation;
  return m;
}

void SceneConfig::validate() const {
  if (area_half_extent <= 0.0) throw std::invalid_argument("SceneConfig: area_half_extent must be > 0");
  if (n_background_points < 0) throw std::invalid_argument("SceneConfig: n_background_points must be >= 0");
  if (n_objects < 0) throw std::invalid_argument("SceneConfig: n_objects must be >= 0");
  if (object_size_range[0] <= 0.0 || object_size_range[1] < object_size_range[0])
    throw std::invalid_argument("SceneConfig: invalid object_size_range");
  if (object_speed_range[0] < 0.0 || object_speed_range[1] < object_speed_range[0])
    throw std::invalid_argument("SceneConfig: object_speed_range must be non-negative and ordered");
  if (lidar_noise_sigma < 0.0) throw std::invalid_argument("SceneConfig: lidar_noise_sigma must be >= 0");
}

void SceneSample::validate() const {
  if (gt_flow.size() != cloud_t.size())
    throw std::runtime_error("SceneSample: gt_flow length does not match cloud_t");
  if (classes.size() != cloud_t.size())
    throw std::runtime_error("SceneSample: classes length does not match cloud_t");
  if (dt_seconds <= 0.0) throw std::runtime_error("SceneSample: dt_seconds must be > 0");
  for (const auto& p : cloud_t.points)
    if (!p.finite()) throw std::runtime_error("SceneSample: non-finite point in cloud_t");
  for (const auto& p : cloud_t1.points)
    if (!p.finite()) throw std::runtime_error("SceneSample: non-finite point in cloud_t1");
  for (const auto& v : gt_flow.vectors)
    if (!v.finite()) throw std::runtime_error("SceneSample: non-finite ground-truth flow");
}

namespace {

constexpr double kDt = 0.1;  // 10 Hz frame interval

struct Box {
  Point3 center;
  Point3 half;  // local half extents
  double yaw = 0.0;
};

Point3 rotate_yaw(const Point3& p, double yaw) {
  const double c = std::cos(yaw), s = std::sin(yaw);
  return {c * p.x - s * p.y, s * p.x + c * p.y, p.z};
}

// Uniform point on the box surface, faces weighted by area.
Point3 sample_box_surface(const Box& b, Rng& rng) {
  const double ax = b.half.y * b.half.z;  // area of +-x faces (up to factor 4)
  const double ay = b.half.x * b.half.z;
  const double az = b.half.x * b.half.y;
  const double total = 2.0 * (ax + ay + az);
  double pick = rng.uniform() * total;
  Point3 local;
  const double u = rng.uniform() * 2.0 - 1.0;
  const double v = rng.uniform() * 2.0 - 1.0;
  if (pick < 2.0 * ax) {
    local = {pick < ax ? b.half.x : -b.half.x, u * b.half.y, v * b.half.z};
  } else if (pick < 2.0 * (ax + ay)) {
    pick -= 2.0 * ax;
    local = {u * b.half.x, pick < ay ? b.half.y : -b.half.y, v * b.half.z};
  } else {
    pick -= 2.0 * (ax + ay);
    local = {u * b.half.x, v * b.half.y, pick < az ? b.half.z : -b.half.z};
  }
  return b.center + rotate_yaw(local, b.yaw);
}

struct Cylinder {
  Point3 base;  // center of bottom cap
  double radius = 0.1;
  double height = 3.0;
};

Point3 sample_cylinder_surface(const Cylinder& c, Rng& rng) {
  const double theta = rng.uniform() * 2.0 * 3.14159265358979323846;
  const double h = rng.uniform() * c.height;
  return {c.base.x + c.radius * std::cos(theta), c.base.y + c.radius * std::sin(theta),
          c.base.z + h};
}

struct Structure {
  bool is_box = true;
  Box box;
  Cylinder cyl;

  Point3 sample(Rng& rng) const { return is_box ? sample_box_surface(box, rng) : sample_cylinder_surface(cyl, rng); }
};

std::vector<Structure> make_background_layout(const SceneConfig& cfg, Rng& layout) {
  const int k = std::clamp(cfg.n_background_points / 150, 1, 12);
  const double he = cfg.area_half_extent;
  std::vector<Structure> out;
  out.reserve(static_cast<size_t>(k));
  for (int i = 0; i < k; ++i) {
    Structure s;
    s.is_box = layout.uniform() < 0.5;
    if (s.is_box) {
      // Wall segment: long, thin, a few meters tall.
      const double len = layout.uniform(2.0, std::max(3.0, he * 0.6));
      const double thick = layout.uniform(0.1, 0.4);
      const double height = layout.uniform(1.5, 4.0);
      Box b;
      b.half = {len / 2.0, thick / 2.0, height / 2.0};
      const double margin = std::sqrt(b.half.x * b.half.x + b.half.y * b.half.y) + 0.1;
      const double lim = std::max(0.1, he - margin);
      b.center = {layout.uniform(-lim, lim), layout.uniform(-lim, lim), height / 2.0};
      b.yaw = layout.uniform(0.0, 3.14159265358979323846);
      s.box = b;
    } else {
      Cylinder c;
      c.radius = layout.uniform(0.05, 0.25);
      c.height = layout.uniform(2.0, 6.0);
      const double lim = std::max(0.1, he - c.radius - 0.1);
      c.base = {layout.uniform(-lim, lim), layout.uniform(-lim, lim), 0.0};
      s.cyl = c;
    }
    out.push_back(s);
  }
  return out;
}

struct ObjectLayout {
  Point3 half_size;
  double speed = 0.0;
  int n_points = 0;
};

}  // namespace

SceneSample generate_scene(const SceneConfig& config) {
  config.validate();
  if (config.n_background_points == 0 && config.n_objects == 0)
    throw std::invalid_argument("generate_scene: config yields an empty cloud_t");

  const uint64_t layout_seed = config.layout_seed != 0 ? config.layout_seed : config.seed;
  Rng layout = Rng(layout_seed).fork(1);
  Rng place = Rng(config.seed).fork(2);
  Rng surf_t = Rng(config.seed).fork(3);
  Rng surf_t1 = Rng(config.seed).fork(4);
  Rng noise = Rng(config.seed).fork(5);

  SceneSample out;
  out.dt_seconds = kDt;
  out.meta.seed = config.seed;
  out.cloud_t.frame_id = 0;
  out.cloud_t1.frame_id = 1;

  // Background: static in the compensated frame, so flow is exactly zero.
  // Surfaces are re-sampled independently per frame.
  if (config.n_background_points > 0) {
    auto structures = make_background_layout(config, layout);
    const size_t k = structures.size();
    for (int i = 0; i < config.n_background_points; ++i) {
      const auto& s = structures[place.uniform_int(k)];
      out.cloud_t.points.push_back(s.sample(surf_t));
      out.gt_flow.vectors.push_back(Point3{});
      out.classes.push_back(PointClass::Background);
    }
    for (int i = 0; i < config.n_background_points; ++i) {
      const auto& s = structures[place.uniform_int(k)];
      out.cloud_t1.points.push_back(s.sample(surf_t1));
    }
  }

  // Objects: rigid boxes under pure translation so every point on an object
  // moves at exactly the object's speed.
  const double min_obj_points_per = 60.0;
  for (int i = 0; i < config.n_objects; ++i) {
    ObjectLayout ol;
    const double edge = layout.uniform(config.object_size_range[0], config.object_size_range[1]);
    ol.half_size = {edge * 0.5, edge * layout.uniform(0.2, 0.5), edge * layout.uniform(0.2, 0.4)};
    // Bimodal speeds within the configured range: a share of near-parked
    // objects keeps the Static FG bucket populated.
    const double slow_cap =
        std::min(config.object_speed_range[1], std::max(config.object_speed_range[0], 0.45));
    if (layout.uniform() < 0.3)
      ol.speed = layout.uniform(config.object_speed_range[0], slow_cap);
    else
      ol.speed = layout.uniform(config.object_speed_range[0], config.object_speed_range[1]);
    ol.n_points = static_cast<int>(min_obj_points_per + layout.uniform() * min_obj_points_per);

    const double heading = place.uniform(0.0, 2.0 * 3.14159265358979323846);
    const double disp = ol.speed * kDt;
    const Point3 translation{disp * std::cos(heading), disp * std::sin(heading), 0.0};

    const double diag = std::sqrt(ol.half_size.x * ol.half_size.x + ol.half_size.y * ol.half_size.y);
    const double margin = diag + disp + 0.1;
    if (margin >= config.area_half_extent)
      throw std::invalid_argument("generate_scene: area too small for configured object size/speed");
    const double lim = config.area_half_extent - margin;

    Box b;
    b.half = ol.half_size;
    b.center = {place.uniform(-lim, lim), place.uniform(-lim, lim),
                ol.half_size.z + place.uniform(0.0, 0.5)};
    b.yaw = place.uniform(0.0, 3.14159265358979323846);

    const RigidMotion motion = RigidMotion::translation_only(translation);

    ObjectMeta meta;
    meta.center = b.center;
    meta.half_size = b.half;
    meta.yaw = b.yaw;
    meta.motion = motion;
    meta.speed_mps = ol.speed;
    meta.first_point = out.cloud_t.size();
    meta.point_count = static_cast<size_t>(ol.n_points);

    for (int j = 0; j < ol.n_points; ++j) {
      const Point3 p = sample_box_surface(b, surf_t);
      out.cloud_t.points.push_back(p);
      out.gt_flow.vectors.push_back(motion.apply(p) - p);
      out.classes.push_back(PointClass::Foreground);
    }

    int n_t1 = ol.n_points;
    if (config.occlusion_enabled && place.uniform() < 0.3)
      n_t1 = static_cast<int>(std::ceil(ol.n_points * (1.0 - place.uniform() * 0.5)));
    for (int j = 0; j < n_t1; ++j) {
      const Point3 p = sample_box_surface(b, surf_t1);
      out.cloud_t1.points.push_back(motion.apply(p));
    }

    out.meta.objects.push_back(meta);
  }

  if (config.lidar_noise_sigma > 0.0) {
    for (auto& p : out.cloud_t1.points) {
      p.x += noise.normal(0.0, config.lidar_noise_sigma);
      p.y += noise.normal(0.0, config.lidar_noise_sigma);
      p.z += noise.normal(0.0, config.lidar_noise_sigma);
    }
  }

  out.validate();
  return out;
}

SceneSample make_rigid_box_sample(const Point3& center, const Point3& half_size,
                                  const RigidMotion& motion, int n_points, double noise_sigma,
                                  uint64_t seed) {
  if (n_points <= 0) throw std::invalid_argument("make_rigid_box_sample: n_points must be > 0");
  Rng surf_t = Rng(seed).fork(3);
  Rng surf_t1 = Rng(seed).fork(4);
  Rng noise = Rng(seed).fork(5);

  SceneSample out;
  out.dt_seconds = kDt;
  out.meta.seed = seed;
  out.cloud_t1.frame_id = 1;

  Box b{center, half_size, 0.0};
  ObjectMeta meta;
  meta.center = center;
  meta.half_size = half_size;
  meta.motion = motion;
  meta.speed_mps = motion.translation.norm() / kDt;
  meta.first_point = 0;
  meta.point_count = static_cast<size_t>(n_points);
  out.meta.objects.push_back(meta);

  for (int j = 0; j < n_points; ++j) {
    const Point3 p = sample_box_surface(b, surf_t);
    out.cloud_t.points.push_back(p);
    out.gt_flow.vectors.push_back(motion.apply(p) - p);
    out.classes.push_back(PointClass::Foreground);
  }
  for (int j = 0; j < n_points; ++j) {
    const Point3 p = sample_box_surface(b, surf_t1);
    Point3 q = motion.apply(p);
    if (noise_sigma > 0.0) {
      q.x += noise.normal(0.0, noise_sigma);
      q.y += noise.normal(0.0, noise_sigma);
      q.z += noise.normal(0.0, noise_sigma);
    }
    out.cloud_t1.points.push_back(q);
  }
  return out;
}

SceneSample crop_to_area(const SceneSample& sample, double half_extent) {
  if (half_extent <= 0.0) throw std::invalid_argument("crop_to_area: half_extent must be > 0");
  sample.validate();

  auto in_box = [half_extent](const Point3& p) {
    return std::abs(p.x) <= half_extent && std::abs(p.y) <= half_extent;
  };

  SceneSample out;
  out.dt_seconds = sample.dt_seconds;
  out.meta.seed = sample.meta.seed;
  out.cloud_t.frame_id = sample.cloud_t.frame_id;
  out.cloud_t1.frame_id = sample.cloud_t1.frame_id;

  for (size_t i = 0; i < sample.cloud_t.size(); ++i) {
    if (!in_box(sample.cloud_t.points[i])) continue;
    out.cloud_t.points.push_back(sample.cloud_t.points[i]);
    out.gt_flow.vectors.push_back(sample.gt_flow.vectors[i]);
    out.classes.push_back(sample.classes[i]);
  }
  for (const auto& p : sample.cloud_t1.points)
    if (in_box(p)) out.cloud_t1.points.push_back(p);

  if (out.cloud_t.empty()) throw std::runtime_error("crop_to_area: crop empties cloud_t");
  return out;
}

PointCloud apply_flow(const PointCloud& cloud, const FlowField& flow) {
  if (cloud.size() != flow.size())
    throw std::invalid_argument("apply_flow: cloud and flow lengths differ");
  PointCloud out;
  out.frame_id = cloud.frame_id;
  out.points.reserve(cloud.size());
  for (size_t i = 0; i < cloud.size(); ++i)
    out.points.push_back(cloud.points[i] + flow.vectors[i]);
  return out;
}

SceneSample remove_below_z(const SceneSample& sample, double z_min) {
  sample.validate();
  SceneSample out;
  out.dt_seconds = sample.dt_seconds;
  out.meta.seed = sample.meta.seed;
  out.cloud_t.frame_id = sample.cloud_t.frame_id;
  out.cloud_t1.frame_id = sample.cloud_t1.frame_id;
  for (size_t i = 0; i < sample.cloud_t.size(); ++i) {
    if (sample.cloud_t.points[i].z < z_min) continue;
    out.cloud_t.points.push_back(sample.cloud_t.points[i]);
    out.gt_flow.vectors.push_back(sample.gt_flow.vectors[i]);
    out.classes.push_back(sample.classes[i]);
  }
  for (const auto& p : sample.cloud_t1.points)
    if (p.z >= z_min) out.cloud_t1.points.push_back(p);
  return out;
}

}  // namespace flow
