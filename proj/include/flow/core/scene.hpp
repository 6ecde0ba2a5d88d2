#pragma once

#include "flow/core/types.hpp"

namespace flow {

// Builds a synthetic rigid scene: static background structures plus rigid
// boxes moving by per-object RigidMotions. Object surfaces are sampled
// independently at t and t+1, so there is never exact point correspondence
// across frames. Deterministic function of the config.
SceneSample generate_scene(const SceneConfig& config);

// Single rigid box sampled at t and t+1 under `motion`, no background.
// Fixture used by teacher tests and benchmarks.
SceneSample make_rigid_box_sample(const Point3& center, const Point3& half_size,
                                  const RigidMotion& motion, int n_points, double noise_sigma,
                                  uint64_t seed);

// Keeps points with |x| <= half_extent and |y| <= half_extent. cloud_t keeps
// its aligned flow/class entries; cloud_t1 is cropped independently.
SceneSample crop_to_area(const SceneSample& sample, double half_extent);

PointCloud apply_flow(const PointCloud& cloud, const FlowField& flow);

// Ground filter for externally supplied data; the generator never emits
// ground points.
SceneSample remove_below_z(const SceneSample& sample, double z_min);

}  // namespace flow
