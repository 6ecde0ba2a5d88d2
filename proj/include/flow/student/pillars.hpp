#pragma once

#include "flow/core/types.hpp"
#include "flow/nn/tensor.hpp"

namespace flow {

struct PillarConfig {
  double pillar_size = 0.2;       // meters per pillar edge
  double area_half_extent = 51.2; // meters
  int embed_dim = 16;
  int unet_levels = 4;

  // Cells per side; must be positive and divisible by 2^(unet_levels-1).
  int grid_cells() const;
  void validate() const;

  // Scaled-up variant: half the pillar size (4x the pseudoimage area), double
  // the embedding, one extra level to keep the metric receptive field.
  PillarConfig xl() const;

  // Small enough that a full CPU experiment finishes in minutes.
  static PillarConfig desk_scale();

  bool operator==(const PillarConfig&) const = default;
};

// Geometry half of pillarization: per-point pillar assignment and raw
// features (x/y offsets from the pillar center, z, 1). The learned embedding
// and per-cell max pool run in the model graph.
struct Pillarization {
  std::vector<int> cell_of_point;  // row * grid + col
  nn::Tensor features;             // [N,4]
  int grid = 0;
};

// row = floor((y+he)/ps), col = floor((x+he)/ps); points exactly on the max
// boundary go to the last cell; anything outside the area is an error.
Pillarization assign_pillars(const PointCloud& cloud, const PillarConfig& cfg);

}  // namespace flow
