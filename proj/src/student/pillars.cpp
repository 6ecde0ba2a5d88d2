#include "flow/student/pillars.hpp"

#include <cmath>

namespace flow {

int PillarConfig::grid_cells() const {
  const double cells = 2.0 * area_half_extent / pillar_size;
  const int n = static_cast<int>(std::lround(cells));
  if (n <= 0 || std::abs(cells - n) > 1e-9)
    throw std::invalid_argument("PillarConfig: 2*area_half_extent/pillar_size must be a positive integer");
  return n;
}

void PillarConfig::validate() const {
  if (pillar_size <= 0.0) throw std::invalid_argument("PillarConfig: pillar_size must be > 0");
  if (area_half_extent <= 0.0) throw std::invalid_argument("PillarConfig: area_half_extent must be > 0");
  if (embed_dim <= 0) throw std::invalid_argument("PillarConfig: embed_dim must be > 0");
  if (unet_levels < 2) throw std::invalid_argument("PillarConfig: unet_levels must be >= 2");
  const int n = grid_cells();
  const int div = 1 << (unet_levels - 1);
  if (n % div != 0)
    throw std::invalid_argument("PillarConfig: grid (" + std::to_string(n) +
                                ") must be divisible by 2^(unet_levels-1) = " + std::to_string(div));
}

PillarConfig PillarConfig::xl() const {
  PillarConfig c = *this;
  c.pillar_size = pillar_size / 2.0;
  c.embed_dim = embed_dim * 2;
  c.unet_levels = unet_levels + 1;
  c.validate();
  return c;
}

PillarConfig PillarConfig::desk_scale() {
  PillarConfig c;
  c.pillar_size = 0.2;
  c.area_half_extent = 12.8;
  c.embed_dim = 8;
  c.unet_levels = 4;
  return c;
}

Pillarization assign_pillars(const PointCloud& cloud, const PillarConfig& cfg) {
  cfg.validate();
  const int grid = cfg.grid_cells();
  const double he = cfg.area_half_extent;
  const double ps = cfg.pillar_size;

  Pillarization out;
  out.grid = grid;
  out.cell_of_point.resize(cloud.size());
  out.features = nn::Tensor::zeros({static_cast<int>(cloud.size()), 4});

  for (size_t i = 0; i < cloud.size(); ++i) {
    const Point3& p = cloud.points[i];
    if (std::abs(p.x) > he || std::abs(p.y) > he)
      throw std::invalid_argument("assign_pillars: point outside area (crop first): x=" +
                                  std::to_string(p.x) + " y=" + std::to_string(p.y));
    int col = static_cast<int>(std::floor((p.x + he) / ps));
    int row = static_cast<int>(std::floor((p.y + he) / ps));
    if (col == grid) col = grid - 1;  // max boundary goes to the last cell
    if (row == grid) row = grid - 1;
    out.cell_of_point[i] = row * grid + col;

    const double cx = -he + (col + 0.5) * ps;
    const double cy = -he + (row + 0.5) * ps;
    out.features.v[i * 4 + 0] = p.x - cx;
    out.features.v[i * 4 + 1] = p.y - cy;
    out.features.v[i * 4 + 2] = p.z;
    out.features.v[i * 4 + 3] = 1.0;
  }
  return out;
}

}  // namespace flow
