#pragma once

#include <filesystem>

#include "flow/core/types.hpp"

namespace flow {

enum class HeatScale { Log10, Absolute };

struct HeatmapSpec {
  double extent = 4.0;  // meters per side, centered on the gt endpoint
  int bins = 200;       // per side, even
  HeatScale scale = HeatScale::Log10;
  bool rotated = true;  // rotate each pair so gt points along +y
  double speed_threshold = 0.5;  // m/s; only faster gt points contribute

  void validate() const;
};

// Accumulated BEV histogram of residual endpoints (pred minus gt), gt
// endpoint at the center. Row 0 is the +y edge, so the PGM reads like the
// usual bird's-eye plots. A heatmap with zero contributing points is valid
// ("flagged, not an error"): check empty().
struct Heatmap {
  int bins = 0;
  double extent = 0.0;
  std::vector<uint64_t> counts;   // bins x bins, row-major from the +y edge
  uint64_t out_of_extent = 0;     // moving-point residuals outside the window

  uint64_t in_extent() const {
    uint64_t n = 0;
    for (uint64_t c : counts) n += c;
    return n;
  }
  bool empty() const { return in_extent() + out_of_extent == 0; }
};

Heatmap residual_heatmap(const FlowField& pred, const FlowField& gt, double dt,
                         const HeatmapSpec& spec);

// Split-level aggregation into an existing map (same spec required).
void accumulate_residual_heatmap(Heatmap& map, const FlowField& pred, const FlowField& gt,
                                 double dt, const HeatmapSpec& spec);

// <method>_<rotated|unrotated>_<log|abs> naming stem.
std::string heatmap_stem(const std::string& method, const HeatmapSpec& spec);

// 8-bit PGM under the spec's normalization (log10(1+count) or absolute),
// plus the raw bin counts as CSV.
void write_heatmap_pgm(const std::filesystem::path& path, const Heatmap& map, HeatScale scale);
void write_heatmap_csv(const std::filesystem::path& path, const Heatmap& map);

}  // namespace flow
