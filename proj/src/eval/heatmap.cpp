#include "flow/eval/heatmap.hpp"

#include <cmath>
#include <fstream>

namespace flow {

void HeatmapSpec::validate() const {
  if (extent <= 0.0) throw std::invalid_argument("HeatmapSpec: extent must be > 0");
  if (bins <= 0 || bins % 2 != 0) throw std::invalid_argument("HeatmapSpec: bins must be positive and even");
  if (speed_threshold < 0.0) throw std::invalid_argument("HeatmapSpec: speed_threshold must be >= 0");
}

void accumulate_residual_heatmap(Heatmap& map, const FlowField& pred, const FlowField& gt,
                                 double dt, const HeatmapSpec& spec) {
  spec.validate();
  if (pred.size() != gt.size()) throw std::invalid_argument("residual_heatmap: length mismatch");
  if (dt <= 0.0) throw std::invalid_argument("residual_heatmap: dt must be > 0");
  if (map.counts.empty()) {
    map.bins = spec.bins;
    map.extent = spec.extent;
    map.counts.assign(static_cast<size_t>(spec.bins) * spec.bins, 0);
  }
  if (map.bins != spec.bins || map.extent != spec.extent)
    throw std::invalid_argument("residual_heatmap: accumulating under a different spec");

  const double half = spec.extent / 2.0;
  const double cell = spec.extent / spec.bins;

  for (size_t i = 0; i < pred.size(); ++i) {
    const Point3& g = gt.vectors[i];
    if (g.norm() / dt <= spec.speed_threshold) continue;

    double dx = pred.vectors[i].x - g.x;
    double dy = pred.vectors[i].y - g.y;
    if (spec.rotated) {
      // BEV rotation taking the gt vector onto +y.
      const double n = std::sqrt(g.x * g.x + g.y * g.y);
      if (n > 0.0) {
        const double u = g.x / n, v = g.y / n;
        const double rx = v * dx - u * dy;
        const double ry = u * dx + v * dy;
        dx = rx;
        dy = ry;
      }
    }

    const double fx = std::floor((dx + half) / cell);
    const double fy = std::floor((dy + half) / cell);
    if (fx < 0.0 || fx >= spec.bins || fy < 0.0 || fy >= spec.bins) {
      ++map.out_of_extent;
      continue;
    }
    const int ix = static_cast<int>(fx);
    const int iy = spec.bins - 1 - static_cast<int>(fy);  // +y up in the image
    ++map.counts[static_cast<size_t>(iy) * spec.bins + ix];
  }
}

Heatmap residual_heatmap(const FlowField& pred, const FlowField& gt, double dt,
                         const HeatmapSpec& spec) {
  Heatmap map;
  accumulate_residual_heatmap(map, pred, gt, dt, spec);
  if (map.counts.empty()) {
    map.bins = spec.bins;
    map.extent = spec.extent;
    map.counts.assign(static_cast<size_t>(spec.bins) * spec.bins, 0);
  }
  return map;
}

std::string heatmap_stem(const std::string& method, const HeatmapSpec& spec) {
  return method + (spec.rotated ? "_rotated" : "_unrotated") +
         (spec.scale == HeatScale::Log10 ? "_log" : "_abs");
}

void write_heatmap_pgm(const std::filesystem::path& path, const Heatmap& map, HeatScale scale) {
  uint64_t max_count = 0;
  for (uint64_t c : map.counts) max_count = std::max(max_count, c);

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write heatmap: " + path.string());
  out << "P5\n" << map.bins << " " << map.bins << "\n255\n";
  const double denom = scale == HeatScale::Log10
                           ? std::log10(1.0 + static_cast<double>(max_count))
                           : static_cast<double>(max_count);
  for (uint64_t c : map.counts) {
    double val = 0.0;
    if (max_count > 0) {
      val = scale == HeatScale::Log10 ? std::log10(1.0 + static_cast<double>(c)) / denom
                                      : static_cast<double>(c) / denom;
    }
    out.put(static_cast<char>(static_cast<unsigned char>(std::lround(val * 255.0))));
  }
  out.close();
  if (!out) throw std::runtime_error("heatmap write failed: " + path.string());
}

void write_heatmap_csv(const std::filesystem::path& path, const Heatmap& map) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write heatmap csv: " + path.string());
  for (int r = 0; r < map.bins; ++r) {
    for (int c = 0; c < map.bins; ++c) {
      if (c) out << ",";
      out << map.counts[static_cast<size_t>(r) * map.bins + c];
    }
    out << "\n";
  }
}

}  // namespace flow
