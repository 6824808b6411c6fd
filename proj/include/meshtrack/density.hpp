#pragma once

#include <span>
#include <stdexcept>
#include <vector>

#include "meshtrack/geometry.hpp"
#include "meshtrack/silhouette.hpp"

namespace meshtrack {

/// Per-pixel count of vertices within a radius, defined on figure pixels only.
struct DensityMap {
  static constexpr int kNotApplicable = -1;

  int width = 0;
  int height = 0;
  std::vector<int> counts;

  int at(int x, int y) const { return counts[static_cast<std::size_t>(y) * width + x]; }
};

inline DensityMap vertex_density_map(std::span<const Point2> vertices, const SilhouetteMask& mask,
                                     double radius) {
  if (!(radius > 0)) throw std::invalid_argument("density radius must be positive");
  DensityMap map{mask.width(), mask.height(),
                 std::vector<int>(static_cast<std::size_t>(mask.width()) * mask.height(),
                                  DensityMap::kNotApplicable)};
  const double r2 = radius * radius;
  if (vertices.empty()) {
    for (int y = 0; y < mask.height(); ++y)
      for (int x = 0; x < mask.width(); ++x)
        if (mask.at(x, y)) map.counts[static_cast<std::size_t>(y) * mask.width() + x] = 0;
    return map;
  }
  const SpatialHash hash(vertices, radius);
  for (int y = 0; y < mask.height(); ++y)
    for (int x = 0; x < mask.width(); ++x) {
      if (!mask.at(x, y)) continue;
      const Point2 c{double(x), double(y)};
      int n = 0;
      hash.for_each_candidate(c, radius, [&](int i) {
        if (squared_norm(vertices[i] - c) <= r2) ++n;
      });
      map.counts[static_cast<std::size_t>(y) * mask.width() + x] = n;
    }
  return map;
}

inline DensityMap vertex_density_map(const MeshState& mesh, const SilhouetteMask& mask,
                                     double radius) {
  return vertex_density_map(std::span<const Point2>(mesh.positions()), mask, radius);
}

}  // namespace meshtrack
