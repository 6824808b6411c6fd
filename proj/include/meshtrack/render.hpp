#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "meshtrack/geometry.hpp"
#include "meshtrack/image_io.hpp"
#include "meshtrack/silhouette.hpp"
#include "meshtrack/tracker.hpp"

namespace meshtrack {

using Rgb = std::array<std::uint8_t, 3>;

inline Rgb palette(int k) {
  static constexpr Rgb kColors[] = {{230, 80, 60},  {70, 170, 240}, {250, 200, 40},
                                    {120, 220, 90}, {200, 110, 230}, {255, 140, 30},
                                    {60, 220, 200}, {240, 120, 170}};
  return kColors[static_cast<std::size_t>(k) % std::size(kColors)];
}

inline void draw_line(RgbImage& img, Point2 a, Point2 b, Rgb c) {
  if (!is_finite(a) || !is_finite(b)) return;
  const int steps = static_cast<int>(std::ceil(std::max(std::abs(b.x - a.x), std::abs(b.y - a.y))));
  for (int s = 0; s <= steps; ++s) {
    const double t = steps == 0 ? 0.0 : static_cast<double>(s) / steps;
    img.set(static_cast<int>(std::lround(a.x + t * (b.x - a.x))),
            static_cast<int>(std::lround(a.y + t * (b.y - a.y))), c);
  }
}

struct OverlayStyle {
  int trail = 20;
};

/// One overlay: dimmed silhouette, current mesh edges, and each point's
/// recent trail coloured by its group.
inline RgbImage render_overlay(const TrajectoryMatrix& tracks, int frame, int width, int height,
                               const SilhouetteMask* mask, const MeshTopology* topo,
                               const std::vector<int>& groups, const OverlayStyle& style = {}) {
  RgbImage img(width, height);
  if (mask)
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x)
        if (mask->at(x, y)) img.set(x, y, {55, 55, 62});
  if (topo)
    for (const Edge& e : topo->edges())
      draw_line(img, tracks.at(e[0], frame), tracks.at(e[1], frame), {110, 110, 120});
  const int first = std::max(0, frame - style.trail + 1);
  for (int i = 0; i < tracks.points(); ++i) {
    const Rgb c = groups.empty() || groups[i] < 0 ? Rgb{235, 235, 235} : palette(groups[i]);
    for (int t = first; t < frame; ++t) draw_line(img, tracks.at(i, t), tracks.at(i, t + 1), c);
    const Point2 p = tracks.at(i, frame);
    if (is_finite(p)) img.set(static_cast<int>(std::lround(p.x)), static_cast<int>(std::lround(p.y)), {255, 255, 255});
  }
  return img;
}

/// Group per trajectory from a label image sampled at frame-1 positions.
/// Label 0 (background) maps to -1.
inline std::vector<int> groups_from_labels(const TrajectoryMatrix& tracks, const GrayImage& labels) {
  std::vector<int> out(tracks.points(), -1);
  for (int i = 0; i < tracks.points(); ++i) {
    const Point2 p = tracks.at(i, 0);
    if (!is_finite(p)) continue;
    const int x = static_cast<int>(std::lround(p.x)), y = static_cast<int>(std::lround(p.y));
    if (x < 0 || y < 0 || x >= labels.width || y >= labels.height) continue;
    const int l = labels.at(x, y);
    out[i] = l > 0 ? l - 1 : -1;
  }
  return out;
}

/// Group per vertex by connected mesh component.
inline std::vector<int> groups_from_components(const MeshTopology& topo) {
  std::vector<int> comp(topo.vertex_count(), -1);
  int next = 0;
  std::vector<int> stack;
  for (int s = 0; s < topo.vertex_count(); ++s) {
    if (comp[s] >= 0) continue;
    comp[s] = next;
    stack.push_back(s);
    while (!stack.empty()) {
      const int v = stack.back();
      stack.pop_back();
      for (int w : topo.neighbors(v))
        if (comp[w] < 0) {
          comp[w] = next;
          stack.push_back(w);
        }
    }
    ++next;
  }
  return comp;
}

}  // namespace meshtrack
