#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <span>
#include <utility>
#include <vector>

#include "meshtrack/geometry.hpp"

namespace meshtrack {

namespace detail {

inline double orient2d(Point2 a, Point2 b, Point2 c) { return cross(b - a, c - a); }

/// Positive when d lies strictly inside the circumcircle of CCW triangle abc.
inline double incircle(Point2 a, Point2 b, Point2 c, Point2 d) {
  const Point2 ad = a - d, bd = b - d, cd = c - d;
  const double alift = squared_norm(ad), blift = squared_norm(bd), clift = squared_norm(cd);
  return alift * cross(bd, cd) + blift * cross(cd, ad) + clift * cross(ad, bd);
}

}  // namespace detail

/// Bowyer-Watson incremental Delaunay triangulation. Returns CCW faces over
/// point indices; duplicate points are left unreferenced.
inline std::vector<Face> delaunay_triangulate(std::span<const Point2> pts) {
  const int n = static_cast<int>(pts.size());
  if (n < 3) return {};

  Box box;
  for (const Point2& p : pts) box.expand(p);
  const double span = std::max({box.xmax - box.xmin, box.ymax - box.ymin, 1.0});
  const Point2 c{(box.xmin + box.xmax) / 2, (box.ymin + box.ymax) / 2};
  std::vector<Point2> v(pts.begin(), pts.end());
  v.push_back({c.x - 40 * span, c.y - 20 * span});
  v.push_back({c.x + 40 * span, c.y - 20 * span});
  v.push_back({c.x, c.y + 40 * span});

  std::vector<Face> tris{{n, n + 1, n + 2}};
  if (detail::orient2d(v[n], v[n + 1], v[n + 2]) < 0) std::swap(tris[0][1], tris[0][2]);

  std::vector<std::uint8_t> bad;
  std::map<std::pair<int, int>, int> edge_count;
  std::vector<std::pair<int, int>> boundary;
  for (int i = 0; i < n; ++i) {
    const Point2 p = v[i];
    bad.assign(tris.size(), 0);
    bool any = false;
    for (std::size_t t = 0; t < tris.size(); ++t) {
      const Face& f = tris[t];
      if (detail::incircle(v[f[0]], v[f[1]], v[f[2]], p) > 0) {
        bad[t] = 1;
        any = true;
      }
    }
    if (!any) continue;  // coincides with an existing vertex

    edge_count.clear();
    for (std::size_t t = 0; t < tris.size(); ++t) {
      if (!bad[t]) continue;
      for (int k = 0; k < 3; ++k) {
        const int a = tris[t][k], b = tris[t][(k + 1) % 3];
        ++edge_count[{std::min(a, b), std::max(a, b)}];
      }
    }
    boundary.clear();
    for (std::size_t t = 0; t < tris.size(); ++t) {
      if (!bad[t]) continue;
      for (int k = 0; k < 3; ++k) {
        const int a = tris[t][k], b = tris[t][(k + 1) % 3];
        if (edge_count[{std::min(a, b), std::max(a, b)}] == 1) boundary.emplace_back(a, b);
      }
    }
    std::vector<Face> next;
    next.reserve(tris.size() + 2);
    for (std::size_t t = 0; t < tris.size(); ++t)
      if (!bad[t]) next.push_back(tris[t]);
    for (auto [a, b] : boundary) {
      if (detail::orient2d(v[a], v[b], p) > 0) next.push_back({a, b, i});
    }
    tris = std::move(next);
  }

  std::vector<Face> out;
  for (const Face& f : tris)
    if (f[0] < n && f[1] < n && f[2] < n) out.push_back(f);
  return out;
}

}  // namespace meshtrack
