#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <deque>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "meshtrack/flow.hpp"
#include "meshtrack/geometry.hpp"

namespace meshtrack {

struct OcclusionReport {
  /// Pairs of crossing edges as indices into MeshTopology::edges(), first < second.
  std::vector<std::pair<int, int>> intersected_edges;
  /// Sorted, unique.
  std::vector<int> occluded_vertices;

  bool empty() const { return intersected_edges.empty(); }
  bool is_occluded(int v) const {
    return std::binary_search(occluded_vertices.begin(), occluded_vertices.end(), v);
  }
};

/// Finds every pair of vertex-disjoint mesh edges that cross. Candidate pairs
/// come from a bucket grid over edge midpoints with overlapping bounding boxes.
inline OcclusionReport detect_self_occlusion(const MeshState& mesh, bool dilate = false) {
  const auto& edges = mesh.topology().edges();
  const auto& p = mesh.positions();
  OcclusionReport report;
  if (edges.size() < 2) return report;

  std::vector<Point2> mid(edges.size());
  std::vector<Box> box(edges.size());
  double half_max = 0.0;
  for (std::size_t k = 0; k < edges.size(); ++k) {
    const Point2 a = p[edges[k][0]], b = p[edges[k][1]];
    mid[k] = (a + b) / 2.0;
    box[k].expand(a);
    box[k].expand(b);
    half_max = std::max(half_max, distance(a, b) / 2.0);
  }
  const double cell = std::max(2.0 * half_max, 1e-6);
  const SpatialHash hash(mid, cell);
  for (std::size_t k = 0; k < edges.size(); ++k) {
    const Edge ek = edges[k];
    if (p[ek[0]] == p[ek[1]]) continue;
    hash.for_each_candidate(mid[k], 2.0 * half_max, [&](int m) {
      if (m <= static_cast<int>(k)) return;
      const Edge em = edges[m];
      if (em[0] == ek[0] || em[0] == ek[1] || em[1] == ek[0] || em[1] == ek[1]) return;
      const Box& a = box[k];
      const Box& b = box[m];
      if (a.xmax < b.xmin || b.xmax < a.xmin || a.ymax < b.ymin || b.ymax < a.ymin) return;
      if (p[em[0]] == p[em[1]]) return;
      if (intersect_segments(p[ek[0]], p[ek[1]], p[em[0]], p[em[1]]).hit)
        report.intersected_edges.emplace_back(static_cast<int>(k), m);
    });
  }
  std::sort(report.intersected_edges.begin(), report.intersected_edges.end());

  std::vector<int>& occ = report.occluded_vertices;
  for (auto [a, b] : report.intersected_edges) {
    occ.insert(occ.end(), {edges[a][0], edges[a][1], edges[b][0], edges[b][1]});
  }
  std::sort(occ.begin(), occ.end());
  occ.erase(std::unique(occ.begin(), occ.end()), occ.end());
  if (dilate && !occ.empty()) {
    std::vector<int> ring = occ;
    for (int v : occ)
      for (int n : mesh.topology().neighbors(v)) ring.push_back(n);
    std::sort(ring.begin(), ring.end());
    ring.erase(std::unique(ring.begin(), ring.end()), ring.end());
    occ = std::move(ring);
  }
  return report;
}

/// The last `capacity` per-frame vertex positions, oldest first.
class TrajectoryHistory {
 public:
  TrajectoryHistory(int vertex_count, int capacity = 5)
      : vertex_count_(vertex_count), capacity_(capacity) {
    if (capacity < 3) throw std::invalid_argument("history needs at least three frames");
  }

  void push(std::span<const Point2> positions) {
    if (static_cast<int>(positions.size()) != vertex_count_)
      throw std::invalid_argument("history frame has wrong vertex count");
    frames_.emplace_back(positions.begin(), positions.end());
    if (static_cast<int>(frames_.size()) > capacity_) frames_.pop_front();
  }

  int size() const { return static_cast<int>(frames_.size()); }
  int capacity() const { return capacity_; }
  bool full() const { return size() == capacity_; }

  std::vector<Point2> of_vertex(int i) const {
    std::vector<Point2> out;
    out.reserve(frames_.size());
    for (const auto& f : frames_) out.push_back(f[i]);
    return out;
  }

 private:
  int vertex_count_;
  int capacity_;
  std::deque<std::vector<Point2>> frames_;
};

namespace detail {

/// Solves the 3x3 system m x = r by Gaussian elimination with partial pivoting.
inline std::array<double, 3> solve3(std::array<std::array<double, 3>, 3> m,
                                    std::array<double, 3> r) {
  for (int c = 0; c < 3; ++c) {
    int piv = c;
    for (int k = c + 1; k < 3; ++k)
      if (std::abs(m[k][c]) > std::abs(m[piv][c])) piv = k;
    if (std::abs(m[piv][c]) < 1e-12) throw std::logic_error("singular normal matrix");
    std::swap(m[c], m[piv]);
    std::swap(r[c], r[piv]);
    for (int k = c + 1; k < 3; ++k) {
      const double f = m[k][c] / m[c][c];
      for (int j = c; j < 3; ++j) m[k][j] -= f * m[c][j];
      r[k] -= f * r[c];
    }
  }
  std::array<double, 3> x{};
  for (int c = 2; c >= 0; --c) {
    double s = r[c];
    for (int j = c + 1; j < 3; ++j) s -= m[c][j] * x[j];
    x[c] = s / m[c][c];
  }
  return x;
}

}  // namespace detail

/// Least-squares quadratic fit of a position history at consecutive frames
/// (oldest first), extrapolated one frame ahead. Frame indices are
/// recentred on the window, which leaves the fitted curve unchanged.
inline Point2 predict_polynomial(std::span<const Point2> history) {
  const int n = static_cast<int>(history.size());
  if (n < 3) throw std::invalid_argument("quadratic prediction needs at least three positions");
  const double mid = (n - 1) / 2.0;
  // Normal equations X X^T b = X y with x = [s^2, s, 1].
  std::array<std::array<double, 3>, 3> xtx{};
  std::array<double, 3> rx{}, ry{};
  for (int k = 0; k < n; ++k) {
    const double s = k - mid;
    const std::array<double, 3> basis{s * s, s, 1.0};
    for (int a = 0; a < 3; ++a) {
      for (int b = 0; b < 3; ++b) xtx[a][b] += basis[a] * basis[b];
      rx[a] += basis[a] * history[k].x;
      ry[a] += basis[a] * history[k].y;
    }
  }
  const auto bx = detail::solve3(xtx, rx);
  const auto by = detail::solve3(xtx, ry);
  const double s = n - mid;
  return {bx[0] * s * s + bx[1] * s + bx[2], by[0] * s * s + by[1] * s + by[2]};
}

enum class MotionSource { flow, polynomial };

struct MotionEstimate {
  std::vector<Point2> displacement;
  std::vector<MotionSource> source;
};

/// Per-vertex motion: sampled flow for visible vertices, quadratic history
/// extrapolation for occluded ones once the history window is full.
inline MotionEstimate estimate_motion(const MeshState& prev, const FlowField& flow,
                                      const OcclusionReport& occ, const TrajectoryHistory& hist) {
  const int n = prev.vertex_count();
  MotionEstimate est{std::vector<Point2>(n), std::vector<MotionSource>(n, MotionSource::flow)};
  const bool history_ready = hist.full();
  for (int i = 0; i < n; ++i) {
    const Point2 p = prev.position(i);
    if (history_ready && occ.is_occluded(i)) {
      const auto h = hist.of_vertex(i);
      est.displacement[i] = predict_polynomial(h) - p;
      est.source[i] = MotionSource::polynomial;
    } else {
      est.displacement[i] = sample_bicubic(flow, p);
    }
  }
  return est;
}

/// Mean of a per-vertex quantity over each patch N(i).
inline std::vector<Point2> patch_average(const MeshTopology& topo, std::span<const Point2> values) {
  std::vector<Point2> out(values.size());
  for (int i = 0; i < topo.vertex_count(); ++i) {
    Point2 s;
    const auto patch = topo.patch(i);
    for (int j : patch) s += values[j];
    out[i] = s / static_cast<double>(patch.size());
  }
  return out;
}

/// Initial guess for the next frame: previous positions plus the
/// patch-averaged motion.
inline MeshState initial_positions(const MeshState& prev, const FlowField& flow,
                                   const OcclusionReport& occ, const TrajectoryHistory& hist) {
  const auto est = estimate_motion(prev, flow, occ, hist);
  const auto smooth = patch_average(prev.topology(), est.displacement);
  std::vector<Point2> next(prev.positions());
  for (std::size_t i = 0; i < next.size(); ++i) next[i] += smooth[i];
  return prev.with_positions(std::move(next));
}

}  // namespace meshtrack
