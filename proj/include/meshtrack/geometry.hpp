#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace meshtrack {

/// Continuous image coordinate in pixels. Pixel (x, y) has its center at
/// integer coordinates.
struct Point2 {
  double x = 0.0;
  double y = 0.0;

  constexpr Point2& operator+=(Point2 o) {
    x += o.x;
    y += o.y;
    return *this;
  }
  constexpr Point2& operator-=(Point2 o) {
    x -= o.x;
    y -= o.y;
    return *this;
  }
  constexpr Point2& operator*=(double s) {
    x *= s;
    y *= s;
    return *this;
  }
  friend constexpr Point2 operator+(Point2 a, Point2 b) { return {a.x + b.x, a.y + b.y}; }
  friend constexpr Point2 operator-(Point2 a, Point2 b) { return {a.x - b.x, a.y - b.y}; }
  friend constexpr Point2 operator-(Point2 a) { return {-a.x, -a.y}; }
  friend constexpr Point2 operator*(double s, Point2 a) { return {s * a.x, s * a.y}; }
  friend constexpr Point2 operator*(Point2 a, double s) { return {s * a.x, s * a.y}; }
  friend constexpr Point2 operator/(Point2 a, double s) { return {a.x / s, a.y / s}; }
  friend constexpr bool operator==(Point2 a, Point2 b) = default;
};

constexpr double dot(Point2 a, Point2 b) { return a.x * b.x + a.y * b.y; }
/// 2D scalar cross product (z component of the 3D cross product).
constexpr double cross(Point2 a, Point2 b) { return a.x * b.y - a.y * b.x; }
constexpr double squared_norm(Point2 a) { return dot(a, a); }
inline double norm(Point2 a) { return std::hypot(a.x, a.y); }
inline double distance(Point2 a, Point2 b) { return norm(a - b); }
inline bool is_finite(Point2 p) { return std::isfinite(p.x) && std::isfinite(p.y); }

inline Point2 centroid(std::span<const Point2> pts) {
  Point2 c;
  for (const Point2& p : pts) c += p;
  return pts.empty() ? c : c / static_cast<double>(pts.size());
}

class Segment {
 public:
  Segment(Point2 a, Point2 b) : a_(a), b_(b) {
    if (!is_finite(a) || !is_finite(b)) throw std::invalid_argument("segment endpoint is not finite");
    if (a == b) throw std::invalid_argument("segment has zero length");
  }

  Point2 a() const { return a_; }
  Point2 b() const { return b_; }
  Point2 direction() const { return b_ - a_; }
  double length() const { return distance(a_, b_); }

 private:
  Point2 a_;
  Point2 b_;
};

struct IntersectionResult {
  bool hit = false;
  double alpha = 0.0;  // parameter along the first segment
  double beta = 0.0;   // parameter along the second segment
};

/// Denominator tolerance in squared pixels; below it the segments are
/// treated as parallel or collinear.
inline constexpr double kParallelEps = 1e-12;
/// Open-interval margin on the segment parameters. Edges that merely share
/// an endpoint never count as crossing.
inline constexpr double kParamMargin = 1e-9;

/// Parametric crossing test of p1->p2 against p3->p4. Collinear overlap is
/// reported as no hit.
inline IntersectionResult intersect_segments(Point2 p1, Point2 p2, Point2 p3, Point2 p4,
                                             double eps = kParallelEps) {
  const Point2 d1 = p2 - p1;
  const Point2 d2 = p4 - p3;
  const double denom = cross(d1, d2);
  IntersectionResult r;
  if (std::abs(denom) <= eps) return r;
  r.alpha = cross(p3 - p1, d2) / denom;
  r.beta = cross(p1 - p3, d1) / cross(d2, d1);
  r.hit = r.alpha > kParamMargin && r.alpha < 1.0 - kParamMargin && r.beta > kParamMargin &&
          r.beta < 1.0 - kParamMargin;
  return r;
}

inline IntersectionResult segment_intersect(const Segment& s1, const Segment& s2,
                                            double eps = kParallelEps) {
  return intersect_segments(s1.a(), s1.b(), s2.a(), s2.b(), eps);
}

using Edge = std::array<int, 2>;  // i < j
using Face = std::array<int, 3>;

/// Fixed mesh connectivity shared by every frame. Patches N(i) hold the
/// vertex itself first, then its edge neighbours in ascending order.
class MeshTopology {
 public:
  MeshTopology(int vertex_count, std::vector<Edge> edges, std::vector<Face> faces)
      : vertex_count_(vertex_count), faces_(std::move(faces)) {
    if (vertex_count_ <= 0) throw std::invalid_argument("mesh needs at least one vertex");
    for (Edge e : edges) {
      if (e[0] == e[1] || e[0] < 0 || e[1] < 0 || e[0] >= vertex_count_ || e[1] >= vertex_count_)
        throw std::invalid_argument("edge index out of range");
      if (e[0] > e[1]) std::swap(e[0], e[1]);
      edges_.push_back(e);
    }
    std::sort(edges_.begin(), edges_.end());
    edges_.erase(std::unique(edges_.begin(), edges_.end()), edges_.end());

    for (const Face& f : faces_) {
      for (int k = 0; k < 3; ++k) {
        Edge e{f[k], f[(k + 1) % 3]};
        if (e[0] > e[1]) std::swap(e[0], e[1]);
        if (!std::binary_search(edges_.begin(), edges_.end(), e))
          throw std::invalid_argument("face edge missing from edge list");
      }
    }

    std::vector<std::vector<int>> nbrs(vertex_count_);
    for (const Edge& e : edges_) {
      nbrs[e[0]].push_back(e[1]);
      nbrs[e[1]].push_back(e[0]);
    }
    patch_offsets_.reserve(vertex_count_ + 1);
    patch_offsets_.push_back(0);
    for (int i = 0; i < vertex_count_; ++i) {
      if (nbrs[i].empty())
        throw std::invalid_argument("vertex " + std::to_string(i) + " has no incident edge");
      std::sort(nbrs[i].begin(), nbrs[i].end());
      patches_.push_back(i);
      patches_.insert(patches_.end(), nbrs[i].begin(), nbrs[i].end());
      patch_offsets_.push_back(static_cast<int>(patches_.size()));
    }
  }

  /// Topology of a triangle list; the edge set is the union of face edges.
  static MeshTopology from_faces(int vertex_count, std::vector<Face> faces) {
    std::vector<Edge> edges;
    edges.reserve(faces.size() * 3);
    for (const Face& f : faces)
      for (int k = 0; k < 3; ++k) edges.push_back({f[k], f[(k + 1) % 3]});
    return MeshTopology(vertex_count, std::move(edges), std::move(faces));
  }

  int vertex_count() const { return vertex_count_; }
  const std::vector<Edge>& edges() const { return edges_; }
  const std::vector<Face>& faces() const { return faces_; }

  std::span<const int> patch(int i) const {
    return std::span<const int>(patches_).subspan(
        patch_offsets_[i], patch_offsets_[i + 1] - patch_offsets_[i]);
  }

  std::span<const int> neighbors(int i) const { return patch(i).subspan(1); }

 private:
  int vertex_count_;
  std::vector<Edge> edges_;
  std::vector<Face> faces_;
  std::vector<int> patches_;
  std::vector<int> patch_offsets_;
};

/// Vertex positions of one frame over a shared topology.
class MeshState {
 public:
  MeshState(std::shared_ptr<const MeshTopology> topology, std::vector<Point2> positions)
      : topology_(std::move(topology)), positions_(std::move(positions)) {
    if (!topology_) throw std::invalid_argument("mesh state without topology");
    check();
  }

  const MeshTopology& topology() const { return *topology_; }
  const std::shared_ptr<const MeshTopology>& shared_topology() const { return topology_; }
  const std::vector<Point2>& positions() const { return positions_; }
  Point2 position(int i) const { return positions_[i]; }
  int vertex_count() const { return topology_->vertex_count(); }

  void set_positions(std::vector<Point2> positions) {
    positions_ = std::move(positions);
    check();
  }

  /// Same topology, new positions.
  MeshState with_positions(std::vector<Point2> positions) const {
    return MeshState(topology_, std::move(positions));
  }

 private:
  void check() const {
    if (static_cast<int>(positions_.size()) != topology_->vertex_count())
      throw std::invalid_argument("position count does not match topology");
    for (const Point2& p : positions_)
      if (!is_finite(p)) throw std::invalid_argument("non-finite vertex position");
  }

  std::shared_ptr<const MeshTopology> topology_;
  std::vector<Point2> positions_;
};

inline double longest_edge(const MeshState& mesh) {
  const auto& edges = mesh.topology().edges();
  if (edges.empty()) throw std::invalid_argument("mesh has no edges");
  double best = 0.0;
  for (const Edge& e : edges)
    best = std::max(best, distance(mesh.position(e[0]), mesh.position(e[1])));
  return best;
}

struct Box {
  double xmin = 0, ymin = 0, xmax = -1, ymax = -1;

  bool empty() const { return xmax < xmin || ymax < ymin; }
  bool contains(Point2 p) const {
    return p.x >= xmin && p.x <= xmax && p.y >= ymin && p.y <= ymax;
  }
  void expand(Point2 p) {
    if (empty()) {
      xmin = xmax = p.x;
      ymin = ymax = p.y;
      return;
    }
    xmin = std::min(xmin, p.x);
    xmax = std::max(xmax, p.x);
    ymin = std::min(ymin, p.y);
    ymax = std::max(ymax, p.y);
  }
  Box dilated(double r) const { return {xmin - r, ymin - r, xmax + r, ymax + r}; }
};

/// Uniform bucket grid over a fixed set of points (CSR layout).
class SpatialHash {
 public:
  SpatialHash(std::span<const Point2> points, double cell_size) : cell_(cell_size) {
    if (!(cell_size > 0)) throw std::invalid_argument("cell size must be positive");
    Box b;
    for (const Point2& p : points) b.expand(p);
    if (b.empty()) b = {0, 0, 0, 0};
    x0_ = b.xmin;
    y0_ = b.ymin;
    nx_ = static_cast<int>(std::floor((b.xmax - x0_) / cell_)) + 1;
    ny_ = static_cast<int>(std::floor((b.ymax - y0_) / cell_)) + 1;
    start_.assign(static_cast<std::size_t>(nx_) * ny_ + 1, 0);
    std::vector<int> cell_of(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) {
      cell_of[i] = cell_index(points[i]);
      ++start_[cell_of[i] + 1];
    }
    for (std::size_t c = 1; c < start_.size(); ++c) start_[c] += start_[c - 1];
    items_.resize(points.size());
    std::vector<int> fill(start_.begin(), start_.end() - 1);
    for (std::size_t i = 0; i < points.size(); ++i) items_[fill[cell_of[i]]++] = static_cast<int>(i);
  }

  /// Calls fn(index) for every stored point in cells overlapping the square
  /// of half-width r around c. Callers filter by exact distance.
  template <class Fn>
  void for_each_candidate(Point2 c, double r, Fn&& fn) const {
    const int cx0 = std::max(0, static_cast<int>(std::floor((c.x - r - x0_) / cell_)));
    const int cy0 = std::max(0, static_cast<int>(std::floor((c.y - r - y0_) / cell_)));
    const int cx1 = std::min(nx_ - 1, static_cast<int>(std::floor((c.x + r - x0_) / cell_)));
    const int cy1 = std::min(ny_ - 1, static_cast<int>(std::floor((c.y + r - y0_) / cell_)));
    for (int cy = cy0; cy <= cy1; ++cy)
      for (int cx = cx0; cx <= cx1; ++cx) {
        const int cell = cy * nx_ + cx;
        for (int k = start_[cell]; k < start_[cell + 1]; ++k) fn(items_[k]);
      }
  }

 private:
  int cell_index(Point2 p) const {
    const int cx = std::clamp(static_cast<int>(std::floor((p.x - x0_) / cell_)), 0, nx_ - 1);
    const int cy = std::clamp(static_cast<int>(std::floor((p.y - y0_) / cell_)), 0, ny_ - 1);
    return cy * nx_ + cx;
  }

  double cell_;
  double x0_ = 0, y0_ = 0;
  int nx_ = 1, ny_ = 1;
  std::vector<int> start_;
  std::vector<int> items_;
};

}  // namespace meshtrack
