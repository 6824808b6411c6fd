#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <limits>
#include <memory>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "meshtrack/delaunay.hpp"
#include "meshtrack/error.hpp"
#include "meshtrack/geometry.hpp"
#include "meshtrack/silhouette.hpp"

namespace meshtrack {

struct MeshGenParams {
  int target_vertex_count = 300;
  int max_relax_iters = 150;
  /// Relaxation stops once no interior vertex moves farther than this.
  /// Zero means 0.01 * h0.
  double move_tolerance = 0.0;
  /// Nominal edge length. Zero means derive from area and vertex count.
  double h0 = 0.0;

  void validate() const {
    if (target_vertex_count < 4) throw ConfigError("target_vertex_count must be >= 4");
    if (max_relax_iters < 1) throw ConfigError("max_relax_iters must be >= 1");
    if (move_tolerance < 0) throw ConfigError("move_tolerance must be >= 0");
    if (h0 < 0) throw ConfigError("h0 must be >= 0");
  }
};

struct ReferenceMesh {
  MeshState mesh;
  double h0 = 0.0;
  int iterations = 0;
  bool converged = false;
  /// The first attempt left a thin limb unsampled and h0 was halved.
  bool refined = false;
  std::vector<std::string> warnings;
};

namespace detail {

inline std::vector<Point2> hex_lattice(const SilhouetteMask& mask, const DistanceField& field,
                                       double spacing) {
  Box box;
  for (int y = 0; y < mask.height(); ++y)
    for (int x = 0; x < mask.width(); ++x)
      if (mask.at(x, y)) box.expand({double(x), double(y)});
  const double row = spacing * std::sqrt(3.0) / 2.0;
  std::vector<Point2> pts;
  int j = 0;
  for (double y = box.ymin; y <= box.ymax; y += row, ++j) {
    const double shift = (j % 2) ? spacing / 2.0 : 0.0;
    for (double x = box.xmin + shift; x <= box.xmax; x += spacing) {
      const Point2 p{x, y};
      if (field.sample(p) <= -spacing / 4.0) pts.push_back(p);
    }
  }
  return pts;
}

/// Lattice spacing whose clipped point count lands closest to the target.
inline double calibrate_spacing(const SilhouetteMask& mask, const DistanceField& field, double h0,
                                int target) {
  double best = h0;
  long best_err = std::numeric_limits<long>::max();
  double s = h0;
  for (int k = 0; k < 12; ++k) {
    const long count = static_cast<long>(hex_lattice(mask, field, s).size());
    const long err = std::abs(count - target);
    if (err < best_err) {
      best_err = err;
      best = s;
    }
    if (count == 0 || err <= target / 50) break;
    s *= std::sqrt(static_cast<double>(count) / target);
  }
  return best;
}

/// Normalized triangle quality 4*sqrt(3)*area / sum(edge^2); 1 for equilateral.
inline constexpr double kMinTriangleQuality = 0.1;

inline std::vector<Face> interior_faces(std::span<const Point2> pts, const SilhouetteMask& mask,
                                        double h0) {
  std::vector<Face> kept;
  for (const Face& f : delaunay_triangulate(pts)) {
    const Point2 a = pts[f[0]], b = pts[f[1]], c = pts[f[2]];
    if (!is_inside(mask, (a + b + c) / 3.0)) continue;
    // Flat slivers between nearly collinear boundary vertices.
    const double area2 = orient2d(a, b, c);
    const double sq = squared_norm(b - a) + squared_norm(c - b) + squared_norm(a - c);
    if (area2 <= 1e-9 * h0 * h0 || 2.0 * std::sqrt(3.0) * area2 < kMinTriangleQuality * sq)
      continue;
    kept.push_back(f);
  }
  return kept;
}

inline std::vector<Edge> face_edges(const std::vector<Face>& faces) {
  std::vector<Edge> edges;
  for (const Face& f : faces)
    for (int k = 0; k < 3; ++k) {
      Edge e{f[k], f[(k + 1) % 3]};
      if (e[0] > e[1]) std::swap(e[0], e[1]);
      edges.push_back(e);
    }
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  return edges;
}

/// Keeps the largest vertex-connected set of faces and drops unreferenced
/// vertices, renumbering the survivors in their original order.
inline MeshState compact_mesh(const std::vector<Point2>& pts, const std::vector<Face>& faces) {
  const int n = static_cast<int>(pts.size());
  std::vector<int> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (const Face& f : faces) {
    parent[find(f[1])] = find(f[0]);
    parent[find(f[2])] = find(f[0]);
  }
  std::vector<int> comp_size(n, 0);
  for (const Face& f : faces) ++comp_size[find(f[0])];
  const int best_root =
      static_cast<int>(std::max_element(comp_size.begin(), comp_size.end()) - comp_size.begin());

  std::vector<int> remap(n, -1);
  std::vector<Face> out_faces;
  std::vector<Point2> out_pts;
  for (const Face& f : faces)
    if (find(f[0]) == best_root)
      for (int v : f) remap[v] = 0;
  for (int i = 0; i < n; ++i)
    if (remap[i] == 0) {
      remap[i] = static_cast<int>(out_pts.size());
      out_pts.push_back(pts[i]);
    }
  for (const Face& f : faces)
    if (find(f[0]) == best_root) out_faces.push_back({remap[f[0]], remap[f[1]], remap[f[2]]});
  auto topo = std::make_shared<MeshTopology>(MeshTopology::from_faces(
      static_cast<int>(out_pts.size()), std::move(out_faces)));
  return MeshState(std::move(topo), std::move(out_pts));
}

/// Largest distance from a figure pixel to its nearest vertex.
inline double coverage_gap(const SilhouetteMask& mask, std::span<const Point2> pts, double h0) {
  const SpatialHash hash(pts, h0);
  double worst = 0.0;
  for (int y = 0; y < mask.height(); ++y)
    for (int x = 0; x < mask.width(); ++x) {
      if (!mask.at(x, y)) continue;
      const Point2 c{double(x), double(y)};
      double best = std::numeric_limits<double>::infinity();
      for (double r = 2 * h0; !std::isfinite(best); r *= 2) {
        hash.for_each_candidate(c, r, [&](int i) { best = std::min(best, distance(pts[i], c)); });
        if (r > mask.width() + mask.height()) break;
      }
      worst = std::max(worst, best);
    }
  return worst;
}

struct RelaxOutcome {
  std::vector<Point2> points;
  int iterations = 0;
  bool converged = false;
};

/// Force-equilibrium relaxation of lattice points: repulsive bars, boundary
/// projection, periodic retriangulation.
inline RelaxOutcome relax(std::vector<Point2> p, const SilhouetteMask& mask,
                          const DistanceField& field, double h0, int max_iters, double tol) {
  constexpr double kRetriangulate = 0.1;
  constexpr double kForceScale = 1.2;
  constexpr double kStep = 0.2;

  RelaxOutcome out;
  std::vector<Point2> last(p.size(), {std::numeric_limits<double>::infinity(), 0.0});
  std::vector<Edge> edges;
  std::vector<Point2> force(p.size());
  for (int it = 1; it <= max_iters; ++it) {
    out.iterations = it;
    double drift = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i)
      drift = std::max(drift, std::isfinite(last[i].x) ? distance(p[i], last[i])
                                                       : std::numeric_limits<double>::infinity());
    if (drift > kRetriangulate * h0) {
      last = p;
      edges = face_edges(interior_faces(p, mask, h0));
    }

    double sum_sq = 0.0;
    for (const Edge& e : edges) sum_sq += squared_norm(p[e[0]] - p[e[1]]);
    const double rest =
        edges.empty() ? kForceScale * h0 : kForceScale * std::sqrt(sum_sq / edges.size());

    std::fill(force.begin(), force.end(), Point2{});
    for (const Edge& e : edges) {
      const Point2 d = p[e[0]] - p[e[1]];
      const double len = norm(d);
      if (len <= 0) continue;
      const double f = std::max(rest - len, 0.0);
      const Point2 fv = (f / len) * d;
      force[e[0]] += fv;
      force[e[1]] -= fv;
    }

    double max_move = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      const Point2 before = p[i];
      p[i] += kStep * force[i];
      for (int k = 0; k < 3; ++k) {
        const double d = field.sample(p[i]);
        if (d <= 0) break;
        Point2 g = field.gradient(p[i]);
        const double gn = norm(g);
        if (gn <= 0) break;
        p[i] -= (d / gn) * g;
      }
      if (field.sample(p[i]) < -1e-3 * h0) max_move = std::max(max_move, distance(before, p[i]));
    }
    if (max_move < tol) {
      out.converged = true;
      break;
    }
  }
  out.points = std::move(p);
  return out;
}

}  // namespace detail

/// Uniformly samples the figure with a near-equilateral triangle mesh:
/// hexagonal seeding, distmesh-style relaxation, Delaunay triangulation,
/// removal of triangles whose centroid falls outside the figure.
inline ReferenceMesh generate_reference_mesh(const SilhouetteMask& mask,
                                             const MeshGenParams& params) {
  params.validate();
  const int target = params.target_vertex_count;
  if (mask.area() < target)
    throw GenerationError("silhouette area " + std::to_string(mask.area()) +
                          " px is smaller than the requested vertex count");
  const DistanceField field = signed_distance(mask);

  auto attempt = [&](double h0, bool calibrate) {
    if (calibrate) h0 = detail::calibrate_spacing(mask, field, h0, target);
    std::vector<Point2> seed = detail::hex_lattice(mask, field, h0);
    if (seed.size() < 3) {
      // Too thin for the rejection band; keep every lattice point inside.
      seed.clear();
      const double row = h0 * std::sqrt(3.0) / 2.0;
      int j = 0;
      for (double y = 0; y < mask.height(); y += row, ++j)
        for (double x = (j % 2) ? h0 / 2 : 0.0; x < mask.width(); x += h0)
          if (is_inside(mask, {x, y})) seed.push_back({x, y});
    }
    if (seed.size() < 3) throw GenerationError("silhouette too small to seed a mesh");
    const double tol = params.move_tolerance > 0 ? params.move_tolerance : 0.01 * h0;
    auto relaxed = detail::relax(std::move(seed), mask, field, h0, params.max_relax_iters, tol);
    for (Point2& p : relaxed.points)
      if (!is_inside(mask, p)) p = nearest_figure_pixel(mask, field, p);
    auto faces = detail::interior_faces(relaxed.points, mask, h0);
    if (faces.empty()) throw GenerationError("triangulation left no interior triangles");
    ReferenceMesh out{detail::compact_mesh(relaxed.points, faces), h0, relaxed.iterations,
                      relaxed.converged, false, {}};
    return out;
  };

  const double h0 = params.h0 > 0 ? params.h0
                                  : std::sqrt(2.0 * mask.area() / (std::sqrt(3.0) * target));
  ReferenceMesh result = attempt(h0, params.h0 <= 0);
  // Clipping and compaction can undershoot on small or ragged masks.
  const int floor_count = std::max(4, static_cast<int>(std::ceil(0.85 * target)));
  for (int k = 0; k < 6 && result.mesh.vertex_count() < floor_count; ++k) {
    const double ratio = static_cast<double>(result.mesh.vertex_count()) / target;
    result = attempt(result.h0 * std::clamp(std::sqrt(ratio), 0.7, 0.95), false);
  }
  if (detail::coverage_gap(mask, result.mesh.positions(), result.h0) > 1.5 * result.h0) {
    ReferenceMesh finer = attempt(result.h0 / 2, false);
    finer.refined = true;
    finer.warnings.push_back("thin limb left unsampled; h0 halved to " +
                             std::to_string(finer.h0));
    result = std::move(finer);
  }
  if (!result.converged)
    result.warnings.push_back("mesh relaxation did not converge in " +
                              std::to_string(params.max_relax_iters) + " iterations");
  const int n = result.mesh.vertex_count();
  if (!result.refined && std::abs(n - target) > std::max(1.0, 0.15 * target))
    result.warnings.push_back("vertex count " + std::to_string(n) + " is off target " +
                              std::to_string(target));
  return result;
}

/// Plain-text OFF: header, counts, `x y 0` vertex lines, `3 i j k` faces.
inline void write_off(const MeshState& mesh, std::ostream& out) {
  out << "OFF\n" << mesh.vertex_count() << ' ' << mesh.topology().faces().size() << " 0\n";
  char buf[96];
  for (const Point2& p : mesh.positions()) {
    std::snprintf(buf, sizeof buf, "%.6f %.6f 0\n", p.x, p.y);
    out << buf;
  }
  for (const Face& f : mesh.topology().faces())
    out << "3 " << f[0] << ' ' << f[1] << ' ' << f[2] << '\n';
}

inline MeshState read_off(std::istream& in) {
  std::string magic;
  if (!(in >> magic) || magic != "OFF") throw FormatError("missing OFF header");
  long nv = 0, nf = 0, ne = 0;
  if (!(in >> nv >> nf >> ne) || nv <= 0 || nf < 0) throw FormatError("bad OFF counts");
  std::vector<Point2> pts(nv);
  for (auto& p : pts) {
    double z;
    if (!(in >> p.x >> p.y >> z)) throw FormatError("truncated OFF vertex list");
  }
  std::vector<Face> faces(nf);
  for (auto& f : faces) {
    int k;
    if (!(in >> k >> f[0] >> f[1] >> f[2]) || k != 3) throw FormatError("OFF face is not a triangle");
  }
  try {
    auto topo = std::make_shared<MeshTopology>(MeshTopology::from_faces(static_cast<int>(nv), faces));
    return MeshState(std::move(topo), std::move(pts));
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("invalid OFF mesh: ") + e.what());
  }
}

}  // namespace meshtrack
