#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "meshtrack/density.hpp"
#include "meshtrack/error.hpp"
#include "meshtrack/geometry.hpp"
#include "meshtrack/silhouette.hpp"

namespace meshtrack {

struct DeformParams {
  /// Weight on the current position in the drift regularization.
  double lambda = 2.0 / 3.0;
  /// Threshold on successive fitted-energy values.
  double theta = 0.003;
  int max_iters = 50;
  int min_iters = 3;
  /// Vertex density radius; zero means the longest edge of the reference mesh.
  double density_radius = 0.0;
  /// Figure pixels with fewer vertices than this within the radius are blank.
  int density_threshold = 1;
  /// Signed distance beyond which a vertex counts as outside the figure.
  double outside_tolerance = 0.5;
  /// Reach of a vertex over blank pixels, as a multiple of density_radius.
  double blank_reach = 2.0;
  /// Energy spread (px^2) below which the iteration is at a fixed point.
  double energy_floor = 1e-12;
  /// Experimental: allow a uniform scale in the per-patch fit.
  bool similarity = false;

  void validate() const {
    if (!(lambda > 0 && lambda < 1)) throw ConfigError("lambda must lie in (0, 1)");
    if (!(theta > 0)) throw ConfigError("theta must be positive");
    if (min_iters < 3) throw ConfigError("min_iters must be >= 3");
    if (max_iters < min_iters) throw ConfigError("max_iters must be >= min_iters");
    if (density_radius < 0) throw ConfigError("density_radius must be >= 0");
    if (density_threshold < 1) throw ConfigError("density_threshold must be >= 1");
    if (outside_tolerance < 0) throw ConfigError("outside_tolerance must be >= 0");
    if (!(blank_reach >= 1)) throw ConfigError("blank_reach must be >= 1");
    if (energy_floor < 0) throw ConfigError("energy_floor must be >= 0");
  }
};

/// Vertex short of the figure boundary, with the blank pixels Q_i it reaches.
struct BlankDrift {
  int vertex = 0;
  std::vector<Point2> blank;
};

/// Vertex outside the figure, with its in-figure patch neighbours N_i.
struct OutsideDrift {
  int vertex = 0;
  std::vector<int> support;
};

struct DriftLabels {
  std::vector<Point2> blank_pixels;  // Q
  std::vector<BlankDrift> type1;
  std::vector<OutsideDrift> type2;

  bool empty() const { return type1.empty() && type2.empty(); }
};

/// Classifies drifted vertices. Outside vertices take precedence over blank
/// ones.
inline DriftLabels label_drift(std::span<const Point2> positions, const MeshTopology& topo,
                               const SilhouetteMask& mask, const DistanceField& field,
                               double radius, const DeformParams& params) {
  DriftLabels labels;
  const DensityMap density = vertex_density_map(positions, mask, radius);
  for (int y = 0; y < mask.height(); ++y)
    for (int x = 0; x < mask.width(); ++x) {
      const int c = density.at(x, y);
      if (c != DensityMap::kNotApplicable && c < params.density_threshold)
        labels.blank_pixels.push_back({double(x), double(y)});
    }

  const int n = topo.vertex_count();
  std::vector<std::uint8_t> outside(n, 0);
  for (int i = 0; i < n; ++i) outside[i] = field.sample(positions[i]) > params.outside_tolerance;

  for (int i = 0; i < n; ++i) {
    if (!outside[i]) continue;
    OutsideDrift d{i, {}};
    for (int j : topo.patch(i))
      if (!outside[j]) d.support.push_back(j);
    labels.type2.push_back(std::move(d));
  }

  if (!labels.blank_pixels.empty()) {
    const double reach = params.blank_reach * radius;
    const double reach2 = reach * reach;
    const SpatialHash hash(labels.blank_pixels, reach);
    for (int i = 0; i < n; ++i) {
      if (outside[i]) continue;
      BlankDrift d{i, {}};
      hash.for_each_candidate(positions[i], reach, [&](int q) {
        if (squared_norm(labels.blank_pixels[q] - positions[i]) <= reach2)
          d.blank.push_back(labels.blank_pixels[q]);
      });
      if (!d.blank.empty()) labels.type1.push_back(std::move(d));
    }
  }
  return labels;
}

/// Convenience form: builds the distance field and takes the density radius
/// from the reference mesh unless params set it.
inline DriftLabels label_drift(const MeshState& mesh, const SilhouetteMask& mask,
                               const MeshState& ref_mesh, const DeformParams& params) {
  const double radius = params.density_radius > 0 ? params.density_radius : longest_edge(ref_mesh);
  return label_drift(mesh.positions(), mesh.topology(), mask, signed_distance(mask), radius,
                     params);
}

struct RegularizeResult {
  std::vector<Point2> positions;
  /// Number of outside-vertex batches processed.
  int batches = 0;
  /// Outside vertices with no reachable support, projected onto the figure.
  std::vector<int> projected;
};

/// Pulls blank-drift vertices toward their blank pixels and outside vertices
/// toward in-figure neighbours. Outside vertices are processed in batches:
/// each batch reads the positions written by the previous one, and vertices
/// with no support ever are projected to the nearest figure pixel.
inline RegularizeResult regularize(std::span<const Point2> positions, const MeshTopology& topo,
                                   const DriftLabels& labels, double lambda,
                                   const SilhouetteMask& mask, const DistanceField& field) {
  RegularizeResult out{{positions.begin(), positions.end()}, 0, {}};

  for (const BlankDrift& d : labels.type1) {
    const Point2 target = centroid(d.blank);
    out.positions[d.vertex] = lambda * positions[d.vertex] + (1 - lambda) * target;
  }

  if (labels.type2.empty()) return out;
  const int n = topo.vertex_count();
  std::vector<std::uint8_t> pending(n, 0);
  std::vector<int> remaining;
  for (const OutsideDrift& d : labels.type2) {
    pending[d.vertex] = 1;
    remaining.push_back(d.vertex);
  }
  // Support reads unlabeled and blank-drift vertices at their incoming
  // positions, and earlier batches at their regularized positions.
  std::vector<Point2> support_pos(positions.begin(), positions.end());
  std::vector<std::pair<int, Point2>> batch;
  while (!remaining.empty()) {
    batch.clear();
    for (int i : remaining) {
      Point2 sum;
      int count = 0;
      for (int j : topo.patch(i))
        if (!pending[j]) {
          sum += support_pos[j];
          ++count;
        }
      if (count > 0) batch.emplace_back(i, lambda * support_pos[i] + (1 - lambda) * (sum / count));
    }
    if (batch.empty()) break;
    ++out.batches;
    for (auto [i, p] : batch) {
      support_pos[i] = p;
      out.positions[i] = p;
      pending[i] = 0;
    }
    std::erase_if(remaining, [&](int i) { return !pending[i]; });
  }
  for (int i : remaining) {
    out.positions[i] = nearest_figure_pixel(mask, field, positions[i]);
    out.projected.push_back(i);
  }
  return out;
}

struct Mat2 {
  double m00 = 1, m01 = 0, m10 = 0, m11 = 1;

  Point2 operator*(Point2 p) const { return {m00 * p.x + m01 * p.y, m10 * p.x + m11 * p.y}; }
  double det() const { return m00 * m11 - m01 * m10; }
  static Mat2 rotation(double angle) {
    const double c = std::cos(angle), s = std::sin(angle);
    return {c, -s, s, c};
  }
};

/// x -> scale * R x + T. Scale stays 1 except in similarity mode.
struct RigidTransform2 {
  Mat2 rotation;
  Point2 translation;
  double scale = 1.0;

  Point2 apply(Point2 p) const { return scale * (rotation * p) + translation; }
  double angle() const { return std::atan2(rotation.m10, rotation.m00); }
};

struct PatchFit {
  RigidTransform2 transform;
  bool degenerate = false;
};

/// Least-squares rotation + translation taking ref onto cur (orthogonal
/// Procrustes). The rotation is the det=+1 polar factor of the 2x2
/// cross-covariance.
inline PatchFit fit_patch_rigid(std::span<const Point2> ref, std::span<const Point2> cur,
                                bool similarity = false) {
  if (ref.size() != cur.size() || ref.size() < 2)
    throw std::invalid_argument("patch fit needs two or more corresponding points");
  const Point2 ca = centroid(ref), cb = centroid(cur);
  Mat2 cov{0, 0, 0, 0};
  double ref_spread = 0.0;
  for (std::size_t k = 0; k < ref.size(); ++k) {
    const Point2 a = ref[k] - ca, b = cur[k] - cb;
    cov.m00 += b.x * a.x;
    cov.m01 += b.x * a.y;
    cov.m10 += b.y * a.x;
    cov.m11 += b.y * a.y;
    ref_spread += squared_norm(a);
  }
  PatchFit fit;
  const double c = cov.m00 + cov.m11;
  const double s = cov.m10 - cov.m01;
  const double r = std::hypot(c, s);
  if (ref_spread <= 1e-18 || r <= 1e-300) {
    fit.degenerate = true;
    fit.transform.translation = cb - ca;
    return fit;
  }
  fit.transform.rotation = {c / r, -s / r, s / r, c / r};
  if (similarity) fit.transform.scale = r / ref_spread;
  fit.transform.translation = cb - fit.transform.scale * (fit.transform.rotation * ca);
  return fit;
}

/// Each vertex becomes the mean, over its patch, of the neighbours'
/// transforms applied to its own reference position.
inline std::vector<Point2> rigid_blend(const MeshState& ref_mesh,
                                       std::span<const RigidTransform2> transforms) {
  const MeshTopology& topo = ref_mesh.topology();
  if (static_cast<int>(transforms.size()) != topo.vertex_count())
    throw std::invalid_argument("need one transform per vertex");
  std::vector<Point2> out(transforms.size());
  for (int i = 0; i < topo.vertex_count(); ++i) {
    const Point2 p = ref_mesh.position(i);
    Point2 s;
    const auto patch = topo.patch(i);
    for (int j : patch) s += transforms[j].apply(p);
    out[i] = s / static_cast<double>(patch.size());
  }
  return out;
}

/// y = a * x^b.
struct PowerFit {
  double a = 0.0;
  double b = 0.0;

  double operator()(double x) const { return a * std::pow(x, b); }
};

/// Least squares on (log k, log max(y_k, floor)) for k = 1..n.
inline PowerFit fit_power_law(std::span<const double> y, double floor = 1e-12) {
  if (y.empty()) throw std::invalid_argument("power fit needs data");
  if (y.size() == 1) return {std::max(y[0], floor), 0.0};
  const double n = static_cast<double>(y.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t k = 0; k < y.size(); ++k) {
    const double lx = std::log(static_cast<double>(k + 1));
    const double ly = std::log(std::max(y[k], floor));
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  const double b = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  return {std::exp((sy - b * sx) / n), b};
}

/// Linear min-max normalization to [0, 1]; a flat sequence maps to zeros.
inline std::vector<double> normalize_min_max(std::span<const double> y) {
  std::vector<double> out(y.size(), 0.0);
  if (y.empty()) return out;
  const auto [lo, hi] = std::minmax_element(y.begin(), y.end());
  const double range = *hi - *lo;
  if (range > 0)
    for (std::size_t k = 0; k < y.size(); ++k) out[k] = (y[k] - *lo) / range;
  return out;
}

struct EnergyTrace {
  std::vector<double> raw;
  std::vector<double> normalized;
  PowerFit fit;
};

struct DeformIteration {
  int iter = 0;
  double f_raw = 0.0;
  double f_norm = 0.0;
  double f_fit = std::numeric_limits<double>::quiet_NaN();
  int type1 = 0;
  int type2 = 0;
};

struct DeformResult {
  MeshState state;
  EnergyTrace trace;
  std::vector<DeformIteration> iterations;
  bool converged = false;
  int type1 = 0;  // label counts of the last iteration
  int type2 = 0;
  std::vector<std::string> warnings;
};

/// Stopping test on a trace of k >= 2 energies: normalize, fit the power
/// law, compare fitted values at k and k-1. Returns whether it fired and the
/// fit used.
inline bool energy_converged(std::span<const double> raw, const DeformParams& params,
                             PowerFit* fit_out = nullptr, std::vector<double>* norm_out = nullptr) {
  const auto [lo, hi] = std::minmax_element(raw.begin(), raw.end());
  auto norm = normalize_min_max(raw);
  const PowerFit fit = fit_power_law(norm);
  if (fit_out) *fit_out = fit;
  if (norm_out) *norm_out = std::move(norm);
  if (*hi - *lo <= params.energy_floor) return true;
  const double k = static_cast<double>(raw.size());
  return std::abs(fit(k) - fit(k - 1)) < params.theta;
}

/// Alternates drift regularization and local rigid deformation against the
/// reference mesh until the fitted energy flattens or max_iters is reached.
inline DeformResult deform(const MeshState& initial, const SilhouetteMask& mask,
                           const DistanceField& field, const MeshState& ref_mesh,
                           const DeformParams& params) {
  params.validate();
  const MeshTopology& topo = initial.topology();
  if (ref_mesh.vertex_count() != topo.vertex_count())
    throw std::invalid_argument("reference mesh does not match the tracked topology");
  const double radius = params.density_radius > 0 ? params.density_radius : longest_edge(ref_mesh);
  const int n = topo.vertex_count();

  std::vector<Point2> cur = initial.positions();
  DeformResult result{initial, {}, {}, false, 0, 0, {}};
  std::vector<RigidTransform2> transforms(n);
  std::vector<Point2> ref_patch, cur_patch;
  int degenerate = 0, projected = 0;

  for (int k = 1; k <= params.max_iters; ++k) {
    const DriftLabels labels = label_drift(cur, topo, mask, field, radius, params);
    const RegularizeResult reg = regularize(cur, topo, labels, params.lambda, mask, field);
    projected += static_cast<int>(reg.projected.size());

    for (int i = 0; i < n; ++i) {
      ref_patch.clear();
      cur_patch.clear();
      for (int j : topo.patch(i)) {
        ref_patch.push_back(ref_mesh.position(j));
        cur_patch.push_back(reg.positions[j]);
      }
      const PatchFit fit = fit_patch_rigid(ref_patch, cur_patch, params.similarity);
      degenerate += fit.degenerate;
      transforms[i] = fit.transform;
    }
    std::vector<Point2> next = rigid_blend(ref_mesh, transforms);

    double energy = 0.0;
    for (int i = 0; i < n; ++i) {
      if (!is_finite(next[i]))
        throw NumericalError("non-finite vertex position at deformation iteration " +
                                 std::to_string(k),
                             k);
      energy += squared_norm(next[i] - cur[i]);
    }
    cur = std::move(next);
    result.trace.raw.push_back(energy);
    result.type1 = static_cast<int>(labels.type1.size());
    result.type2 = static_cast<int>(labels.type2.size());

    DeformIteration rec{k, energy, 0.0, std::numeric_limits<double>::quiet_NaN(), result.type1,
                        result.type2};
    bool stop = false;
    if (k >= 2) {
      PowerFit fit;
      std::vector<double> norm;
      const bool fired = energy_converged(result.trace.raw, params, &fit, &norm);
      rec.f_norm = norm.back();
      rec.f_fit = fit(k);
      result.trace.fit = fit;
      result.trace.normalized = std::move(norm);
      stop = k >= params.min_iters && fired;
    } else {
      result.trace.normalized = {0.0};
      result.trace.fit = fit_power_law(result.trace.raw);
    }
    result.iterations.push_back(rec);
    if (stop) {
      result.converged = true;
      break;
    }
  }

  if (!result.converged)
    result.warnings.push_back("deformation hit max_iters=" + std::to_string(params.max_iters));
  if (projected > 0)
    result.warnings.push_back(std::to_string(projected) +
                              " unsupported outside vertices projected onto the silhouette");
  if (degenerate > 0)
    result.warnings.push_back(std::to_string(degenerate) + " degenerate patch fits");
  result.state = initial.with_positions(std::move(cur));
  return result;
}

inline DeformResult deform(const MeshState& initial, const SilhouetteMask& mask,
                           const MeshState& ref_mesh, const DeformParams& params) {
  return deform(initial, mask, signed_distance(mask), ref_mesh, params);
}

}  // namespace meshtrack
