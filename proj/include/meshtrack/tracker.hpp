#pragma once

#include <cmath>
#include <cstdio>
#include <istream>
#include <limits>
#include <memory>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "meshtrack/config.hpp"
#include "meshtrack/deformation.hpp"
#include "meshtrack/error.hpp"
#include "meshtrack/flow.hpp"
#include "meshtrack/mesh_gen.hpp"
#include "meshtrack/propagation.hpp"
#include "meshtrack/silhouette.hpp"

namespace meshtrack {

/// N x M grid of positions; row i is the trajectory of point i. Matrices
/// read from foreign files may hold NaN for untracked entries.
class TrajectoryMatrix {
 public:
  TrajectoryMatrix() = default;
  TrajectoryMatrix(int points, int frames)
      : n_(points),
        m_(frames),
        data_(static_cast<std::size_t>(points) * frames,
              Point2{std::numeric_limits<double>::quiet_NaN(),
                     std::numeric_limits<double>::quiet_NaN()}) {
    if (points < 0 || frames < 0) throw std::invalid_argument("negative matrix size");
  }

  int points() const { return n_; }
  int frames() const { return m_; }
  bool empty() const { return n_ == 0 || m_ == 0; }

  /// Frame index t is zero-based.
  Point2 at(int i, int t) const { return data_[index(i, t)]; }
  void set(int i, int t, Point2 p) { data_[index(i, t)] = p; }

  std::vector<Point2> column(int t) const {
    std::vector<Point2> out(n_);
    for (int i = 0; i < n_; ++i) out[i] = at(i, t);
    return out;
  }
  void set_column(int t, std::span<const Point2> pts) {
    if (static_cast<int>(pts.size()) != n_) throw std::invalid_argument("column size mismatch");
    for (int i = 0; i < n_; ++i) set(i, t, pts[i]);
  }

  /// Frames with a finite position, per row.
  std::vector<int> tracked_counts() const {
    std::vector<int> out(n_, 0);
    for (int i = 0; i < n_; ++i)
      for (int t = 0; t < m_; ++t) out[i] += is_finite(at(i, t));
    return out;
  }

  /// Keeps the first `frames` columns.
  void truncate(int frames) {
    TrajectoryMatrix out(n_, frames);
    for (int i = 0; i < n_; ++i)
      for (int t = 0; t < frames; ++t) out.set(i, t, at(i, t));
    *this = std::move(out);
  }

 private:
  std::size_t index(int i, int t) const {
    if (i < 0 || i >= n_ || t < 0 || t >= m_) throw std::out_of_range("trajectory index");
    return static_cast<std::size_t>(i) * m_ + t;
  }

  int n_ = 0;
  int m_ = 0;
  std::vector<Point2> data_;
};

/// Header `point_id,x_1,y_1,...,x_M,y_M`, one row per point, six decimals.
inline void write_trajectories(const TrajectoryMatrix& a, std::ostream& out) {
  if (a.empty()) throw std::invalid_argument("refusing to write an empty trajectory matrix");
  out << "point_id";
  for (int t = 1; t <= a.frames(); ++t) out << ",x_" << t << ",y_" << t;
  out << '\n';
  char buf[64];
  for (int i = 0; i < a.points(); ++i) {
    out << i;
    for (int t = 0; t < a.frames(); ++t) {
      const Point2 p = a.at(i, t);
      std::snprintf(buf, sizeof buf, ",%.6f,%.6f", p.x, p.y);
      out << buf;
    }
    out << '\n';
  }
  if (!out) throw Error("failed to write trajectories");
}

/// Inverse of write_trajectories. Empty cells read as NaN.
inline TrajectoryMatrix read_trajectories(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw FormatError("trajectory CSV is empty");
  if (line.rfind("point_id", 0) != 0) throw FormatError("trajectory CSV lacks point_id header");
  const long cols = std::count(line.begin(), line.end(), ',');
  if (cols < 2 || cols % 2 != 0) throw FormatError("trajectory CSV header has odd coordinate count");
  const int frames = static_cast<int>(cols / 2);

  std::vector<std::vector<Point2>> rows;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<double> vals;
    std::stringstream ss(line);
    std::string cell;
    std::getline(ss, cell, ',');  // point id
    while (std::getline(ss, cell, ',')) {
      if (cell.empty()) {
        vals.push_back(std::numeric_limits<double>::quiet_NaN());
        continue;
      }
      char* end = nullptr;
      const double v = std::strtod(cell.c_str(), &end);
      if (end != cell.c_str() + cell.size())
        throw FormatError("trajectory CSV row " + std::to_string(rows.size() + 1) +
                          " has a non-numeric cell '" + cell + "'");
      vals.push_back(v);
    }
    if (!line.empty() && line.back() == ',') vals.push_back(std::numeric_limits<double>::quiet_NaN());
    if (static_cast<int>(vals.size()) != 2 * frames)
      throw FormatError("trajectory CSV row " + std::to_string(rows.size() + 1) +
                        " has the wrong number of cells");
    std::vector<Point2> row(frames);
    for (int t = 0; t < frames; ++t) row[t] = {vals[2 * t], vals[2 * t + 1]};
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw FormatError("trajectory CSV has no rows");
  TrajectoryMatrix a(static_cast<int>(rows.size()), frames);
  for (int i = 0; i < a.points(); ++i)
    for (int t = 0; t < frames; ++t) a.set(i, t, rows[i][t]);
  return a;
}

struct FrameDiagnostics {
  int frame = 0;  // one-based
  int occluded = 0;
  /// Occluded vertices moved by polynomial extrapolation instead of flow.
  int predicted = 0;
  int iterations = 0;
  double final_energy = 0.0;
  bool converged = false;
  int type1 = 0;
  int type2 = 0;
  std::vector<DeformIteration> trace;
  std::vector<std::string> warnings;
};

struct TrackResult {
  ReferenceMesh reference;
  TrajectoryMatrix trajectories;
  std::vector<FrameDiagnostics> frames;  // frames 2..M
};

/// Carries the one-based frame that failed and everything tracked before it.
class TrackingError : public Error {
 public:
  TrackingError(const std::string& what, int frame, bool numerical,
                std::shared_ptr<TrackResult> partial)
      : Error(what), frame_(frame), numerical_(numerical), partial_(std::move(partial)) {}

  int frame() const { return frame_; }
  bool numerical() const { return numerical_; }
  const TrackResult* partial() const { return partial_.get(); }

 private:
  int frame_;
  bool numerical_;
  std::shared_ptr<TrackResult> partial_;
};

/// Where per-pair motion comes from: given flows, or the block matcher on
/// gray frames (or on the masks themselves when no frames exist).
struct FlowInput {
  std::span<const FlowField> flows;
  std::span<const GrayImage> frames;
  int levels = 3;
};

namespace detail {

inline FlowField flow_for_pair(const FlowInput& in, std::span<const SilhouetteMask> masks, int t) {
  if (!in.flows.empty()) return in.flows[t];
  if (!in.frames.empty()) return estimate_flow(in.frames[t], in.frames[t + 1], in.levels);
  return estimate_flow(masks[t].to_image(), masks[t + 1].to_image(), in.levels);
}

}  // namespace detail

/// Builds the reference mesh on the first mask and evolves it through the
/// sequence: occlusion test, motion initialization, iterative deformation.
inline TrackResult track_sequence(std::span<const SilhouetteMask> masks, const FlowInput& motion,
                                  const TrackerConfig& config) {
  config.validate();
  const int m = static_cast<int>(masks.size());
  if (m < 2) throw std::invalid_argument("tracking needs at least two masks");
  for (const auto& mk : masks)
    if (mk.width() != masks[0].width() || mk.height() != masks[0].height())
      throw std::invalid_argument("mask dimensions differ across the sequence");
  if (!motion.flows.empty()) {
    if (static_cast<int>(motion.flows.size()) != m - 1)
      throw std::invalid_argument("expected " + std::to_string(m - 1) + " flow fields, got " +
                                  std::to_string(motion.flows.size()));
    for (const auto& f : motion.flows)
      if (f.width() != masks[0].width() || f.height() != masks[0].height())
        throw std::invalid_argument("flow dimensions differ from the masks");
  }
  if (!motion.frames.empty() && static_cast<int>(motion.frames.size()) != m)
    throw std::invalid_argument("expected one gray frame per mask");

  std::shared_ptr<TrackResult> result;
  try {
    ReferenceMesh reference = generate_reference_mesh(masks[0], config.mesh);
    const int n = reference.mesh.vertex_count();
    result = std::make_shared<TrackResult>(TrackResult{std::move(reference), TrajectoryMatrix(n, m), {}});
  } catch (const Error& e) {
    throw TrackingError(std::string("frame 1: ") + e.what(), 1, false, nullptr);
  }
  const MeshState& ref = result->reference.mesh;
  const int n = ref.vertex_count();
  result->trajectories.set_column(0, ref.positions());

  TrajectoryHistory history(n, config.propagation.history_length);
  history.push(ref.positions());
  MeshState state = ref;
  for (int t = 1; t < m; ++t) {
    try {
      const OcclusionReport occ = detect_self_occlusion(state, config.propagation.occlusion_dilation);
      const FlowField flow = detail::flow_for_pair(motion, masks, t - 1);
      const MotionEstimate est = estimate_motion(state, flow, occ, history);
      const auto smooth = patch_average(state.topology(), est.displacement);
      std::vector<Point2> guess(state.positions());
      for (int i = 0; i < n; ++i) guess[i] += smooth[i];
      const MeshState init = state.with_positions(std::move(guess));

      DeformResult dr = deform(init, masks[t], signed_distance(masks[t]), ref, config.deform);
      state = std::move(dr.state);
      result->trajectories.set_column(t, state.positions());
      history.push(state.positions());

      FrameDiagnostics d;
      d.frame = t + 1;
      d.occluded = static_cast<int>(occ.occluded_vertices.size());
      d.predicted = static_cast<int>(
          std::count(est.source.begin(), est.source.end(), MotionSource::polynomial));
      d.iterations = static_cast<int>(dr.iterations.size());
      d.final_energy = dr.trace.raw.empty() ? 0.0 : dr.trace.raw.back();
      d.converged = dr.converged;
      d.type1 = dr.type1;
      d.type2 = dr.type2;
      d.trace = std::move(dr.iterations);
      d.warnings = std::move(dr.warnings);
      result->frames.push_back(std::move(d));
    } catch (const std::exception& e) {
      result->trajectories.truncate(t);
      const bool numerical = dynamic_cast<const NumericalError*>(&e) != nullptr;
      throw TrackingError("frame " + std::to_string(t + 1) + ": " + e.what(), t + 1, numerical,
                          result);
    }
  }
  return std::move(*result);
}

/// Per-iteration deformation records: `frame,iter,f_raw,f_norm,f_fit,type1_count,type2_count`.
inline void write_diagnostics(std::span<const FrameDiagnostics> frames, std::ostream& out) {
  out << "frame,iter,f_raw,f_norm,f_fit,type1_count,type2_count\n";
  char buf[160];
  for (const auto& f : frames)
    for (const auto& r : f.trace) {
      std::snprintf(buf, sizeof buf, "%d,%d,%.9g,%.9g,%.9g,%d,%d\n", f.frame, r.iter, r.f_raw,
                    r.f_norm, r.f_fit, r.type1, r.type2);
      out << buf;
    }
}

/// One summary row per tracked frame.
inline void write_frame_summary(std::span<const FrameDiagnostics> frames, std::ostream& out) {
  out << "frame,occluded_vertices,predicted_vertices,iterations,converged,final_energy,"
         "type1_count,type2_count,warnings\n";
  char buf[160];
  for (const auto& f : frames) {
    std::snprintf(buf, sizeof buf, "%d,%d,%d,%d,%d,%.9g,%d,%d,%zu\n", f.frame, f.occluded,
                  f.predicted, f.iterations, f.converged ? 1 : 0, f.final_energy, f.type1,
                  f.type2, f.warnings.size());
    out << buf;
  }
}

}  // namespace meshtrack
