#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "meshtrack/error.hpp"
#include "meshtrack/flow.hpp"
#include "meshtrack/geometry.hpp"
#include "meshtrack/image_io.hpp"
#include "meshtrack/silhouette.hpp"
#include "meshtrack/tracker.hpp"

namespace meshtrack {

/// A capsule-shaped body part. Its local axis runs from the joint (u = 0)
/// to the tip (u = length); an angle of zero points down the image.
struct LimbSpec {
  std::string name;
  int parent = -1;
  /// Joint position along the parent's axis, as a fraction of its length.
  double attach = 1.0;
  /// Lateral joint offset from the parent's axis, px.
  double offset = 0.0;
  double length = 30.0;
  double width = 12.0;
  /// Angle relative to the parent (absolute for a root), rad.
  double angle = 0.0;
  /// rad/frame.
  double rate = 0.0;
  /// Sinusoidal swing on top of the linear schedule.
  double amplitude = 0.0;
  double period = 0.0;
};

/// A ground-truth marker on a limb axis.
struct SampleSpec {
  std::string name;
  int limb = 0;
  /// Fraction of the limb length from its joint.
  double along = 0.5;
};

struct SynthScenario {
  std::string kind = "translation";
  int width = 96;
  int height = 160;
  int frames = 40;
  Point2 origin{48, 16};
  /// Root translation, px/frame.
  Point2 speed;
  /// Uniform scale grows by this much per frame about the origin.
  double scale_rate = 0.0;
  std::vector<LimbSpec> limbs;
  std::vector<SampleSpec> samples;

  void validate() const {
    if (width < 8 || height < 8) throw ScenarioError("scenario image is too small");
    if (frames < 2) throw ScenarioError("scenario needs at least two frames");
    if (limbs.empty()) throw ScenarioError("scenario has no limbs");
    for (std::size_t l = 0; l < limbs.size(); ++l) {
      const LimbSpec& s = limbs[l];
      if (s.parent >= static_cast<int>(l)) throw ScenarioError("limb parent must come earlier");
      if (l > 0 && s.parent < 0) throw ScenarioError("only the first limb may be a root");
      if (!(s.length > 0 && s.width > 0)) throw ScenarioError("limb sizes must be positive");
      if (s.amplitude != 0 && !(s.period > 0)) throw ScenarioError("swing needs a positive period");
    }
    for (const SampleSpec& s : samples)
      if (s.limb < 0 || s.limb >= static_cast<int>(limbs.size()))
        throw ScenarioError("sample refers to a missing limb");
    if (1 + scale_rate * (frames - 1) <= 0.1) throw ScenarioError("figure shrinks away");
  }

  /// Built-in figure for each kind.
  static SynthScenario preset(const std::string& kind) {
    SynthScenario s;
    s.kind = kind;
    if (kind == "translation") {
      s.width = 176;
      s.height = 144;
      s.origin = {30, 12};
      s.speed = {2, 1};
      s.limbs = {{"torso", -1, 0, 0, 34, 22, 0.0},
                 {"arm", 0, 0.15, 8, 24, 9, -0.9},
                 {"leg_a", 0, 1.0, -5, 30, 11, -0.2},
                 {"leg_b", 0, 1.0, 5, 30, 11, 0.2}};
    } else if (kind == "two_link_swing") {
      s.origin = {44, 16};
      s.limbs = {{"upper", -1, 0, 0, 55, 18, -0.35, 0.012},
                 {"fore", 0, 1.0, 0, 42, 14, 0.05, 0.02}};
    } else if (kind == "leg_cross") {
      s.frames = 60;
      s.origin = {48, 18};
      s.limbs = {{"torso", -1, 0, 0, 46, 30, 0.0},
                 {"leg_l", 0, 1.0, -7, 72, 14, -0.3, 0.012},
                 {"leg_r", 0, 1.0, 7, 72, 14, 0.3, -0.012}};
    } else if (kind == "scale_change") {
      s.origin = {48, 20};
      s.scale_rate = 0.006;
      s.limbs = {{"torso", -1, 0, 0, 38, 24, 0.0},
                 {"arm_l", 0, 0.15, -11, 28, 9, -0.6},
                 {"arm_r", 0, 0.15, 11, 28, 9, 0.6},
                 {"leg_l", 0, 1.0, -6, 46, 12, -0.15},
                 {"leg_r", 0, 1.0, 6, 46, 12, 0.15}};
    } else {
      throw ScenarioError("unknown scenario kind '" + kind + "'");
    }
    s.samples = default_samples(s.limbs);
    return s;
  }

  /// Limb midpoints plus every non-root joint.
  static std::vector<SampleSpec> default_samples(const std::vector<LimbSpec>& limbs) {
    std::vector<SampleSpec> out;
    for (std::size_t l = 0; l < limbs.size(); ++l) {
      out.push_back({limbs[l].name + "_mid", static_cast<int>(l), 0.5});
      if (limbs[l].parent >= 0) out.push_back({limbs[l].name + "_joint", static_cast<int>(l), 0.0});
    }
    return out;
  }

  nlohmann::json to_json() const {
    using nlohmann::json;
    json j{{"kind", kind},          {"width", width},
           {"height", height},      {"frames", frames},
           {"origin", {origin.x, origin.y}},
           {"speed", {speed.x, speed.y}},
           {"scale_rate", scale_rate}};
    j["limbs"] = json::array();
    for (const LimbSpec& l : limbs)
      j["limbs"].push_back({{"name", l.name},
                            {"parent", l.parent},
                            {"attach", l.attach},
                            {"offset", l.offset},
                            {"length", l.length},
                            {"width", l.width},
                            {"angle", l.angle},
                            {"rate", l.rate},
                            {"amplitude", l.amplitude},
                            {"period", l.period}});
    j["samples"] = json::array();
    for (const SampleSpec& s : samples)
      j["samples"].push_back({{"name", s.name}, {"limb", s.limb}, {"along", s.along}});
    return j;
  }

  /// The kind selects a preset; any other key present overrides it.
  static SynthScenario from_json(const nlohmann::json& j) {
    static const char* kTop[] = {"kind",  "width",      "height", "frames", "origin",
                                 "speed", "scale_rate", "limbs",  "samples"};
    static const char* kLimb[] = {"name",  "parent", "attach", "offset",    "length",
                                  "width", "angle",  "rate",   "amplitude", "period"};
    static const char* kSample[] = {"name", "limb", "along"};
    auto check_keys = [](const nlohmann::json& obj, std::span<const char* const> known,
                         const std::string& where) {
      if (!obj.is_object()) throw ScenarioError(where + " must be an object");
      for (auto it = obj.begin(); it != obj.end(); ++it)
        if (std::none_of(known.begin(), known.end(), [&](const char* k) { return it.key() == k; }))
          throw ScenarioError("unknown key '" + it.key() + "' in " + where);
    };
    try {
      check_keys(j, kTop, "scenario");
      if (!j.contains("kind")) throw ScenarioError("scenario needs a kind");
      SynthScenario s = preset(j.at("kind").get<std::string>());
      if (j.contains("width")) s.width = j["width"].get<int>();
      if (j.contains("height")) s.height = j["height"].get<int>();
      if (j.contains("frames")) s.frames = j["frames"].get<int>();
      if (j.contains("origin")) s.origin = {j["origin"].at(0).get<double>(), j["origin"].at(1).get<double>()};
      if (j.contains("speed")) s.speed = {j["speed"].at(0).get<double>(), j["speed"].at(1).get<double>()};
      if (j.contains("scale_rate")) s.scale_rate = j["scale_rate"].get<double>();
      if (j.contains("limbs")) {
        s.limbs.clear();
        for (const auto& lj : j["limbs"]) {
          check_keys(lj, kLimb, "limb");
          LimbSpec l;
          l.name = lj.value("name", "limb" + std::to_string(s.limbs.size()));
          l.parent = lj.value("parent", s.limbs.empty() ? -1 : 0);
          l.attach = lj.value("attach", l.attach);
          l.offset = lj.value("offset", l.offset);
          l.length = lj.value("length", l.length);
          l.width = lj.value("width", l.width);
          l.angle = lj.value("angle", l.angle);
          l.rate = lj.value("rate", l.rate);
          l.amplitude = lj.value("amplitude", l.amplitude);
          l.period = lj.value("period", l.period);
          s.limbs.push_back(l);
        }
        if (!j.contains("samples")) s.samples = default_samples(s.limbs);
      }
      if (j.contains("samples")) {
        s.samples.clear();
        for (const auto& sj : j["samples"]) {
          check_keys(sj, kSample, "sample");
          s.samples.push_back({sj.value("name", "s" + std::to_string(s.samples.size())),
                               sj.at("limb").get<int>(), sj.value("along", 0.5)});
        }
      }
      s.validate();
      return s;
    } catch (const nlohmann::json::exception& e) {
      throw ScenarioError(std::string("bad scenario field: ") + e.what());
    }
  }
};

/// World placement of one limb in one frame.
struct LimbPose {
  Point2 base;
  Point2 dir;   // unit axis
  Point2 perp;  // unit lateral, dir rotated by -90 degrees
  double scale = 1.0;
  double length = 0.0;  // world units
  double radius = 0.0;  // world units

  Point2 tip() const { return base + length * dir; }
  /// Local (u along axis, v lateral), both in unscaled limb units.
  Point2 to_world(double u, double v) const { return base + scale * (u * dir + v * perp); }
  Point2 to_local(Point2 p) const {
    const Point2 d = p - base;
    return {dot(d, dir) / scale, dot(d, perp) / scale};
  }
  double distance_to_axis(Point2 p) const {
    const double t = std::clamp(dot(p - base, dir), 0.0, length);
    return distance(p, base + t * dir);
  }
};

/// Forward kinematics at a one-based frame index.
inline std::vector<LimbPose> pose_at(const SynthScenario& s, int frame) {
  const double k = frame - 1;
  const double scale = 1.0 + s.scale_rate * k;
  std::vector<LimbPose> out(s.limbs.size());
  std::vector<double> abs_angle(s.limbs.size());
  for (std::size_t l = 0; l < s.limbs.size(); ++l) {
    const LimbSpec& spec = s.limbs[l];
    double a = spec.angle + spec.rate * k;
    if (spec.amplitude != 0) a += spec.amplitude * std::sin(2 * std::numbers::pi * k / spec.period);
    LimbPose& p = out[l];
    if (spec.parent < 0) {
      abs_angle[l] = a;
      p.base = s.origin + k * s.speed;
    } else {
      const LimbPose& par = out[spec.parent];
      abs_angle[l] = abs_angle[spec.parent] + a;
      p.base = par.to_world(spec.attach * s.limbs[spec.parent].length, spec.offset);
    }
    p.dir = {std::sin(abs_angle[l]), std::cos(abs_angle[l])};
    p.perp = {p.dir.y, -p.dir.x};
    p.scale = scale;
    p.length = scale * spec.length;
    p.radius = scale * spec.width / 2;
  }
  return out;
}

struct OcclusionFrame {
  int frame = 0;  // one-based
  Box overlap;    // union of overlapping limb-interior pixels
};

struct GroundTruth {
  SynthScenario scenario;
  std::vector<SilhouetteMask> masks;
  std::vector<FlowField> flows;
  std::vector<GrayImage> frames;
  /// K x M marker positions.
  TrajectoryMatrix samples;
  std::vector<OcclusionFrame> occlusion;
  /// Frame-1 owner limb per pixel, limb index + 1, zero for background.
  GrayImage labels;
};

namespace detail {

inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

inline std::uint64_t hash_cell(std::uint64_t seed, std::int64_t a, std::int64_t b, std::int64_t c) {
  std::uint64_t h = mix64(seed);
  h = mix64(h ^ static_cast<std::uint64_t>(a));
  h = mix64(h ^ static_cast<std::uint64_t>(b));
  return mix64(h ^ static_cast<std::uint64_t>(c));
}

/// Procedural texture that moves with the limb: per-limb level plus value
/// noise on a 3-px lattice, bilinear so it deforms smoothly under sub-pixel
/// motion and has no period for a block matcher to alias onto.
inline std::uint8_t limb_texture(std::uint64_t seed, int limb, Point2 local) {
  constexpr double kCell = 3.0;
  const double gu = local.x / kCell, gv = local.y / kCell;
  const double fu = std::floor(gu), fv = std::floor(gv);
  const double au = gu - fu, av = gv - fv;
  auto node = [&](double i, double j) {
    return static_cast<double>(hash_cell(seed, limb, static_cast<std::int64_t>(i), static_cast<std::int64_t>(j)) % 81) - 40.0;
  };
  const double n = (1 - au) * (1 - av) * node(fu, fv) + au * (1 - av) * node(fu + 1, fv) +
                   (1 - au) * av * node(fu, fv + 1) + au * av * node(fu + 1, fv + 1);
  const double v = 120 + 22 * (limb % 5) + n;
  return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

struct Raster {
  std::vector<std::uint8_t> bits;
  std::vector<int> owner;       // frontmost limb containing the pixel, -1 outside
  std::vector<int> flow_owner;  // owner, or nearest capsule for background pixels
};

inline Raster rasterize(const SynthScenario& s, std::span<const LimbPose> pose) {
  const std::size_t n = static_cast<std::size_t>(s.width) * s.height;
  Raster r{std::vector<std::uint8_t>(n, 0), std::vector<int>(n, -1), std::vector<int>(n, 0)};
  for (int y = 0; y < s.height; ++y)
    for (int x = 0; x < s.width; ++x) {
      const Point2 p{double(x), double(y)};
      const std::size_t i = static_cast<std::size_t>(y) * s.width + x;
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t l = 0; l < pose.size(); ++l) {
        const double d = pose[l].distance_to_axis(p) - pose[l].radius;
        if (d < 0) {
          r.owner[i] = static_cast<int>(l);
          r.bits[i] = 1;
        }
        if (d < best) {
          best = d;
          r.flow_owner[i] = static_cast<int>(l);
        }
      }
      if (r.owner[i] >= 0) r.flow_owner[i] = r.owner[i];
    }
  return r;
}

inline bool adjacent_limbs(const SynthScenario& s, int a, int b) {
  return s.limbs[a].parent == b || s.limbs[b].parent == a;
}

}  // namespace detail

/// Renders masks, exact flows, textured frames and marker tracks for every
/// frame of the scenario. Deterministic for a given seed.
inline GroundTruth generate_scenario(const SynthScenario& s, std::uint64_t seed = 1) {
  s.validate();
  GroundTruth gt;
  gt.scenario = s;
  const int m = s.frames;
  const int w = s.width, h = s.height;
  gt.samples = TrajectoryMatrix(static_cast<int>(s.samples.size()), m);

  std::vector<LimbPose> pose = pose_at(s, 1);
  for (int t = 1; t <= m; ++t) {
    for (const LimbPose& p : pose) {
      Box b;
      b.expand(p.base);
      b.expand(p.tip());
      if (b.xmin - p.radius < 0.5 || b.ymin - p.radius < 0.5 || b.xmax + p.radius > w - 1.5 ||
          b.ymax + p.radius > h - 1.5)
        throw ScenarioError("figure leaves the image at frame " + std::to_string(t));
    }
    const detail::Raster r = detail::rasterize(s, pose);
    gt.masks.emplace_back(w, h, r.bits);

    GrayImage img(w, h);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const std::size_t i = static_cast<std::size_t>(y) * w + x;
        const int l = r.owner[i];
        img.pixels[i] = l >= 0 ? detail::limb_texture(seed, l, pose[l].to_local({double(x), double(y)}))
                               : static_cast<std::uint8_t>(20 + detail::hash_cell(seed, -1, x, y) % 40);
      }
    gt.frames.push_back(std::move(img));

    for (int k = 0; k < gt.samples.points(); ++k) {
      const SampleSpec& sp = s.samples[k];
      gt.samples.set(k, t - 1, pose[sp.limb].to_world(sp.along * s.limbs[sp.limb].length, 0.0));
    }

    if (t == 1) {
      gt.labels = GrayImage(w, h);
      for (std::size_t i = 0; i < r.owner.size(); ++i)
        gt.labels.pixels[i] = static_cast<std::uint8_t>(r.owner[i] + 1);
    }

    // Overlap of non-adjacent limb interiors, each eroded by one pixel.
    Box overlap;
    std::vector<int> inside;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const Point2 p{double(x), double(y)};
        inside.clear();
        for (int l = 0; l < static_cast<int>(pose.size()); ++l)
          if (pose[l].distance_to_axis(p) < pose[l].radius - 1.0) inside.push_back(l);
        bool found = false;
        for (std::size_t a = 0; a < inside.size() && !found; ++a)
          for (std::size_t b = a + 1; b < inside.size() && !found; ++b)
            found = !detail::adjacent_limbs(s, inside[a], inside[b]);
        if (found) overlap.expand(p);
      }
    if (!overlap.empty()) gt.occlusion.push_back({t, overlap});

    if (t == m) break;
    const std::vector<LimbPose> next = pose_at(s, t + 1);
    FlowField flow(w, h);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const Point2 p{double(x), double(y)};
        const int l = r.flow_owner[static_cast<std::size_t>(y) * w + x];
        const Point2 q = pose[l].to_local(p);
        flow.set(x, y, next[l].to_world(q.x, q.y) - p);
      }
    gt.flows.push_back(std::move(flow));
    pose = next;
  }
  return gt;
}

inline std::string frame_name(const char* stem, int index, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_%05d.%s", stem, index, ext);
  return buf;
}

/// Writes mask_/frame_/flow_ files, truth.csv, occlusion.csv,
/// labels_00001.pgm and the effective scenario.json.
inline void write_ground_truth(const GroundTruth& gt, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (std::size_t t = 0; t < gt.masks.size(); ++t) {
    const int idx = static_cast<int>(t) + 1;
    write_file(dir / frame_name("mask", idx, "pgm"), encode_mask_pgm(gt.masks[t]));
    write_file(dir / frame_name("frame", idx, "pgm"), encode_pgm(gt.frames[t]));
  }
  for (std::size_t t = 0; t < gt.flows.size(); ++t)
    write_file(dir / frame_name("flow", static_cast<int>(t) + 1, "flo"), write_flo(gt.flows[t]));
  write_file(dir / "labels_00001.pgm", encode_pgm(gt.labels));
  {
    std::ofstream out(dir / "truth.csv", std::ios::binary);
    write_trajectories(gt.samples, out);
  }
  {
    std::ofstream out(dir / "occlusion.csv", std::ios::binary);
    out << "frame,xmin,ymin,xmax,ymax\n";
    for (const auto& o : gt.occlusion)
      out << o.frame << ',' << o.overlap.xmin << ',' << o.overlap.ymin << ',' << o.overlap.xmax
          << ',' << o.overlap.ymax << '\n';
  }
  std::ofstream(dir / "scenario.json", std::ios::binary) << gt.scenario.to_json().dump(2) << '\n';
  for (const auto& name : {"truth.csv", "occlusion.csv", "scenario.json"})
    if (!std::filesystem::exists(dir / name)) throw Error(std::string("failed to write ") + name);
}

inline std::vector<OcclusionFrame> read_occlusion_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line.rfind("frame,", 0) != 0)
    throw FormatError("occlusion CSV lacks its header");
  std::vector<OcclusionFrame> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    OcclusionFrame o;
    if (std::sscanf(line.c_str(), "%d,%lf,%lf,%lf,%lf", &o.frame, &o.overlap.xmin, &o.overlap.ymin,
                    &o.overlap.xmax, &o.overlap.ymax) != 5)
      throw FormatError("bad occlusion CSV row");
    out.push_back(o);
  }
  return out;
}

/// 100 * mean(count_i / M).
inline double tracking_length_percentage(std::span<const int> counts, int total_frames) {
  if (counts.empty()) throw std::invalid_argument("no trajectories to score");
  if (total_frames <= 0) throw std::invalid_argument("total frame count must be positive");
  double sum = 0.0;
  for (int c : counts) {
    if (c < 0 || c > total_frames) throw std::invalid_argument("tracked count exceeds frame count");
    sum += static_cast<double>(c) / total_frames;
  }
  return 100.0 * sum / static_cast<double>(counts.size());
}

/// For each truth marker, the trajectory whose frame-1 position is nearest.
inline std::vector<int> match_markers(const TrajectoryMatrix& tracks, const TrajectoryMatrix& truth) {
  if (tracks.empty() || truth.empty()) throw std::invalid_argument("nothing to match");
  std::vector<int> out(truth.points());
  for (int k = 0; k < truth.points(); ++k) {
    const Point2 s = truth.at(k, 0);
    double best = std::numeric_limits<double>::infinity();
    for (int i = 0; i < tracks.points(); ++i) {
      const Point2 p = tracks.at(i, 0);
      if (!is_finite(p)) continue;
      const double d = squared_norm(p - s);
      if (d < best) {
        best = d;
        out[k] = i;
      }
    }
  }
  return out;
}

/// Rows of `tracks` picked by `rows`.
inline TrajectoryMatrix select_rows(const TrajectoryMatrix& tracks, std::span<const int> rows) {
  TrajectoryMatrix out(static_cast<int>(rows.size()), tracks.frames());
  for (std::size_t k = 0; k < rows.size(); ++k)
    for (int t = 0; t < tracks.frames(); ++t) out.set(static_cast<int>(k), t, tracks.at(rows[k], t));
  return out;
}

/// K x M Euclidean offsets between estimated and true marker positions.
inline std::vector<std::vector<double>> offset_distances(const TrajectoryMatrix& estimated,
                                                         const TrajectoryMatrix& truth) {
  if (estimated.points() != truth.points() || estimated.frames() != truth.frames())
    throw std::invalid_argument("estimated and true marker tracks differ in shape");
  std::vector<std::vector<double>> d(truth.frames(), std::vector<double>(truth.points()));
  for (int t = 0; t < truth.frames(); ++t)
    for (int k = 0; k < truth.points(); ++k) d[t][k] = distance(estimated.at(k, t), truth.at(k, t));
  return d;
}

/// Per-frame population standard deviation of the marker offset distances.
inline std::vector<double> offset_std(const TrajectoryMatrix& estimated, const TrajectoryMatrix& truth) {
  if (truth.points() < 2) throw std::invalid_argument("offset std needs at least two markers");
  const auto d = offset_distances(estimated, truth);
  std::vector<double> out;
  out.reserve(d.size());
  for (const auto& row : d) {
    double mean = 0.0;
    for (double v : row) mean += v;
    mean /= static_cast<double>(row.size());
    double var = 0.0;
    for (double v : row) var += (v - mean) * (v - mean);
    out.push_back(std::sqrt(var / static_cast<double>(row.size())));
  }
  return out;
}

inline double mean_offset(const TrajectoryMatrix& estimated, const TrajectoryMatrix& truth) {
  const auto d = offset_distances(estimated, truth);
  double s = 0.0;
  std::size_t n = 0;
  for (const auto& row : d)
    for (double v : row) {
      s += v;
      ++n;
    }
  return s / static_cast<double>(n);
}

}  // namespace meshtrack
