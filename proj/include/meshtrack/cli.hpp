#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "meshtrack/bench.hpp"
#include "meshtrack/config.hpp"
#include "meshtrack/error.hpp"
#include "meshtrack/mesh_gen.hpp"
#include "meshtrack/render.hpp"
#include "meshtrack/tracker.hpp"

namespace meshtrack {

namespace fs = std::filesystem;

enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitInput = 2, kExitNumerical = 3 };

/// mask_00001.pgm (or .png), mask_00002..., up to the first gap.
inline std::vector<SilhouetteMask> load_mask_sequence(const fs::path& dir) {
  std::vector<SilhouetteMask> masks;
  for (int t = 1;; ++t) {
    fs::path p = dir / frame_name("mask", t, "pgm");
    if (!fs::exists(p)) p = dir / frame_name("mask", t, "png");
    if (!fs::exists(p)) break;
    try {
      masks.push_back(load_mask(read_file(p)));
    } catch (const Error& e) {
      throw FormatError(p.string() + ": " + e.what());
    }
  }
  return masks;
}

inline std::optional<std::vector<FlowField>> load_flows(const fs::path& dir, int pairs) {
  if (!fs::exists(dir / frame_name("flow", 1, "flo"))) return std::nullopt;
  std::vector<FlowField> flows;
  for (int t = 1; t <= pairs; ++t) {
    const fs::path p = dir / frame_name("flow", t, "flo");
    if (!fs::exists(p)) throw FormatError("missing " + p.string());
    try {
      flows.push_back(read_flo(read_file(p)));
    } catch (const FormatError& e) {
      throw FormatError(p.string() + ": " + e.what());
    }
  }
  return flows;
}

inline std::vector<GrayImage> load_frames(const fs::path& dir, int count) {
  std::vector<GrayImage> frames;
  for (int t = 1; t <= count; ++t) {
    const fs::path p = dir / frame_name("frame", t, "pgm");
    if (!fs::exists(p)) return {};
    frames.push_back(decode_gray(read_file(p)));
  }
  return frames;
}

inline TrajectoryMatrix load_trajectories(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw FormatError("cannot open " + p.string());
  return read_trajectories(in);
}

namespace detail {

inline std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw FormatError("cannot open " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Fixed six decimals, trailing zeros trimmed to one.
inline std::string short_decimal(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  std::string s = buf;
  while (s.size() > 2 && s.back() == '0' && s[s.size() - 2] != '.') s.pop_back();
  return s;
}

struct SynthArgs {
  std::string scenario, out_dir;
  std::uint64_t seed = 1;
};

struct TrackArgs {
  std::string in_dir, out_dir, config, flows;
  std::optional<double> theta, lambda;
  std::optional<int> vertices;
};

struct EvalArgs {
  std::string trajectories, truth_dir;
};

struct RenderArgs {
  std::string trajectories, masks_dir, out_dir;
  int stride = 1;
};

inline int cmd_synth(const SynthArgs& a, std::ostream& out) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text(a.scenario));
  } catch (const nlohmann::json::parse_error& e) {
    throw ScenarioError(std::string("scenario is not valid JSON: ") + e.what());
  }
  const SynthScenario s = SynthScenario::from_json(j);
  const GroundTruth gt = generate_scenario(s, a.seed);
  write_ground_truth(gt, a.out_dir);
  out << "synth " << s.kind << ": " << s.frames << " frames " << s.width << "x" << s.height
      << ", " << gt.samples.points() << " markers, " << gt.occlusion.size()
      << " overlap frames -> " << a.out_dir << '\n';
  return kExitOk;
}

inline int cmd_track(const TrackArgs& a, std::ostream& out, std::ostream& err) {
  TrackerConfig cfg = a.config.empty() ? TrackerConfig{} : TrackerConfig::parse(read_text(a.config));
  if (a.theta) cfg.deform.theta = *a.theta;
  if (a.lambda) cfg.deform.lambda = *a.lambda;
  if (a.vertices) cfg.mesh.target_vertex_count = *a.vertices;
  if (!a.flows.empty()) cfg.flow.directory = a.flows;
  cfg.validate();

  const std::vector<SilhouetteMask> masks = load_mask_sequence(a.in_dir);
  if (masks.size() < 2)
    throw FormatError("need at least two mask_%05d files in " + a.in_dir);
  const int m = static_cast<int>(masks.size());

  const fs::path flow_dir = cfg.flow.directory.empty() ? fs::path(a.in_dir) : fs::path(cfg.flow.directory);
  std::vector<FlowField> flows;
  std::vector<GrayImage> frames;
  std::string source;
  if (cfg.flow.source != FlowSource::builtin) {
    auto loaded = load_flows(flow_dir, m - 1);
    if (loaded) {
      flows = std::move(*loaded);
      source = "external";
    } else if (cfg.flow.source == FlowSource::external) {
      throw FormatError("no flow_00001.flo in " + flow_dir.string());
    }
  }
  if (flows.empty()) {
    frames = load_frames(a.in_dir, m);
    source = frames.empty() ? "builtin on masks" : "builtin on frames";
  }

  const TrackResult r = track_sequence(masks, FlowInput{flows, frames, cfg.flow.levels}, cfg);

  fs::create_directories(a.out_dir);
  const fs::path dir(a.out_dir);
  {
    std::ofstream f(dir / "trajectories.csv", std::ios::binary);
    write_trajectories(r.trajectories, f);
  }
  {
    std::ofstream f(dir / "frames.csv", std::ios::binary);
    write_frame_summary(r.frames, f);
  }
  if (cfg.io.write_diagnostics) {
    std::ofstream f(dir / "diagnostics.csv", std::ios::binary);
    write_diagnostics(r.frames, f);
  }
  if (cfg.io.write_mesh) {
    std::ofstream f(dir / "mesh.off", std::ios::binary);
    write_off(r.reference.mesh, f);
  }
  std::ofstream(dir / "config.json", std::ios::binary) << cfg.dump();

  for (const auto& w : r.reference.warnings) err << "warning: frame 1: " << w << '\n';
  for (const auto& f : r.frames)
    for (const auto& w : f.warnings) err << "warning: frame " << f.frame << ": " << w << '\n';
  out << "tracked " << r.trajectories.points() << " points over " << m << " frames (flow: " << source
      << ") -> " << a.out_dir << '\n';
  return kExitOk;
}

inline int cmd_eval(const EvalArgs& a, std::ostream& out) {
  const TrajectoryMatrix tracks = load_trajectories(a.trajectories);
  const TrajectoryMatrix truth = load_trajectories(fs::path(a.truth_dir) / "truth.csv");
  if (truth.frames() != tracks.frames())
    throw FormatError("trajectories have " + std::to_string(tracks.frames()) +
                      " frames, truth has " + std::to_string(truth.frames()));
  const auto counts = tracks.tracked_counts();
  out << "tracking_length_pct," << short_decimal(tracking_length_percentage(counts, tracks.frames()))
      << '\n';
  const TrajectoryMatrix est = select_rows(tracks, match_markers(tracks, truth));
  char buf[64];
  std::snprintf(buf, sizeof buf, "mean_offset_px,%.6f\n", mean_offset(est, truth));
  out << buf;
  out << "frame,offset_std\n";
  const auto sd = offset_std(est, truth);
  for (std::size_t t = 0; t < sd.size(); ++t) {
    std::snprintf(buf, sizeof buf, "%zu,%.6f\n", t + 1, sd[t]);
    out << buf;
  }
  return kExitOk;
}

inline int cmd_render(const RenderArgs& a, std::ostream& out) {
  const TrajectoryMatrix tracks = load_trajectories(a.trajectories);
  const fs::path masks_dir(a.masks_dir);
  const std::vector<SilhouetteMask> masks = load_mask_sequence(masks_dir);

  std::optional<MeshTopology> topo;
  const fs::path off = fs::path(a.trajectories).parent_path() / "mesh.off";
  if (fs::exists(off)) {
    std::ifstream in(off, std::ios::binary);
    MeshState mesh = read_off(in);
    if (mesh.vertex_count() == tracks.points()) topo = mesh.topology();
  }

  std::vector<int> groups;
  const fs::path labels = masks_dir / "labels_00001.pgm";
  if (fs::exists(labels))
    groups = groups_from_labels(tracks, decode_gray(read_file(labels)));
  else if (topo)
    groups = groups_from_components(*topo);

  int w = 0, h = 0;
  if (!masks.empty()) {
    w = masks[0].width();
    h = masks[0].height();
  } else {
    for (int i = 0; i < tracks.points(); ++i)
      for (int t = 0; t < tracks.frames(); ++t) {
        const Point2 p = tracks.at(i, t);
        if (!is_finite(p)) continue;
        w = std::max(w, static_cast<int>(std::ceil(p.x)) + 2);
        h = std::max(h, static_cast<int>(std::ceil(p.y)) + 2);
      }
  }
  if (w <= 0 || h <= 0) throw FormatError("cannot size overlays: no masks and no finite positions");

  fs::create_directories(a.out_dir);
  int written = 0;
  for (int t = 0; t < tracks.frames(); t += a.stride) {
    const SilhouetteMask* mask = t < static_cast<int>(masks.size()) ? &masks[t] : nullptr;
    const RgbImage img = render_overlay(tracks, t, w, h, mask, topo ? &*topo : nullptr, groups);
    write_file(fs::path(a.out_dir) / frame_name("overlay", t + 1, "png"), encode_png(img));
    ++written;
  }
  out << "rendered " << written << " overlays -> " << a.out_dir << '\n';
  return kExitOk;
}

}  // namespace detail

/// Entry point for the meshtrack tool. Exit codes: 0 ok, 1 usage,
/// 2 input or format error, 3 numerical failure.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout,
               std::ostream& err = std::cerr) {
  CLI::App app{"Dense point tracking on silhouette sequences by mesh evolution", "meshtrack"};
  app.require_subcommand(1);

  detail::SynthArgs synth;
  auto* c_synth = app.add_subcommand("synth", "Generate a synthetic ground-truth sequence");
  c_synth->add_option("scenario", synth.scenario, "Scenario JSON")->required();
  c_synth->add_option("out_dir", synth.out_dir, "Output directory")->required();
  c_synth->add_option("--seed", synth.seed, "Texture noise seed");

  detail::TrackArgs track;
  auto* c_track = app.add_subcommand("track", "Track a mask sequence");
  c_track->add_option("in_dir", track.in_dir, "Directory with mask_%05d.pgm")->required();
  c_track->add_option("out_dir", track.out_dir, "Output directory")->required();
  c_track->add_option("--config", track.config, "Tracker config JSON");
  c_track->add_option("--flows", track.flows, "Directory with flow_%05d.flo");
  c_track->add_option("--theta", track.theta, "Stopping threshold")->check(CLI::PositiveNumber);
  c_track->add_option("--lambda", track.lambda, "Drift regularization weight")->check(CLI::Range(0.0, 1.0));
  c_track->add_option("--vertices", track.vertices, "Target vertex count")->check(CLI::Range(4, 1000000));

  detail::EvalArgs eval;
  auto* c_eval = app.add_subcommand("eval", "Score trajectories against synthetic ground truth");
  c_eval->add_option("trajectories", eval.trajectories, "trajectories.csv")->required();
  c_eval->add_option("truth_dir", eval.truth_dir, "Directory with truth.csv")->required();

  detail::RenderArgs render;
  auto* c_render = app.add_subcommand("render", "Draw trajectory overlays as PNG");
  c_render->add_option("trajectories", render.trajectories, "trajectories.csv")->required();
  c_render->add_option("masks_dir", render.masks_dir, "Directory with mask_%05d.pgm")->required();
  c_render->add_option("out_dir", render.out_dir, "Output directory")->required();
  c_render->add_option("--stride", render.stride, "Render every k-th frame")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    err << app.help();
    return kExitUsage;
  }

  try {
    if (*c_synth) return detail::cmd_synth(synth, out);
    if (*c_track) return detail::cmd_track(track, out, err);
    if (*c_eval) return detail::cmd_eval(eval, out);
    if (*c_render) return detail::cmd_render(render, out);
  } catch (const TrackingError& e) {
    err << "error: " << e.what() << '\n';
    return e.numerical() ? kExitNumerical : kExitInput;
  } catch (const NumericalError& e) {
    err << "error: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitInput;
  }
  return kExitUsage;
}

}  // namespace meshtrack
