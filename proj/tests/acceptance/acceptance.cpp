// Acceptance checks: one line per criterion, exit status 1 if any fails.
#include <chrono>
#include <cstdio>
#include <fstream>
#include <map>
#include <random>

#include "meshtrack/bench.hpp"
#include "meshtrack/cli.hpp"

using namespace meshtrack;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

SynthScenario load_scenario(const std::string& name) {
  std::ifstream in(std::string(MESHTRACK_SCENARIO_DIR) + "/" + name + ".json");
  if (!in) throw std::runtime_error("missing scenario " + name);
  return SynthScenario::from_json(nlohmann::json::parse(in));
}

struct Run {
  GroundTruth gt;
  TrackResult result;
  double seconds = 0;
};

Run track_scenario(const std::string& name) {
  GroundTruth gt = generate_scenario(load_scenario(name), 1);
  const auto t0 = std::chrono::steady_clock::now();
  TrackResult r = track_sequence(gt.masks, FlowInput{gt.flows, {}, 3}, TrackerConfig{});
  const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {std::move(gt), std::move(r), s};
}

double orient(Point2 a, Point2 b, Point2 c) { return (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x); }

Outcome c1_length(const std::map<std::string, Run>& runs) {
  bool ok = true;
  std::string d;
  for (const auto& [name, run] : runs) {
    const auto counts = run.result.trajectories.tracked_counts();
    const double pct = tracking_length_percentage(counts, run.gt.scenario.frames);
    ok &= pct == 100.0 && run.seconds <= 120.0;
    d += fmt("%s %.1f%% %.2fs; ", name.c_str(), pct, run.seconds);
  }
  return {ok, d};
}

Outcome c2_segments() {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(-50, 50);
  int mismatches = 0, hits = 0, tested = 0;
  double worst = 0;
  for (int k = 0; k < 100000; ++k) {
    const Point2 p1{u(rng), u(rng)}, p2{u(rng), u(rng)}, p3{u(rng), u(rng)}, p4{u(rng), u(rng)};
    if (std::abs(cross(p2 - p1, p4 - p3)) <= kParallelEps) continue;
    ++tested;
    const double o1 = orient(p1, p2, p3), o2 = orient(p1, p2, p4);
    const double o3 = orient(p3, p4, p1), o4 = orient(p3, p4, p2);
    const bool want = o1 * o2 < 0 && o3 * o4 < 0;
    const auto r = intersect_segments(p1, p2, p3, p4);
    if (r.hit != want) {
      ++mismatches;
      continue;
    }
    if (r.hit) {
      ++hits;
      worst = std::max({worst, std::abs(r.alpha - o3 / (o3 - o4)), std::abs(r.beta - o1 / (o1 - o2))});
    }
  }
  return {mismatches == 0 && worst < 1e-9,
          fmt("%d pairs, %d crossings, %d mismatches, max param error %.2e", tested, hits, mismatches, worst)};
}

Outcome c3_prediction() {
  // Histories at frame indices a 140-frame sequence can reach.
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> coef(-10, 10);
  std::uniform_int_distribution<int> start(1, 135);
  double worst = 0;
  for (int k = 0; k < 1000; ++k) {
    const double ax = coef(rng), bx = coef(rng), cx = coef(rng);
    const double ay = coef(rng), by = coef(rng), cy = coef(rng);
    const int t0 = start(rng);
    std::vector<Point2> h;
    for (int t = t0; t < t0 + 5; ++t) h.push_back({ax * t * t + bx * t + cx, ay * t * t + by * t + cy});
    const double t = t0 + 5;
    const Point2 want{ax * t * t + bx * t + cx, ay * t * t + by * t + cy};
    worst = std::max(worst, distance(predict_polynomial(h), want));
  }
  return {worst < 1e-9, fmt("1000 histories, max error %.2e px", worst)};
}

Outcome c4_procrustes() {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-10, 10), ang(-3.14, 3.14);
  std::normal_distribution<double> noise(0, 0.1);
  std::uniform_int_distribution<int> size(3, 8);
  double worst_res = 0, worst_angle = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<Point2> a(size(rng));
    for (auto& p : a) p = {u(rng), u(rng)};
    const Mat2 r = Mat2::rotation(ang(rng));
    const Point2 t{u(rng), u(rng)};
    std::vector<Point2> b;
    for (const auto& p : a) b.push_back(r * p + t);
    const auto f = fit_patch_rigid(a, b);
    for (std::size_t k = 0; k < a.size(); ++k) worst_res = std::max(worst_res, distance(f.transform.apply(a[k]), b[k]));
  }
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<Point2> a(size(rng));
    for (auto& p : a) p = {u(rng), u(rng)};
    const Mat2 r = Mat2::rotation(ang(rng));
    std::vector<Point2> b;
    for (const auto& p : a) b.push_back(r * p + Point2{noise(rng), noise(rng)} + Point2{3, -2});
    const Point2 ca = centroid(a), cb = centroid(b);
    double best = 1e300, best_th = 0;
    for (double th = -std::numbers::pi; th < std::numbers::pi; th += 1e-4) {
      const Mat2 q = Mat2::rotation(th);
      double e = 0;
      for (std::size_t k = 0; k < a.size(); ++k) e += squared_norm(q * (a[k] - ca) - (b[k] - cb));
      if (e < best) best = e, best_th = th;
    }
    const double diff = std::remainder(fit_patch_rigid(a, b).transform.angle() - best_th, 2 * std::numbers::pi);
    worst_angle = std::max(worst_angle, std::abs(diff));
  }
  return {worst_res < 1e-9 && worst_angle <= 1e-3,
          fmt("exact residual %.2e, noisy angle vs grid %.2e rad", worst_res, worst_angle)};
}

Outcome c5_fixed_point() {
  const auto s = SynthScenario::preset("two_link_swing");
  const GroundTruth gt = generate_scenario(s, 1);
  const std::vector<SilhouetteMask> masks(10, gt.masks[0]);
  const std::vector<FlowField> flows(9, FlowField(s.width, s.height));
  const TrackerConfig cfg;
  const auto r = track_sequence(masks, FlowInput{flows, {}, 3}, cfg);
  double drift = 0;
  int capped = 0;
  for (int i = 0; i < r.trajectories.points(); ++i)
    for (int t = 1; t < 10; ++t)
      drift = std::max(drift, distance(r.trajectories.at(i, t), r.trajectories.at(i, 0)));
  for (const auto& f : r.frames) capped += f.iterations >= cfg.deform.max_iters;
  return {drift < 1e-6 && capped == 0, fmt("max drift %.2e px, %d of 9 frames at max_iters", drift, capped)};
}

Outcome c6_translation(const Run& run) {
  const auto& tr = run.result.trajectories;
  const MeshTopology& topo = run.result.reference.mesh.topology();
  double worst_step = 0, worst_edge = 0;
  for (int t = 1; t < tr.frames(); ++t)
    for (int i = 0; i < tr.points(); ++i)
      worst_step = std::max(worst_step, distance(tr.at(i, t) - tr.at(i, t - 1), {2, 1}));
  for (int t = 1; t < tr.frames(); ++t)
    for (const Edge& e : topo.edges()) {
      const double l0 = distance(tr.at(e[0], 0), tr.at(e[1], 0));
      const double lt = distance(tr.at(e[0], t), tr.at(e[1], t));
      worst_edge = std::max(worst_edge, std::abs(lt - l0));
    }
  return {worst_step <= 0.5 && worst_edge <= 0.5,
          fmt("max step deviation %.3f px, max edge-length change %.3f px", worst_step, worst_edge)};
}

Outcome c7_occlusion(const Run& run) {
  const auto& tr = run.result.trajectories;
  const MeshState& ref = run.result.reference.mesh;
  const double reach = longest_edge(ref);
  if (run.gt.occlusion.empty()) return {false, "scenario produced no overlap frames"};
  int empty_frames = 0;
  long inside = 0, total = 0;
  double worst_frac = 1.0;
  int worst_frame = 0;
  for (const auto& o : run.gt.occlusion) {
    const MeshState state = ref.with_positions(tr.column(o.frame - 1));
    const auto occ = detect_self_occlusion(state);
    if (occ.empty()) {
      ++empty_frames;
      continue;
    }
    const Box box = o.overlap.dilated(reach);
    int in = 0;
    for (int v : occ.occluded_vertices) in += box.contains(state.position(v));
    inside += in;
    total += static_cast<long>(occ.occluded_vertices.size());
    const double frac = static_cast<double>(in) / occ.occluded_vertices.size();
    if (frac < worst_frac) worst_frac = frac, worst_frame = o.frame;
  }
  const double pooled = total ? static_cast<double>(inside) / total : 0.0;
  return {empty_frames == 0 && pooled >= 0.9,
          fmt("%zu overlap frames, %d without crossings, pooled %.1f%% in box, worst frame %d at %.1f%%",
              run.gt.occlusion.size(), empty_frames, 100 * pooled, worst_frame, 100 * worst_frac)};
}

Outcome c8_offsets(const Run& run) {
  const auto& tr = run.result.trajectories;
  const TrajectoryMatrix est = select_rows(tr, match_markers(tr, run.gt.samples));
  const double mean = mean_offset(est, run.gt.samples);
  const auto sd = offset_std(est, run.gt.samples);
  const double max_sd = *std::max_element(sd.begin(), sd.end());
  return {mean <= 3.0 && max_sd <= 3.0, fmt("mean offset %.3f px, max per-frame std %.3f px", mean, max_sd)};
}

Outcome c9_stopping(const std::map<std::string, Run>& runs) {
  int fired = 0, frames = 0;
  std::map<int, int> hist;
  for (const auto& [name, run] : runs)
    for (const auto& f : run.result.frames) {
      ++frames;
      fired += f.converged;
      ++hist[f.iterations];
    }
  double worst = 0;
  for (double a : {0.5, 1.0, 3.0})
    for (double b : {-0.5, -1.5, -3.0}) {
      std::vector<double> y;
      for (int k = 1; k <= 20; ++k) y.push_back(a * std::pow(k, b));
      const auto f = fit_power_law(y);
      worst = std::max({worst, std::abs(f.a - a), std::abs(f.b - b)});
    }
  std::string h;
  for (auto [k, n] : hist) h += fmt(" %d:%d", k, n);
  const double rate = static_cast<double>(fired) / frames;
  return {rate >= 0.95 && worst <= 1e-6,
          fmt("fired on %d/%d frames (%.1f%%), iterations{%s }, power-fit error %.1e", fired, frames,
              100 * rate, h.c_str(), worst)};
}

Outcome c10_determinism(const std::string& exe) {
  const fs::path root = fs::temp_directory_path() / "meshtrack_acceptance";
  fs::remove_all(root);
  fs::create_directories(root);
  auto sh = [&](const std::string& args) {
    const std::string cmd = "\"" + exe + "\" " + args + " > \"" + (root / "log.txt").string() + "\" 2>&1";
    return std::system(cmd.c_str());
  };
  const std::string scen = std::string(MESHTRACK_SCENARIO_DIR) + "/two_link_swing.json";
  if (sh("synth \"" + scen + "\" \"" + (root / "gt").string() + "\"") != 0) return {false, "synth failed"};
  for (const char* run : {"a", "b"})
    if (sh("track \"" + (root / "gt").string() + "\" \"" + (root / run).string() + "\"") != 0)
      return {false, std::string("track run ") + run + " failed"};
  bool same = true;
  for (const char* f : {"trajectories.csv", "diagnostics.csv", "frames.csv"})
    same &= detail::read_text(root / "a" / f) == detail::read_text(root / "b" / f);
  const auto bytes = fs::file_size(root / "a" / "trajectories.csv");
  fs::remove_all(root);
  return {same, fmt("two CLI runs, trajectories.csv %ju bytes, %s", static_cast<std::uintmax_t>(bytes),
                    same ? "identical" : "different")};
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::fprintf(stderr, "usage: acceptance <path to meshtrack binary>\n");
    return 2;
  }
  std::map<std::string, Run> runs;
  for (const char* name : {"translation", "two_link_swing", "leg_cross", "scale_change", "swing_long"})
    runs.emplace(name, track_scenario(name));

  const std::vector<std::pair<std::string, std::function<Outcome()>>> checks{
      {"C1 tracking length 100% within time budget", [&] { return c1_length(runs); }},
      {"C2 segment intersection vs orientation oracle", c2_segments},
      {"C3 quadratic prediction exact on polynomial histories", c3_prediction},
      {"C4 patch rigid fit vs closed form and grid search", c4_procrustes},
      {"C5 static sequence is a fixed point", c5_fixed_point},
      {"C6 rigid translation preserved", [&] { return c6_translation(runs.at("translation")); }},
      {"C7 crossings localized at limb overlap", [&] { return c7_occlusion(runs.at("leg_cross")); }},
      {"C8 marker offsets on two-link swing", [&] { return c8_offsets(runs.at("two_link_swing")); }},
      {"C9 energy stopping rule", [&] { return c9_stopping(runs); }},
      {"C10 CLI output is deterministic", [&] { return c10_determinism(argv[1]); }},
  };
  int failed = 0;
  for (const auto& [name, fn] : checks) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("[%s] %s: %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(checks.size()) - failed, checks.size());
  return failed == 0 ? 0 : 1;
}
