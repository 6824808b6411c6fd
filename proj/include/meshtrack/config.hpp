#pragma once

#include <string>

#include <json.hpp>

#include "meshtrack/deformation.hpp"
#include "meshtrack/error.hpp"
#include "meshtrack/mesh_gen.hpp"

namespace meshtrack {

struct PropagationParams {
  /// Frames of history for the occluded-vertex polynomial fit.
  int history_length = 5;
  /// Also treat the one-ring around crossing edges as occluded.
  bool occlusion_dilation = false;

  void validate() const {
    if (history_length < 3) throw ConfigError("history_length must be >= 3");
  }
};

enum class FlowSource { automatic, external, builtin };

struct FlowParams {
  /// automatic: external .flo files when present, otherwise the block matcher.
  FlowSource source = FlowSource::automatic;
  /// Directory holding flow_%05d.flo; empty means the input directory.
  std::string directory;
  int levels = 3;

  void validate() const {
    if (levels < 1 || levels > 6) throw ConfigError("flow levels must be in [1, 6]");
  }
};

struct IoParams {
  bool write_diagnostics = true;
  bool write_mesh = true;
};

struct TrackerConfig {
  MeshGenParams mesh;
  DeformParams deform;
  PropagationParams propagation;
  FlowParams flow;
  IoParams io;

  void validate() const {
    mesh.validate();
    deform.validate();
    propagation.validate();
    flow.validate();
  }

  friend bool operator==(const TrackerConfig& a, const TrackerConfig& b) {
    return a.to_json() == b.to_json();
  }

  nlohmann::json to_json() const {
    using nlohmann::json;
    const char* src = flow.source == FlowSource::external  ? "external"
                      : flow.source == FlowSource::builtin ? "builtin"
                                                           : "auto";
    return json{
        {"mesh",
         {{"target_vertex_count", mesh.target_vertex_count},
          {"max_relax_iters", mesh.max_relax_iters},
          {"move_tolerance", mesh.move_tolerance},
          {"h0", mesh.h0}}},
        {"deform",
         {{"lambda", deform.lambda},
          {"theta", deform.theta},
          {"max_iters", deform.max_iters},
          {"min_iters", deform.min_iters},
          {"density_radius", deform.density_radius},
          {"density_threshold", deform.density_threshold},
          {"outside_tolerance", deform.outside_tolerance},
          {"blank_reach", deform.blank_reach},
          {"energy_floor", deform.energy_floor},
          {"similarity", deform.similarity}}},
        {"propagation",
         {{"history_length", propagation.history_length},
          {"occlusion_dilation", propagation.occlusion_dilation}}},
        {"flow", {{"source", src}, {"directory", flow.directory}, {"levels", flow.levels}}},
        {"io", {{"write_diagnostics", io.write_diagnostics}, {"write_mesh", io.write_mesh}}},
    };
  }

  /// Missing keys keep their defaults; unknown keys are an error.
  static TrackerConfig from_json(const nlohmann::json& j) {
    TrackerConfig c;
    const TrackerConfig defaults;
    const nlohmann::json ref = defaults.to_json();
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    for (auto it = j.begin(); it != j.end(); ++it) {
      if (!ref.contains(it.key())) throw ConfigError("unknown config section '" + it.key() + "'");
      if (!it.value().is_object())
        throw ConfigError("config section '" + it.key() + "' must be an object");
      for (auto kv = it.value().begin(); kv != it.value().end(); ++kv)
        if (!ref[it.key()].contains(kv.key()))
          throw ConfigError("unknown config key '" + it.key() + "." + kv.key() + "'");
    }
    auto get = [&](const char* sec, const char* key, auto& field) {
      if (!j.contains(sec) || !j[sec].contains(key)) return;
      try {
        j[sec][key].get_to(field);
      } catch (const nlohmann::json::exception&) {
        throw ConfigError(std::string("bad value for ") + sec + "." + key);
      }
    };
    get("mesh", "target_vertex_count", c.mesh.target_vertex_count);
    get("mesh", "max_relax_iters", c.mesh.max_relax_iters);
    get("mesh", "move_tolerance", c.mesh.move_tolerance);
    get("mesh", "h0", c.mesh.h0);
    get("deform", "lambda", c.deform.lambda);
    get("deform", "theta", c.deform.theta);
    get("deform", "max_iters", c.deform.max_iters);
    get("deform", "min_iters", c.deform.min_iters);
    get("deform", "density_radius", c.deform.density_radius);
    get("deform", "density_threshold", c.deform.density_threshold);
    get("deform", "outside_tolerance", c.deform.outside_tolerance);
    get("deform", "blank_reach", c.deform.blank_reach);
    get("deform", "energy_floor", c.deform.energy_floor);
    get("deform", "similarity", c.deform.similarity);
    get("propagation", "history_length", c.propagation.history_length);
    get("propagation", "occlusion_dilation", c.propagation.occlusion_dilation);
    std::string src = "auto";
    get("flow", "source", src);
    if (src == "auto")
      c.flow.source = FlowSource::automatic;
    else if (src == "external")
      c.flow.source = FlowSource::external;
    else if (src == "builtin")
      c.flow.source = FlowSource::builtin;
    else
      throw ConfigError("flow.source must be auto, external or builtin");
    get("flow", "directory", c.flow.directory);
    get("flow", "levels", c.flow.levels);
    get("io", "write_diagnostics", c.io.write_diagnostics);
    get("io", "write_mesh", c.io.write_mesh);
    c.validate();
    return c;
  }

  static TrackerConfig parse(const std::string& text) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
      throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    return from_json(j);
  }

  std::string dump() const { return to_json().dump(2) + "\n"; }
};

}  // namespace meshtrack
