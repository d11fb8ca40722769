#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "gs4d/common.hpp"

namespace gs4d {

/// Flat dotted-key configuration with a declared schema: unknown keys are
/// rejected, every key has a default and a help line. Precedence is
/// defaults < file < explicit overrides (apply them in that order).
class ConfigMap {
 public:
  void declare(const std::string& key, const std::string& def, const std::string& help) {
    schema_[key] = {def, help};
    values_[key] = def;
  }

  bool known(const std::string& key) const { return schema_.count(key) > 0; }

  void set(const std::string& key, const std::string& value) {
    if (!known(key)) throw UsageError("unknown config key '" + key + "' (see --help for the list)");
    values_[key] = value;
  }

  /// Accepts `key=value` (the CLI override form).
  void set_pair(const std::string& pair) {
    const auto eq = pair.find('=');
    if (eq == std::string::npos || eq == 0)
      throw UsageError("config override must look like key=value, got '" + pair + "'");
    set(pair.substr(0, eq), pair.substr(eq + 1));
  }

  /// Loads a flat JSON object {"dotted.key": scalar, ...}.
  void load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open config file '" + path + "'");
    nlohmann::json j;
    try {
      in >> j;
    } catch (const std::exception& e) {
      throw DataError("config file '" + path + "': " + e.what());
    }
    if (!j.is_object()) throw DataError("config file '" + path + "' must hold one JSON object");
    for (const auto& [key, value] : j.items()) {
      if (value.is_string())
        set(key, value.get<std::string>());
      else if (value.is_boolean())
        set(key, value.get<bool>() ? "true" : "false");
      else if (value.is_number_integer())
        set(key, std::to_string(value.get<std::int64_t>()));
      else if (value.is_number())
        set(key, dump_double(value.get<double>()));
      else
        throw DataError("config key '" + key + "' must be a scalar");
    }
  }

  const std::string& get(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) throw UsageError("unknown config key '" + key + "'");
    return it->second;
  }

  double get_double(const std::string& key) const {
    const std::string& s = get(key);
    std::size_t pos = 0;
    double v = 0;
    try {
      v = std::stod(s, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos != s.size()) throw UsageError("config key '" + key + "': '" + s + "' is not a number");
    return v;
  }

  std::int64_t get_int(const std::string& key) const {
    const std::string& s = get(key);
    std::size_t pos = 0;
    std::int64_t v = 0;
    try {
      v = std::stoll(s, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos != s.size()) throw UsageError("config key '" + key + "': '" + s + "' is not an integer");
    return v;
  }

  bool get_bool(const std::string& key) const {
    const std::string& s = get(key);
    if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
    if (s == "false" || s == "0" || s == "no" || s == "off") return false;
    throw UsageError("config key '" + key + "': '" + s + "' is not a boolean");
  }

  /// Current values as strings, e.g. for a checkpoint snapshot.
  std::map<std::string, std::string> dump() const { return values_; }

  /// One line per key: name, default, and help text.
  std::string help_text() const {
    std::ostringstream out;
    for (const auto& [key, meta] : schema_)
      out << "  " << key << " (default " << meta.first << "): " << meta.second << "\n";
    return out.str();
  }

  static std::string dump_double(double v) {
    std::ostringstream ss;
    ss.precision(17);
    ss << v;
    return ss.str();
  }

 private:
  std::map<std::string, std::string> values_;
  std::map<std::string, std::pair<std::string, std::string>> schema_;
};

/// The full training/rendering schema with every built-in default.
inline ConfigMap default_config() {
  ConfigMap c;
  c.declare("seed", "1", "base random seed for initialization and frame sampling");
  c.declare("threads", "0", "worker threads; 0 uses the hardware count");
  c.declare("deterministic", "true",
            "record determinism intent; rendering and training are bit-deterministic either way");
  c.declare("sh_degree", "2", "spherical-harmonics degree of fitted primitives (0-3)");

  c.declare("train.iterations", "0", "total optimization steps; 0 scales as 100 per frame");
  c.declare("train.checkpoint_every", "1000", "write a checkpoint every this many steps");
  c.declare("train.log_every", "50", "emit a progress line every this many steps");
  c.declare("train.disable_velocity", "false",
            "freeze motion: zero initial velocities and a zero velocity learning rate");
  c.declare("train.scene_extent", "0",
            "scene size scaling the position learning rate; 0 derives it from the scene bounds");

  c.declare("loss.l1", "0.8", "weight of the mean absolute image error");
  c.declare("loss.ssim", "0.2", "weight of the structural (1-SSIM)/2 term");
  c.declare("loss.perceptual", "0",
            "weight of a perceptual term; pinned to 0 (no pretrained network is bundled)");
  c.declare("loss.reg", "0.01", "weight of the opacity regularizer while its window is active");
  c.declare("loss.reg_end_fraction", "0.5",
            "fraction of training during which the opacity regularizer is fully on");
  c.declare("loss.reg_decay_fraction", "0.1",
            "fraction of training over which the regularizer then fades linearly to zero");

  c.declare("lr.position", "0.00016", "position rate, times the scene extent, at the start");
  c.declare("lr.position_final", "0.0000016",
            "position rate, times the scene extent, reached at the end by geometric decay");
  c.declare("lr.opacity", "0.05", "opacity (raw logit) learning rate");
  c.declare("lr.scale", "0.005", "log-scale learning rate");
  c.declare("lr.rotation", "0.001", "orientation (raw quaternion) learning rate");
  c.declare("lr.sh", "0.0025", "spherical-harmonics coefficient learning rate");
  c.declare("lr.time", "0.0001", "center-time learning rate");
  c.declare("lr.duration", "0.002", "log-duration learning rate");
  c.declare("lr.velocity", "0.001", "velocity base rate, modulated by the annealing schedule");

  c.declare("schedule.velocity_lambda0", "1", "velocity rate multiplier at progress 0");
  c.declare("schedule.velocity_lambda1", "0.01", "velocity rate multiplier at progress 1");
  c.declare("schedule.velocity_additive", "false",
            "use the literal two-term sum instead of geometric interpolation");

  c.declare("relocate.enabled", "true", "periodically move dead primitives onto sampled targets");
  c.declare("relocate.period", "100", "steps between relocation sweeps");
  c.declare("relocate.lambda_grad", "0.5", "sampling-score weight of the gradient statistic");
  c.declare("relocate.lambda_opacity", "0.5", "sampling-score weight of the activated opacity");
  c.declare("relocate.dead_threshold", "0.005", "activated opacity below this marks a primitive dead");
  c.declare("relocate.position_jitter", "0.1", "position noise, relative to the target's scale");
  c.declare("relocate.time_jitter", "0.1", "time noise, relative to the target's duration");
  c.declare("relocate.opacity_reset", "0.1", "activated opacity assigned to relocated primitives");

  c.declare("raster.tile", "16", "tile size in pixels");
  c.declare("raster.near_plane", "0.01", "camera-space depth cutoff");
  c.declare("raster.temporal_cutoff", "0.05", "temporal opacity below this culls a primitive");
  c.declare("raster.opacity_cutoff", "0.00392156862745098",
            "activated opacity below this culls a primitive");
  c.declare("raster.alpha_floor", "0.00392156862745098",
            "per-pixel alpha below this is skipped and recorded as zero");
  c.declare("raster.alpha_cap", "0.999", "per-pixel alpha ceiling");
  c.declare("raster.transmittance_stop", "0.0001",
            "stop compositing a pixel once transmittance falls below this");
  c.declare("raster.dilation", "0.3", "isotropic screen-space covariance dilation in px^2");
  c.declare("raster.sigma_bound", "3", "tile binning radius in standard deviations");

  c.declare("init.mode", "auto",
            "auto (correspondences when the scene has them, else random), correspondences, random");
  c.declare("init.max_points_per_frame", "20000", "per-frame seed cap, stride-subsampled above it");
  c.declare("init.max_rms", "2", "triangulation acceptance bound in pixels");
  c.declare("init.knn_k", "1", "neighbours used for velocity estimation");
  c.declare("init.knn_cutoff", "3",
            "velocity match cutoff as a multiple of the median neighbour distance");
  c.declare("init.opacity", "0.1", "starting activated opacity of seeded primitives");
  c.declare("init.duration_scale", "2", "seeded duration as a multiple of the frame interval");
  c.declare("init.scale_neighbors", "3", "same-frame neighbours averaged into the seeded scale");
  c.declare("init.random_count", "4096", "primitive count for random initialization");
  return c;
}

}  // namespace gs4d
