#pragma once

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "gs4d/appearance.hpp"
#include "gs4d/common.hpp"
#include "gs4d/image.hpp"
#include "gs4d/primitives.hpp"
#include "gs4d/projection.hpp"
#include "gs4d/random.hpp"
#include "gs4d/rasterizer.hpp"

namespace gs4d {

using Json = nlohmann::json;

// ---------------------------------------------------------------------------
// Scene manifest
// ---------------------------------------------------------------------------

template <class S>
struct FrameRef {
  std::string camera;
  S time = S(0);
  std::string image;  // path relative to the manifest directory
  std::string mask;   // optional, empty when absent
};

/// A dataset: cameras, per-frame observations, and optional side files. All
/// stored paths are relative to the directory holding the manifest.
template <class S>
struct Scene {
  std::string name;
  int frame_count = 0;
  double fps = 0.0;
  std::vector<Camera<S>> cameras;
  std::vector<FrameRef<S>> frames;
  std::vector<std::string> train_cameras, test_cameras;
  std::string correspondences;  // optional path
  std::string ground_truth;     // optional path
  bool has_bounds = false;
  Vec3<S> bounds_lo = Vec3<S>::Zero(), bounds_hi = Vec3<S>::Zero();
  std::filesystem::path dir;  // set by load_scene / save_scene

  const Camera<S>& camera(const std::string& id) const {
    for (const auto& c : cameras)
      if (c.id == id) return c;
    throw DataError("scene '" + name + "': unknown camera '" + id + "'");
  }

  std::map<std::string, Camera<S>> camera_map() const {
    std::map<std::string, Camera<S>> m;
    for (const auto& c : cameras) m.emplace(c.id, c);
    return m;
  }

  std::filesystem::path resolve(const std::string& rel) const { return dir / rel; }

  Image<S> load_image(std::size_t frame) const {
    if (frame >= frames.size()) throw UsageError("load_image: frame index out of range");
    return read_pnm<S>(resolve(frames[frame].image).string());
  }

  /// Ascending unique frame times.
  std::vector<S> frame_times() const {
    std::vector<S> t;
    for (const auto& f : frames) t.push_back(f.time);
    std::sort(t.begin(), t.end());
    t.erase(std::unique(t.begin(), t.end()), t.end());
    return t;
  }

  void validate(bool check_files = true) const {
    if (cameras.empty()) throw DataError("scene '" + name + "': no cameras declared");
    std::map<std::string, int> ids;
    for (const auto& c : cameras) {
      c.validate();
      if (++ids[c.id] > 1) throw DataError("scene '" + name + "': duplicate camera id '" + c.id + "'");
    }
    for (std::size_t i = 0; i < frames.size(); ++i) {
      const auto& f = frames[i];
      if (!ids.count(f.camera))
        throw DataError("scene '" + name + "': frame " + std::to_string(i) +
                        " references undeclared camera '" + f.camera + "'");
      if (!(f.time >= S(0) && f.time <= S(1)))
        throw DataError("scene '" + name + "': frame " + std::to_string(i) +
                        " has time outside [0, 1]");
      if (check_files && !std::filesystem::exists(resolve(f.image)))
        throw DataError("scene '" + name + "': missing image file '" + f.image + "'");
      if (check_files && !f.mask.empty() && !std::filesystem::exists(resolve(f.mask)))
        throw DataError("scene '" + name + "': missing mask file '" + f.mask + "'");
    }
    for (const auto& id : train_cameras)
      if (!ids.count(id)) throw DataError("scene '" + name + "': unknown train camera '" + id + "'");
    for (const auto& id : test_cameras)
      if (!ids.count(id)) throw DataError("scene '" + name + "': unknown test camera '" + id + "'");
  }
};

namespace detail {

template <class S>
Json camera_to_json(const Camera<S>& c) {
  Json j;
  j["id"] = c.id;
  j["fx"] = double(c.fx);
  j["fy"] = double(c.fy);
  j["cx"] = double(c.cx);
  j["cy"] = double(c.cy);
  j["width"] = c.width;
  j["height"] = c.height;
  std::vector<double> r;
  for (int row = 0; row < 3; ++row)
    for (int col = 0; col < 3; ++col) r.push_back(double(c.rotation(row, col)));
  j["rotation"] = r;
  j["translation"] = std::vector<double>{double(c.translation[0]), double(c.translation[1]),
                                         double(c.translation[2])};
  return j;
}

template <class S>
Camera<S> camera_from_json(const Json& j) {
  Camera<S> c;
  c.id = j.at("id").get<std::string>();
  c.fx = S(j.at("fx").get<double>());
  c.fy = S(j.at("fy").get<double>());
  c.cx = S(j.at("cx").get<double>());
  c.cy = S(j.at("cy").get<double>());
  c.width = j.at("width").get<int>();
  c.height = j.at("height").get<int>();
  const auto r = j.at("rotation").get<std::vector<double>>();
  if (r.size() != 9) throw DataError("camera '" + c.id + "': rotation needs 9 row-major entries");
  for (int row = 0; row < 3; ++row)
    for (int col = 0; col < 3; ++col) c.rotation(row, col) = S(r[std::size_t(row * 3 + col)]);
  const auto t = j.at("translation").get<std::vector<double>>();
  if (t.size() != 3) throw DataError("camera '" + c.id + "': translation needs 3 entries");
  for (int k = 0; k < 3; ++k) c.translation[k] = S(t[std::size_t(k)]);
  return c;
}

}  // namespace detail

/// Writes the manifest file (images and side files are not touched).
template <class S>
void save_scene(const Scene<S>& scene, const std::string& manifest_path) {
  Json j;
  j["name"] = scene.name;
  j["frame_count"] = scene.frame_count;
  j["fps"] = scene.fps;
  Json cams = Json::array();
  for (const auto& c : scene.cameras) cams.push_back(detail::camera_to_json(c));
  j["cameras"] = cams;
  Json frames = Json::array();
  for (const auto& f : scene.frames) {
    Json jf;
    jf["camera"] = f.camera;
    jf["time"] = double(f.time);
    jf["image"] = f.image;
    if (!f.mask.empty()) jf["mask"] = f.mask;
    frames.push_back(jf);
  }
  j["frames"] = frames;
  j["train_cameras"] = scene.train_cameras;
  j["test_cameras"] = scene.test_cameras;
  if (!scene.correspondences.empty()) j["correspondences"] = scene.correspondences;
  if (!scene.ground_truth.empty()) j["ground_truth"] = scene.ground_truth;
  if (scene.has_bounds) {
    j["bounds"] = Json{{"lo",
                        std::vector<double>{double(scene.bounds_lo[0]), double(scene.bounds_lo[1]),
                                            double(scene.bounds_lo[2])}},
                       {"hi",
                        std::vector<double>{double(scene.bounds_hi[0]), double(scene.bounds_hi[1]),
                                            double(scene.bounds_hi[2])}}};
  }
  std::ofstream out(manifest_path);
  if (!out) throw DataError("cannot write manifest '" + manifest_path + "'");
  out << j.dump(2) << "\n";
}

/// Parses and validates a manifest; image files must exist but are decoded
/// lazily through Scene::load_image.
template <class S>
Scene<S> load_scene(const std::string& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw DataError("cannot open manifest '" + manifest_path + "'");
  Json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw DataError("manifest '" + manifest_path + "': " + e.what());
  }
  Scene<S> scene;
  scene.dir = std::filesystem::path(manifest_path).parent_path();
  try {
    scene.name = j.at("name").get<std::string>();
    scene.frame_count = j.at("frame_count").get<int>();
    scene.fps = j.at("fps").get<double>();
    for (const auto& jc : j.at("cameras")) scene.cameras.push_back(detail::camera_from_json<S>(jc));
    for (const auto& jf : j.at("frames")) {
      FrameRef<S> f;
      f.camera = jf.at("camera").get<std::string>();
      f.time = S(jf.at("time").get<double>());
      f.image = jf.at("image").get<std::string>();
      if (jf.contains("mask")) f.mask = jf.at("mask").get<std::string>();
      scene.frames.push_back(f);
    }
    scene.train_cameras = j.at("train_cameras").get<std::vector<std::string>>();
    scene.test_cameras = j.at("test_cameras").get<std::vector<std::string>>();
    if (j.contains("correspondences")) scene.correspondences = j["correspondences"].get<std::string>();
    if (j.contains("ground_truth")) scene.ground_truth = j["ground_truth"].get<std::string>();
    if (j.contains("bounds")) {
      const auto lo = j["bounds"].at("lo").get<std::vector<double>>();
      const auto hi = j["bounds"].at("hi").get<std::vector<double>>();
      if (lo.size() != 3 || hi.size() != 3) throw DataError("bounds need 3 entries each");
      for (int k = 0; k < 3; ++k) {
        scene.bounds_lo[k] = S(lo[std::size_t(k)]);
        scene.bounds_hi[k] = S(hi[std::size_t(k)]);
      }
      scene.has_bounds = true;
    }
  } catch (const Json::exception& e) {
    throw DataError("manifest '" + manifest_path + "': " + e.what());
  }
  scene.validate(true);
  return scene;
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

inline constexpr char kCheckpointMagic[] = "GS4DCKPT1";
inline constexpr int kCheckpointVersion = 1;

template <class S>
struct Checkpoint {
  int version = kCheckpointVersion;
  GaussianSet<S> set;
  std::map<std::string, std::string> config;  // training configuration snapshot
  std::int64_t iteration = 0;
  std::string rng_state;
};

static_assert(std::endian::native == std::endian::little,
              "checkpoint blobs are little-endian; this platform is not");

/// Layout: one magic line, one line of JSON metadata (field names, shapes,
/// byte offsets), then tightly packed little-endian float32 blobs in the
/// declared field order. Saving after loading reproduces the bytes exactly.
template <class S>
void save_checkpoint(const Checkpoint<S>& ckpt, const std::string& path) {
  Json header;
  header["version"] = ckpt.version;
  header["count"] = ckpt.set.count;
  header["sh_degree"] = ckpt.set.sh_degree;
  header["iteration"] = ckpt.iteration;
  header["rng_state"] = ckpt.rng_state;
  header["config"] = ckpt.config;
  Json fields = Json::array();
  std::int64_t offset = 0;
  for_each_field([&](Field f) {
    const int comps = field_components(f, ckpt.set.basis_count());
    Json jf;
    jf["name"] = field_name(f);
    jf["shape"] = std::vector<std::int64_t>{ckpt.set.count, comps};
    jf["dtype"] = "f32";
    jf["offset"] = offset;
    offset += std::int64_t(ckpt.set.count) * comps * 4;
    fields.push_back(jf);
  });
  header["fields"] = fields;

  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint '" + path + "'");
  out << kCheckpointMagic << "\n" << header.dump() << "\n";
  for_each_field([&](Field f) {
    const auto& src = ckpt.set.array(f);
    std::vector<float> buf(src.size());
    for (std::size_t i = 0; i < src.size(); ++i) buf[i] = float(src[i]);
    out.write(reinterpret_cast<const char*>(buf.data()),
              std::streamsize(buf.size() * sizeof(float)));
  });
  if (!out) throw DataError("writing checkpoint '" + path + "' failed");
}

template <class S>
Checkpoint<S> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint '" + path + "'");
  std::string magic, header_line;
  if (!std::getline(in, magic) || magic != kCheckpointMagic)
    throw DataError("checkpoint '" + path + "': bad magic line");
  if (!std::getline(in, header_line)) throw DataError("checkpoint '" + path + "': missing header");
  Json header;
  try {
    header = Json::parse(header_line);
  } catch (const std::exception& e) {
    throw DataError("checkpoint '" + path + "': header parse error: " + e.what());
  }

  Checkpoint<S> ckpt;
  try {
    ckpt.version = header.at("version").get<int>();
    if (ckpt.version != kCheckpointVersion)
      throw DataError("checkpoint '" + path + "': unsupported version " +
                      std::to_string(ckpt.version));
    const int count = header.at("count").get<int>();
    const int degree = header.at("sh_degree").get<int>();
    ckpt.iteration = header.at("iteration").get<std::int64_t>();
    ckpt.rng_state = header.at("rng_state").get<std::string>();
    if (header.contains("config"))
      ckpt.config = header["config"].get<std::map<std::string, std::string>>();
    ckpt.set.resize(count, degree);

    const std::streampos blob_start = in.tellg();
    in.seekg(0, std::ios::end);
    const std::int64_t blob_bytes = std::int64_t(in.tellg() - blob_start);

    const auto& fields = header.at("fields");
    if (fields.size() != std::size_t(kFieldCount))
      throw DataError("checkpoint '" + path + "': expected " + std::to_string(kFieldCount) +
                      " fields, found " + std::to_string(fields.size()));
    std::int64_t expect_offset = 0;
    std::size_t idx = 0;
    for_each_field([&](Field f) {
      const auto& jf = fields.at(idx++);
      const std::string name = jf.at("name").get<std::string>();
      if (name != field_name(f))
        throw DataError("checkpoint '" + path + "': field '" + name + "' out of order, expected '" +
                        field_name(f) + "'");
      const auto shape = jf.at("shape").get<std::vector<std::int64_t>>();
      const int comps = field_components(f, ckpt.set.basis_count());
      if (shape.size() != 2 || shape[0] != count || shape[1] != comps)
        throw DataError("checkpoint '" + path + "': field '" + name + "' has inconsistent shape");
      if (jf.at("dtype").get<std::string>() != "f32")
        throw DataError("checkpoint '" + path + "': field '" + name + "' has unsupported dtype");
      if (jf.at("offset").get<std::int64_t>() != expect_offset)
        throw DataError("checkpoint '" + path + "': field '" + name + "' has inconsistent offset");

      auto& dst = ckpt.set.array(f);
      std::vector<float> buf(dst.size());
      in.seekg(blob_start + std::streampos(expect_offset));
      in.read(reinterpret_cast<char*>(buf.data()), std::streamsize(buf.size() * sizeof(float)));
      if (!in) throw DataError("checkpoint '" + path + "': truncated in field '" + name + "'");
      for (std::size_t i = 0; i < buf.size(); ++i) dst[i] = S(buf[i]);
      expect_offset += std::int64_t(buf.size()) * 4;
    });
    if (expect_offset != blob_bytes)
      throw DataError("checkpoint '" + path + "': blob section has " + std::to_string(blob_bytes) +
                      " bytes, layout declares " + std::to_string(expect_offset));
  } catch (const Json::exception& e) {
    throw DataError("checkpoint '" + path + "': header error: " + e.what());
  }
  ckpt.set.validate();
  return ckpt;
}

// ---------------------------------------------------------------------------
// Synthetic scenes
// ---------------------------------------------------------------------------

enum class SyntheticPreset { StaticBlobs, MovingBlobs, CrossingBlobs };

inline const char* preset_name(SyntheticPreset p) {
  switch (p) {
    case SyntheticPreset::StaticBlobs: return "static-blobs";
    case SyntheticPreset::MovingBlobs: return "moving-blobs";
    case SyntheticPreset::CrossingBlobs: return "crossing-blobs";
  }
  return "?";
}

inline SyntheticPreset parse_preset(const std::string& s) {
  if (s == "static-blobs") return SyntheticPreset::StaticBlobs;
  if (s == "moving-blobs") return SyntheticPreset::MovingBlobs;
  if (s == "crossing-blobs") return SyntheticPreset::CrossingBlobs;
  throw UsageError("unknown preset '" + s +
                   "' (choose static-blobs, moving-blobs, or crossing-blobs)");
}

template <class S>
struct SyntheticConfig {
  SyntheticPreset preset = SyntheticPreset::MovingBlobs;
  std::uint64_t seed = 1;
  int cameras = 6;  // ring around the scene; the last one is the test view
  int frames = 24;
  double fps = 24.0;
  int width = 64, height = 64;
  S focal = S(100);
  S ring_radius = S(2.5);
  int blob_count = 48;
  int sh_degree = 0;

  void validate() const {
    if (cameras < 2) throw UsageError("synthetic scenes need at least 2 cameras");
    if (frames < 1 || blob_count < 2 || width < 16 || height < 16)
      throw UsageError("synthetic scene dimensions out of range");
  }
};

template <class S>
struct SyntheticScene {
  Scene<S> scene;
  GaussianSet<S> ground_truth;  // as stored (float32-rounded)
};

namespace detail {

template <class S>
GaussianSet<S> synthetic_blobs(const SyntheticConfig<S>& cfg, Rng& rng) {
  GaussianSet<S> set;
  set.resize(cfg.blob_count, cfg.sh_degree);
  const int b = set.basis_count();
  const bool moving = cfg.preset != SyntheticPreset::StaticBlobs;
  const double pos_range = moving ? 0.5 : 0.6;
  for (int i = 0; i < cfg.blob_count; ++i) {
    for (int k = 0; k < 3; ++k)
      set.position[std::size_t(i) * 3 + k] = S(rng.uniform(-pos_range, pos_range));
    set.time[i] = S(0.5);
    set.duration_log[i] = S(std::log(20.0));  // persistent across the whole clip
    const double base = rng.uniform(0.05, 0.12);
    double max_scale = 0.0;
    for (int k = 0; k < 3; ++k) {
      const double s = base * rng.uniform(0.8, 1.25);
      set.scale_log[std::size_t(i) * 3 + k] = S(std::log(s));
      max_scale = std::max(max_scale, s);
    }
    if (moving) {
      Vec3<S> dir(S(rng.normal()), S(rng.normal()), S(rng.normal()));
      const S n = dir.norm();
      if (n > S(1e-9)) dir /= n;
      // Every blob travels more than twice its own radius over the clip, so
      // the scene is unambiguously dynamic.
      const S mag = S(rng.uniform(2.2, 3.5) * max_scale);
      for (int k = 0; k < 3; ++k) set.velocity[std::size_t(i) * 3 + k] = dir[k] * mag;
    }
    Vec4<double> q(rng.normal(), rng.normal(), rng.normal(), rng.normal());
    q.normalize();
    for (int k = 0; k < 4; ++k) set.rotation_q[std::size_t(i) * 4 + k] = S(q[k]);
    set.opacity_logit[i] = logit(S(rng.uniform(0.6, 0.95)));
    for (int ch = 0; ch < 3; ++ch)
      set.sh[(std::size_t(i) * 3 + std::size_t(ch)) * std::size_t(b)] =
          S(rng.uniform(0.15, 0.95)) / S(kSh0);
  }
  if (cfg.preset == SyntheticPreset::CrossingBlobs && cfg.blob_count >= 2) {
    // Two blobs pass within a blob radius of each other at t = 0.5.
    for (int i = 0; i < 2; ++i) {
      const S side = i == 0 ? S(-1) : S(1);
      set.position[std::size_t(i) * 3 + 0] = side * S(0.02);
      set.position[std::size_t(i) * 3 + 1] = S(0);
      set.position[std::size_t(i) * 3 + 2] = S(0);
      set.velocity[std::size_t(i) * 3 + 0] = -side * S(0.8);
      set.velocity[std::size_t(i) * 3 + 1] = S(0);
      set.velocity[std::size_t(i) * 3 + 2] = S(0);
      for (int k = 0; k < 3; ++k) set.scale_log[std::size_t(i) * 3 + k] = S(std::log(0.1));
    }
  }
  set.validate();
  return set;
}

}  // namespace detail

/// Builds a blob scene, renders every (camera, frame) image, and writes a
/// complete dataset directory: images/, manifest.json, correspondences.txt
/// (projected blob centers in the training views), and the generating set as
/// a checkpoint for oracle comparisons. Rendering uses the float32-rounded
/// stored set so a re-render from the saved file is bit-identical.
template <class S>
SyntheticScene<S> generate_synthetic_scene(const SyntheticConfig<S>& cfg,
                                           const std::string& out_dir) {
  cfg.validate();
  Rng rng(cfg.seed);
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(out_dir) / "images");

  GaussianSet<S> built = detail::synthetic_blobs(cfg, rng);

  Checkpoint<S> gt;
  gt.set = std::move(built);
  gt.config["preset"] = preset_name(cfg.preset);
  gt.config["seed"] = std::to_string(cfg.seed);
  gt.iteration = 0;
  gt.rng_state = rng.state();
  const std::string gt_path = (fs::path(out_dir) / "gt.gsc").string();
  save_checkpoint(gt, gt_path);
  GaussianSet<S> stored = load_checkpoint<S>(gt_path).set;  // float32-rounded

  Scene<S> scene;
  scene.name = preset_name(cfg.preset);
  scene.frame_count = cfg.frames;
  scene.fps = cfg.fps;
  scene.ground_truth = "gt.gsc";
  scene.correspondences = "correspondences.txt";
  for (int c = 0; c < cfg.cameras; ++c) {
    const double a = 2.0 * M_PI * double(c) / double(cfg.cameras);
    const S elev = (c % 2 == 0) ? S(0.3) : S(-0.2);
    const Vec3<S> pos(cfg.ring_radius * S(std::sin(a)), elev, cfg.ring_radius * S(std::cos(a)));
    const Vec3<S> target = Vec3<S>::Zero();
    scene.cameras.push_back(make_look_at_camera<S>("cam" + std::to_string(c), cfg.focal, cfg.focal,
                                                   cfg.width, cfg.height, pos, target));
    if (c + 1 < cfg.cameras)
      scene.train_cameras.push_back(scene.cameras.back().id);
    else
      scene.test_cameras.push_back(scene.cameras.back().id);
  }

  std::vector<S> times;
  for (int i = 0; i < cfg.frames; ++i)
    times.push_back(cfg.frames == 1 ? S(0) : S(i) / S(cfg.frames - 1));

  // Scene bounds: the swept blob positions padded by three peak scales.
  S max_scale = S(0);
  for (S v : stored.scale_log) max_scale = std::max(max_scale, std::exp(v));
  scene.bounds_lo = Vec3<S>::Constant(std::numeric_limits<S>::max());
  scene.bounds_hi = Vec3<S>::Constant(std::numeric_limits<S>::lowest());
  for (int i = 0; i < stored.count; ++i) {
    const auto g = activate(stored, i);
    for (S t : {times.front(), times.back()}) {
      const Vec3<S> p = motion_position(g, t);
      scene.bounds_lo = scene.bounds_lo.cwiseMin(p);
      scene.bounds_hi = scene.bounds_hi.cwiseMax(p);
    }
  }
  scene.bounds_lo -= Vec3<S>::Constant(3 * max_scale);
  scene.bounds_hi += Vec3<S>::Constant(3 * max_scale);
  scene.has_bounds = true;

  const Vec3<S> background = Vec3<S>::Zero();
  RasterConfig<S> rcfg;
  char frame_name[64];
  for (const auto& cam : scene.cameras) {
    for (int i = 0; i < cfg.frames; ++i) {
      const auto out = render(stored, cam, times[std::size_t(i)], background, rcfg);
      std::snprintf(frame_name, sizeof(frame_name), "images/%s_f%03d.ppm", cam.id.c_str(), i);
      write_pnm(out.rgb, (fs::path(out_dir) / frame_name).string());
      FrameRef<S> fr;
      fr.camera = cam.id;
      fr.time = times[std::size_t(i)];
      fr.image = frame_name;
      scene.frames.push_back(fr);
    }
  }

  // Exact blob-center correspondences in the training views.
  std::ofstream corr((fs::path(out_dir) / scene.correspondences).string());
  corr.precision(17);
  for (S t : times) {
    for (int i = 0; i < stored.count; ++i) {
      const auto g = activate(stored, i);
      const Vec3<S> p = motion_position(g, t);
      std::vector<std::pair<std::string, Vec2<S>>> views;
      for (const auto& id : scene.train_cameras) {
        const auto& cam = scene.camera(id);
        const auto proj = project_point(cam, p);
        if (!proj.valid) continue;
        if (proj.pixel.x() < S(0) || proj.pixel.x() >= S(cam.width) || proj.pixel.y() < S(0) ||
            proj.pixel.y() >= S(cam.height))
          continue;
        views.emplace_back(id, proj.pixel);
      }
      if (views.size() < 2) continue;
      corr << double(t);
      for (const auto& [id, px] : views) corr << " " << id << " " << px.x() << " " << px.y();
      corr << "\n";
    }
  }
  corr.close();

  save_scene(scene, (fs::path(out_dir) / "manifest.json").string());
  SyntheticScene<S> result;
  result.scene = load_scene<S>((fs::path(out_dir) / "manifest.json").string());
  result.ground_truth = std::move(stored);
  return result;
}

}  // namespace gs4d
