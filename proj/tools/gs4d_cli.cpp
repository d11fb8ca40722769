// gs4d command-line front end: synthesize datasets, train, render, evaluate.
//
// Production runs use 32-bit float math throughout; the test suite exercises
// the same templates in double precision.

#include <CLI11.hpp>

#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "gs4d/gs4d.hpp"

namespace fs = std::filesystem;
using S = float;

namespace {

gs4d::ConfigMap build_config(const std::string& config_file,
                             const std::vector<std::string>& overrides, int threads_flag) {
  auto cfg = gs4d::default_config();
  if (!config_file.empty()) cfg.load_file(config_file);
  for (const auto& kv : overrides) cfg.set_pair(kv);
  if (threads_flag >= 0) cfg.set("threads", std::to_string(threads_flag));
  gs4d::set_global_threads(int(cfg.get_int("threads")));
  return cfg;
}

std::string format_log_entry(const gs4d::TrainLogEntry<S>& e) {
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "iter %" PRId64 " loss %.10g image %.10g reg %.10g count %d mean_opacity %.10g "
                "relocated %d",
                std::int64_t(e.iteration), double(e.loss), double(e.loss_image),
                double(e.loss_reg_weighted), int(e.count), double(e.mean_opacity),
                e.relocated ? 1 : 0);
  return buf;
}

int run_synth(const std::string& preset, std::uint64_t seed, const std::string& out, int cameras,
              int frames, double fps, int width, int height, double focal, double ring_radius,
              int blobs, int sh_degree) {
  gs4d::SyntheticConfig<S> sc;
  sc.preset = gs4d::parse_preset(preset);
  sc.seed = seed;
  sc.cameras = cameras;
  sc.frames = frames;
  sc.fps = S(fps);
  sc.width = width;
  sc.height = height;
  sc.focal = S(focal);
  sc.ring_radius = S(ring_radius);
  sc.blob_count = blobs;
  sc.sh_degree = sh_degree;
  const auto synth = gs4d::generate_synthetic_scene(sc, out);
  std::cout << "wrote scene '" << synth.scene.name << "' to " << out << " (cameras="
            << synth.scene.cameras.size() << ", frames=" << synth.scene.frames.size()
            << ", primitives=" << synth.ground_truth.count << ")\n";
  return 0;
}

int run_train(const std::string& scene_path, const std::string& out, const std::string& config_file,
              const std::vector<std::string>& overrides, const std::string& resume,
              int threads_flag) {
  auto cfg = build_config(config_file, overrides, threads_flag);
  const auto opt = gs4d::make_train_options<S>(cfg);
  const auto scene = gs4d::load_scene<S>(scene_path);

  gs4d::GaussianSet<S> init;
  std::int64_t start_iteration = 0;
  std::string rng_state;
  if (!resume.empty()) {
    auto ck = gs4d::load_checkpoint<S>(resume);
    init = std::move(ck.set);
    start_iteration = ck.iteration;
    rng_state = ck.rng_state;
  } else {
    gs4d::Rng rng(opt.seed);
    init = gs4d::initialize_primitives(scene, opt, rng);
  }

  fs::create_directories(out);
  std::ofstream log_file(fs::path(out) / "train.log");
  if (!log_file) throw gs4d::DataError("cannot open training log in " + out);

  gs4d::Trainer<S> trainer(scene, std::move(init), opt, cfg.dump(), start_iteration, rng_state);
  trainer.run(
      [&](const gs4d::TrainLogEntry<S>& e) {
        const std::string line = format_log_entry(e);
        log_file << line << '\n';
        log_file.flush();
        std::cout << line << '\n';
      },
      [&](std::int64_t iteration) {
        char name[32];
        std::snprintf(name, sizeof(name), "ckpt_%06" PRId64 ".gsc", iteration);
        gs4d::save_checkpoint(trainer.checkpoint(), (fs::path(out) / name).string());
      });
  const std::string final_path = (fs::path(out) / "final.gsc").string();
  gs4d::save_checkpoint(trainer.checkpoint(), final_path);
  std::cout << "final checkpoint: " << final_path << " (iteration " << trainer.iteration()
            << ", " << trainer.set().count << " primitives)\n";
  return 0;
}

int run_render(const std::string& checkpoint, const std::string& scene_path,
               const std::string& camera_id, const std::string& camera_json, double time,
               const std::string& out, const std::string& config_file,
               const std::vector<std::string>& overrides, int threads_flag) {
  if (time < 0.0 || time > 1.0) throw gs4d::UsageError("--time must lie in [0, 1]");
  auto cfg = build_config(config_file, overrides, threads_flag);
  const auto opt = gs4d::make_train_options<S>(cfg);

  gs4d::Camera<S> cam;
  if (!camera_json.empty()) {
    cam = gs4d::detail::camera_from_json<S>(nlohmann::json::parse(camera_json));
    cam.validate();
  } else if (!scene_path.empty() && !camera_id.empty()) {
    cam = gs4d::load_scene<S>(scene_path).camera(camera_id);
  } else {
    throw gs4d::UsageError("render needs either --camera-json or both --scene and --camera");
  }

  const auto ck = gs4d::load_checkpoint<S>(checkpoint);
  const gs4d::Vec3<S> background = gs4d::Vec3<S>::Zero();
  const auto outimg = gs4d::render(ck.set, cam, S(time), background, opt.raster);
  gs4d::write_pnm(outimg.rgb, out);
  std::cout << "wrote " << out << " (" << cam.width << "x" << cam.height << ", t=" << time
            << ")\n";
  return 0;
}

int run_eval(const std::string& checkpoint, const std::string& scene_path, const std::string& split,
             const std::string& out, const std::string& config_file,
             const std::vector<std::string>& overrides, int threads_flag) {
  auto cfg = build_config(config_file, overrides, threads_flag);
  const auto opt = gs4d::make_train_options<S>(cfg);
  const auto scene = gs4d::load_scene<S>(scene_path);
  const auto ck = gs4d::load_checkpoint<S>(checkpoint);
  const auto report = gs4d::evaluate(scene, ck.set, split, opt.raster);
  if (out.empty()) {
    gs4d::write_report(report, std::cout);
  } else {
    std::ofstream file(out);
    if (!file) throw gs4d::DataError("cannot open report file " + out);
    gs4d::write_report(report, file);
  }
  std::cout.precision(10);
  std::cout << "split " << report.split << ": frames " << report.frames.size() << ", mean psnr "
            << report.mean_psnr << ", mean dssim1 " << report.mean_dssim1 << ", mean dssim2 "
            << report.mean_dssim2 << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gs4d: differentiable 4D Gaussian splatting on the CPU"};
  app.require_subcommand(1);
  app.footer("Configuration keys accepted by --config files and --set overrides:\n" +
             gs4d::default_config().help_text());

  std::string config_file;
  std::vector<std::string> overrides;
  int threads_flag = -1;

  auto add_config_flags = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_file, "flat JSON file of configuration keys");
    cmd->add_option("--set", overrides, "override one key, as key=value (repeatable)");
    cmd->add_option("--threads", threads_flag, "worker threads; 0 uses the hardware count");
  };

  auto* synth = app.add_subcommand("synth", "generate a synthetic benchmark scene");
  std::string synth_preset = "moving-blobs", synth_out;
  std::uint64_t synth_seed = 1;
  int synth_cameras = 6, synth_frames = 24, synth_width = 64, synth_height = 64, synth_blobs = 48,
      synth_sh = 0;
  double synth_fps = 24.0, synth_focal = 100.0, synth_ring = 2.5;
  synth->add_option("--preset", synth_preset,
                    "static-blobs, moving-blobs, or crossing-blobs");
  synth->add_option("--seed", synth_seed, "generator seed");
  synth->add_option("--out", synth_out, "output directory")->required();
  synth->add_option("--cameras", synth_cameras, "ring cameras (last one is the test camera)");
  synth->add_option("--frames", synth_frames, "frames per camera");
  synth->add_option("--fps", synth_fps, "nominal frame rate stored in the manifest");
  synth->add_option("--width", synth_width, "image width in pixels");
  synth->add_option("--height", synth_height, "image height in pixels");
  synth->add_option("--focal", synth_focal, "focal length in pixels");
  synth->add_option("--ring-radius", synth_ring, "camera ring radius");
  synth->add_option("--blobs", synth_blobs, "number of Gaussian blobs");
  synth->add_option("--sh-degree", synth_sh, "spherical-harmonics degree of the ground truth");

  auto* train = app.add_subcommand("train", "optimize a primitive set against a scene");
  std::string train_scene, train_out, train_resume;
  train->add_option("--scene", train_scene, "scene manifest (JSON)")->required();
  train->add_option("--out", train_out, "output directory for checkpoints and the log")
      ->required();
  train->add_option("--resume", train_resume, "checkpoint to continue from");
  add_config_flags(train);

  auto* render = app.add_subcommand("render", "render one frame from a checkpoint");
  std::string render_ckpt, render_scene, render_camera, render_camera_json, render_out;
  double render_time = 0.0;
  render->add_option("--checkpoint", render_ckpt, "checkpoint to render")->required();
  render->add_option("--scene", render_scene, "manifest supplying --camera");
  render->add_option("--camera", render_camera, "camera id within --scene");
  render->add_option("--camera-json", render_camera_json,
                     "inline camera as manifest-schema JSON");
  render->add_option("--time", render_time, "normalized time in [0,1]")->required();
  render->add_option("--out", render_out, "output image (PPM)")->required();
  add_config_flags(render);

  auto* eval = app.add_subcommand("eval", "compute image metrics for a checkpoint");
  std::string eval_ckpt, eval_scene, eval_split = "test", eval_out;
  eval->add_option("--checkpoint", eval_ckpt, "checkpoint to evaluate")->required();
  eval->add_option("--scene", eval_scene, "scene manifest (JSON)")->required();
  eval->add_option("--split", eval_split, "train, test, or all");
  eval->add_option("--out", eval_out, "report file; omitted writes to stdout");
  add_config_flags(eval);

  try {
    app.parse(argc, argv);
    if (synth->parsed())
      return run_synth(synth_preset, synth_seed, synth_out, synth_cameras, synth_frames, synth_fps,
                       synth_width, synth_height, synth_focal, synth_ring, synth_blobs, synth_sh);
    if (train->parsed())
      return run_train(train_scene, train_out, config_file, overrides, train_resume, threads_flag);
    if (render->parsed())
      return run_render(render_ckpt, render_scene, render_camera, render_camera_json, render_time,
                        render_out, config_file, overrides, threads_flag);
    if (eval->parsed())
      return run_eval(eval_ckpt, eval_scene, eval_split, eval_out, config_file, overrides,
                      threads_flag);
    return 0;
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help and friends
    std::cerr << "error: " << e.what() << std::endl;
    return 1;
  } catch (const gs4d::UsageError& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 1;
  } catch (const gs4d::NumericError& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 3;
  } catch (const gs4d::DataError& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 2;
  }
}
