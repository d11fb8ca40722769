#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "gs4d/evaluate.hpp"
#include "gs4d/train.hpp"
#include "test_util.hpp"

using namespace gs4d;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::path("train_tmp") / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

SyntheticScene<double> tiny_scene(const std::string& dir_name, SyntheticPreset preset,
                                  std::uint64_t seed) {
  SyntheticConfig<double> cfg;
  cfg.preset = preset;
  cfg.seed = seed;
  cfg.cameras = 3;
  cfg.frames = 4;
  cfg.blob_count = 12;
  cfg.width = cfg.height = 32;
  return generate_synthetic_scene(cfg, fresh_dir(dir_name).string());
}

}  // namespace

TEST_CASE("config registry applies precedence and rejects unknown keys") {
  auto cfg = default_config();
  CHECK(cfg.get_double("loss.l1") == 0.8);
  CHECK(cfg.get_double("loss.ssim") == 0.2);
  CHECK(cfg.get_double("loss.reg") == 0.01);
  CHECK(cfg.get_int("relocate.period") == 100);
  CHECK(cfg.get_double("relocate.dead_threshold") == 0.005);
  CHECK(cfg.get_double("schedule.velocity_lambda0") == 1.0);
  CHECK(cfg.get_double("schedule.velocity_lambda1") == 0.01);
  CHECK(cfg.get_double("lr.opacity") == 0.05);
  CHECK(cfg.get_double("lr.scale") == 0.005);
  CHECK(cfg.get_double("lr.rotation") == 0.001);
  CHECK(cfg.get_double("lr.sh") == 0.0025);
  CHECK(cfg.get_double("lr.time") == 0.0001);
  CHECK(cfg.get_double("lr.duration") == 0.002);
  CHECK(cfg.get_double("lr.velocity") == 0.001);
  CHECK(cfg.get_int("raster.tile") == 16);
  CHECK(cfg.get_double("raster.opacity_cutoff") == Catch::Approx(1.0 / 255.0).epsilon(1e-12));
  CHECK(cfg.get_int("init.max_points_per_frame") == 20000);

  CHECK_THROWS_AS(cfg.set("no.such.key", "1"), UsageError);
  CHECK_THROWS_AS(cfg.set_pair("garbage"), UsageError);
  cfg.set_pair("loss.l1=0.5");
  CHECK(cfg.get_double("loss.l1") == 0.5);

  const auto dir = fresh_dir("config");
  std::ofstream((dir / "c.json")) << R"({"loss.l1": 0.7, "train.iterations": 123})";
  auto cfg2 = default_config();
  cfg2.load_file((dir / "c.json").string());
  CHECK(cfg2.get_double("loss.l1") == 0.7);
  CHECK(cfg2.get_int("train.iterations") == 123);
  cfg2.set_pair("loss.l1=0.6");  // overrides beat the file
  CHECK(cfg2.get_double("loss.l1") == 0.6);

  std::ofstream((dir / "bad.json")) << R"({"loss.unknown": 1})";
  auto cfg3 = default_config();
  CHECK_THROWS_AS(cfg3.load_file((dir / "bad.json").string()), UsageError);

  SECTION("typed getters validate") {
    auto c = default_config();
    c.set("loss.l1", "abc");
    CHECK_THROWS_AS(c.get_double("loss.l1"), UsageError);
    c.set("deterministic", "maybe");
    CHECK_THROWS_AS(c.get_bool("deterministic"), UsageError);
  }
  SECTION("the perceptual weight is pinned to zero") {
    auto c = default_config();
    c.set("loss.perceptual", "0.01");
    CHECK_THROWS_AS(make_train_options<double>(c), UsageError);
  }
  SECTION("help text names every key") {
    const auto help = default_config().help_text();
    CHECK(help.find("loss.l1") != std::string::npos);
    CHECK(help.find("relocate.period") != std::string::npos);
    CHECK(help.find("raster.tile") != std::string::npos);
  }
}

TEST_CASE("regularizer window is full, fading, then off") {
  LossWeights<double> w;
  CHECK(reg_weight_at(w, 0.0) == 0.01);
  CHECK(reg_weight_at(w, 0.49) == 0.01);
  CHECK(reg_weight_at(w, 0.55) == Catch::Approx(0.005).epsilon(1e-12));
  // 0.5 + 0.1 lands one ulp past 0.6 in binary, so the fade endpoint is only
  // zero to rounding there and exactly zero beyond it.
  CHECK(reg_weight_at(w, 0.6) <= 1e-16);
  CHECK(reg_weight_at(w, 0.6000001) == 0.0);
  CHECK(reg_weight_at(w, 0.9) == 0.0);
}

TEST_CASE("training rates decay position geometrically and anneal velocity") {
  auto synth = tiny_scene("rates", SyntheticPreset::MovingBlobs, 21);
  auto cfg = default_config();
  cfg.set("train.scene_extent", "2");
  auto opt = make_train_options<double>(cfg);
  Rng rng(1);
  auto init = initialize_primitives(synth.scene, opt, rng);
  Trainer<double> tr(synth.scene, init, opt);
  CHECK(tr.scene_extent() == 2.0);
  const auto r0 = tr.rates_at(0.0);
  const auto rh = tr.rates_at(0.5);
  const auto r1 = tr.rates_at(1.0);
  CHECK(r0[Field::Position] == Catch::Approx(2 * 1.6e-4).epsilon(1e-12));
  CHECK(r1[Field::Position] == Catch::Approx(2 * 1.6e-6).epsilon(1e-9));
  CHECK(rh[Field::Position] == Catch::Approx(2 * std::sqrt(1.6e-4 * 1.6e-6)).epsilon(1e-9));
  CHECK(r0[Field::Velocity] == Catch::Approx(1e-3).epsilon(1e-12));
  CHECK(r1[Field::Velocity] == Catch::Approx(1e-5).epsilon(1e-9));
  CHECK(rh[Field::Velocity] == Catch::Approx(1e-4).epsilon(1e-9));
  CHECK(r0[Field::Opacity] == 0.05);

  SECTION("disabling motion zeroes the velocity rate and the velocities") {
    auto cfg2 = default_config();
    cfg2.set("train.disable_velocity", "true");
    auto opt2 = make_train_options<double>(cfg2);
    Trainer<double> tr2(synth.scene, init, opt2);
    CHECK(tr2.rates_at(0.0)[Field::Velocity] == 0.0);
    for (double v : tr2.set().velocity) CHECK(v == 0.0);
  }
}

TEST_CASE("correspondence initialization beats random initialization") {
  auto synth = tiny_scene("init_modes", SyntheticPreset::MovingBlobs, 33);
  auto cfg = default_config();
  auto opt = make_train_options<double>(cfg);
  Rng rng(2);
  auto seeded = initialize_primitives(synth.scene, opt, rng);
  CHECK(seeded.count > 10);
  seeded.validate();

  auto no_corr = synth.scene;
  no_corr.correspondences.clear();
  cfg.set("init.random_count", "64");
  auto opt2 = make_train_options<double>(cfg);
  Rng rng2(2);
  auto random = initialize_primitives(no_corr, opt2, rng2);
  CHECK(random.count == 64);
  random.validate();

  // First-frame loss: the triangulated start must be strictly better.
  const auto& fr = synth.scene.frames[0];
  const auto gt_img = synth.scene.load_image(0);
  RasterConfig<double> rc;
  const Vec3<double> bg = Vec3<double>::Zero();
  LossWeights<double> lw;
  const auto o1 = render(seeded, synth.scene.camera(fr.camera), fr.time, bg, rc);
  const auto o2 = render(random, synth.scene.camera(fr.camera), fr.time, bg, rc);
  const double l1 = loss_render(o1.rgb, gt_img, lw).value;
  const double l2 = loss_render(o2.rgb, gt_img, lw).value;
  CHECK(l1 < l2);

  SECTION("random initialization without bounds is rejected") {
    auto bare = no_corr;
    bare.has_bounds = false;
    Rng r(3);
    CHECK_THROWS_AS(initialize_primitives(bare, opt2, r), DataError);
  }
  SECTION("an explicit correspondence mode without a file is rejected") {
    auto c = default_config();
    c.set("init.mode", "correspondences");
    auto o = make_train_options<double>(c);
    Rng r(3);
    CHECK_THROWS_AS(initialize_primitives(no_corr, o, r), DataError);
  }
}

TEST_CASE("a black scene fit by an invisible set is a training fixed point") {
  const auto dir = fresh_dir("blackfit");
  fs::create_directories(dir / "images");
  Image<double> black(24, 24, 3);
  for (auto& v : black.data) v = 0.0;
  write_pnm(black, (dir / "images" / "f0.ppm").string());

  Scene<double> scene;
  scene.name = "black";
  scene.frame_count = 1;
  scene.fps = 1.0;
  scene.cameras.push_back(make_look_at_camera<double>("cam0", 30.0, 30.0, 24, 24,
                                                      Vec3<double>(0, 0, -3), Vec3<double>::Zero()));
  FrameRef<double> fr;
  fr.camera = "cam0";
  fr.time = 0.0;
  fr.image = "images/f0.ppm";
  scene.frames.push_back(fr);
  scene.train_cameras = {"cam0"};
  scene.dir = dir;
  scene.validate();

  // One primitive far outside every temporal window: nothing renders, the
  // prediction equals the black ground truth exactly, and with the
  // regularizer window elapsed every Adam update is exactly zero.
  GaussianSet<double> set;
  set.resize(1, 0);
  set.position[2] = 5.0;
  set.time[0] = 0.99;
  set.duration_log[0] = std::log(0.01);
  set.rotation_q[0] = 1.0;
  set.opacity_logit[0] = logit(0.5);
  set.scale_log[0] = set.scale_log[1] = set.scale_log[2] = std::log(0.05);

  auto cfg = default_config();
  cfg.set("loss.reg", "0");
  cfg.set("train.iterations", "5");
  cfg.set("relocate.enabled", "false");
  auto opt = make_train_options<double>(cfg);
  Trainer<double> tr(scene, set, opt);
  const auto before = tr.set().position;
  for (int i = 0; i < 5; ++i) {
    const auto entry = tr.step();
    CHECK(entry.loss == 0.0);
  }
  CHECK(tr.set().position == before);
  CHECK(tr.set().opacity_logit[0] == logit(0.5));
}

TEST_CASE("training strictly reduces loss on a synthetic scene") {
  auto synth = tiny_scene("descent", SyntheticPreset::StaticBlobs, 8);
  auto cfg = default_config();
  cfg.set("train.iterations", "400");
  cfg.set("seed", "5");
  auto opt = make_train_options<double>(cfg);
  Rng rng(5);
  auto init = initialize_primitives(synth.scene, opt, rng);
  Trainer<double> tr(synth.scene, init, opt, cfg.dump());

  double first_window = 0.0, last_window = 0.0;
  std::vector<double> losses;
  while (tr.iteration() < tr.total_iterations()) losses.push_back(tr.step().loss_image);
  REQUIRE(losses.size() == 400);
  for (int i = 0; i < 50; ++i) first_window += losses[std::size_t(i)];
  for (int i = 350; i < 400; ++i) last_window += losses[std::size_t(i)];
  CHECK(last_window < first_window);

  SECTION("the count never changes") { CHECK(tr.set().count == init.count); }
}

TEST_CASE("training is deterministic and resumable") {
  auto synth = tiny_scene("determin", SyntheticPreset::MovingBlobs, 13);
  auto cfg = default_config();
  cfg.set("train.iterations", "120");
  cfg.set("train.checkpoint_every", "60");
  cfg.set("train.log_every", "40");
  auto opt = make_train_options<double>(cfg);

  Rng rng_a(7), rng_b(7);
  auto init_a = initialize_primitives(synth.scene, opt, rng_a);
  auto init_b = initialize_primitives(synth.scene, opt, rng_b);

  std::vector<double> trace_a, trace_b;
  Trainer<double> a(synth.scene, init_a, opt, cfg.dump());
  Trainer<double> b(synth.scene, init_b, opt, cfg.dump());
  while (a.iteration() < a.total_iterations()) trace_a.push_back(a.step().loss);
  while (b.iteration() < b.total_iterations()) trace_b.push_back(b.step().loss);
  CHECK(trace_a == trace_b);

  const auto dir = fresh_dir("determin_out");
  save_checkpoint(a.checkpoint(), (dir / "a.gsc").string());
  save_checkpoint(b.checkpoint(), (dir / "b.gsc").string());
  CHECK(slurp(dir / "a.gsc") == slurp(dir / "b.gsc"));

  SECTION("a resumed trainer continues the iteration counter") {
    Rng rng_c(7);
    auto init_c = initialize_primitives(synth.scene, opt, rng_c);
    Trainer<double> c(synth.scene, init_c, opt, cfg.dump());
    for (int i = 0; i < 60; ++i) c.step();
    const auto mid = c.checkpoint();
    CHECK(mid.iteration == 60);
    save_checkpoint(mid, (dir / "mid.gsc").string());

    const auto loaded = load_checkpoint<double>((dir / "mid.gsc").string());
    Trainer<double> resumed(synth.scene, loaded.set, opt, cfg.dump(), loaded.iteration,
                            loaded.rng_state);
    CHECK(resumed.iteration() == 60);
    resumed.run();
    CHECK(resumed.iteration() == 120);
    CHECK(resumed.checkpoint().iteration == 120);
    // The frame-sampling stream continues where the saved run stopped.
    Rng replay(1);
    replay.set_state(loaded.rng_state);
    Rng gold(1);
    gold.set_state(mid.rng_state);
    CHECK(replay.uniform() == gold.uniform());
  }
}

TEST_CASE("run() drives logging and checkpoint callbacks") {
  auto synth = tiny_scene("callbacks", SyntheticPreset::StaticBlobs, 3);
  auto cfg = default_config();
  cfg.set("train.iterations", "90");
  cfg.set("train.log_every", "30");
  cfg.set("train.checkpoint_every", "45");
  auto opt = make_train_options<double>(cfg);
  Rng rng(4);
  auto init = initialize_primitives(synth.scene, opt, rng);
  Trainer<double> tr(synth.scene, init, opt);
  std::vector<std::int64_t> logged, saved;
  tr.run([&](const TrainLogEntry<double>& e) { logged.push_back(e.iteration); },
         [&](std::int64_t it) { saved.push_back(it); });
  CHECK(logged == std::vector<std::int64_t>{1, 30, 60, 90});
  CHECK(saved == std::vector<std::int64_t>{45, 90});
}

TEST_CASE("evaluation reports match direct metric computation") {
  auto synth = tiny_scene("eval", SyntheticPreset::MovingBlobs, 17);
  RasterConfig<double> rc;
  auto report = evaluate(synth.scene, synth.ground_truth, "test", rc);
  // Predictions are rounded to the 8-bit grid of the stored images, so the
  // ground truth scores exactly against its own dataset.
  CHECK(report.frames.size() == 4);  // one test camera, four frames
  for (const auto& m : report.frames) {
    CHECK(m.psnr == 99.0);
    CHECK(m.dssim1 == 0.0);
    CHECK(m.dssim2 == 0.0);
  }
  CHECK(report.mean_psnr == 99.0);

  std::ostringstream ss;
  write_report(report, ss);
  const std::string text = ss.str();
  CHECK(text.find("mean.psnr ") != std::string::npos);
  CHECK(text.find("frame.0.camera cam2") != std::string::npos);
  CHECK(text.find("split test") != std::string::npos);

  SECTION("an all-on mask equals unmasked evaluation") {
    auto masked_scene = synth.scene;
    Image<double> ones(32, 32, 1);
    for (auto& v : ones.data) v = 1.0;
    write_pnm(ones, masked_scene.resolve("mask_all.pgm").string());
    for (auto& fr : masked_scene.frames) fr.mask = "mask_all.pgm";
    auto masked = evaluate(masked_scene, synth.ground_truth, "test", rc);
    REQUIRE(masked.frames.size() == report.frames.size());
    for (std::size_t i = 0; i < masked.frames.size(); ++i) {
      CHECK(masked.frames[i].masked);
      CHECK(masked.frames[i].psnr == report.frames[i].psnr);
      CHECK(masked.frames[i].dssim1 == report.frames[i].dssim1);
    }
  }
  SECTION("a half mask crops to its bounding box") {
    auto masked_scene = synth.scene;
    Image<double> half(32, 32, 1);
    for (int y = 0; y < 32; ++y)
      for (int x = 0; x < 32; ++x) half.at(y, x, 0) = (y < 16 && x >= 4) ? 1.0 : 0.0;
    write_pnm(half, masked_scene.resolve("mask_half.pgm").string());
    for (auto& fr : masked_scene.frames) fr.mask = "mask_half.pgm";
    auto masked = evaluate(masked_scene, synth.ground_truth, "test", rc);
    CHECK(masked.frames[0].masked);
    CHECK(masked.frames[0].psnr > 40.0);
  }
  SECTION("empty splits are rejected") {
    auto s = synth.scene;
    s.test_cameras.clear();
    CHECK_THROWS_AS(evaluate(s, synth.ground_truth, "test", rc), DataError);
    CHECK_THROWS_AS(evaluate(synth.scene, synth.ground_truth, "validation", rc), UsageError);
  }
}
