#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "gs4d/initfit.hpp"
#include "gs4d/scenedata.hpp"
#include "test_util.hpp"

using namespace gs4d;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::path("scenedata_tmp") / name;
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

GaussianSet<double> random_set(int count, int degree, std::uint64_t seed) {
  GaussianSet<double> set;
  set.resize(count, degree);
  Rng rng(seed);
  for (auto& x : set.position) x = rng.uniform(-1, 1);
  for (auto& x : set.time) x = rng.uniform(0, 1);
  for (auto& x : set.duration_log) x = rng.uniform(-2, 1);
  for (auto& x : set.velocity) x = rng.uniform(-0.5, 0.5);
  for (auto& x : set.scale_log) x = rng.uniform(-3, -1);
  for (auto& x : set.rotation_q) x = rng.normal();
  for (auto& x : set.opacity_logit) x = rng.uniform(-2, 2);
  for (auto& x : set.sh) x = rng.normal(0, 0.4);
  return set;
}

}  // namespace

TEST_CASE("checkpoints round-trip bit-exactly") {
  const auto dir = fresh_dir("ckpt");
  Checkpoint<double> ckpt;
  ckpt.set = random_set(17, 2, 42);
  ckpt.iteration = 1234;
  Rng rng(7);
  rng.normal();
  ckpt.rng_state = rng.state();
  ckpt.config = {{"train.iterations", "500"}, {"raster.tile", "16"}};

  const auto p1 = (dir / "a.gsc").string();
  const auto p2 = (dir / "b.gsc").string();
  save_checkpoint(ckpt, p1);
  auto loaded = load_checkpoint<double>(p1);
  CHECK(loaded.set.count == 17);
  CHECK(loaded.set.sh_degree == 2);
  CHECK(loaded.iteration == 1234);
  CHECK(loaded.rng_state == ckpt.rng_state);
  CHECK(loaded.config == ckpt.config);
  // Values survive as their float32 roundings.
  for_each_field([&](Field f) {
    const auto& a = ckpt.set.array(f);
    const auto& b = loaded.set.array(f);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(b[i] == double(float(a[i])));
  });
  // Saving the loaded checkpoint reproduces the file byte for byte.
  save_checkpoint(loaded, p2);
  CHECK(slurp(p1) == slurp(p2));

  SECTION("the rng state restores the deviate stream") {
    Rng replay(999);
    replay.set_state(loaded.rng_state);
    Rng fresh(7);
    fresh.normal();
    CHECK(replay.uniform() == fresh.uniform());
  }
}

TEST_CASE("checkpoint size follows the declared layout") {
  const auto dir = fresh_dir("ckpt_size");
  const int count = 100, degree = 1;
  Checkpoint<double> ckpt;
  ckpt.set = random_set(count, degree, 3);
  const auto p = (dir / "c.gsc").string();
  save_checkpoint(ckpt, p);
  const std::string bytes = slurp(p);
  const auto header_end = bytes.find('\n', bytes.find('\n') + 1) + 1;
  const int basis = (degree + 1) * (degree + 1);
  const std::size_t expect = std::size_t(count) * (3 + 1 + 1 + 3 + 3 + 4 + 1 + 3 * basis) * 4;
  CHECK(bytes.size() - header_end == expect);
}

TEST_CASE("checkpoint corruption is detected") {
  const auto dir = fresh_dir("ckpt_bad");
  Checkpoint<double> ckpt;
  ckpt.set = random_set(5, 0, 11);
  const auto p = (dir / "d.gsc").string();
  save_checkpoint(ckpt, p);
  const std::string bytes = slurp(p);

  SECTION("a corrupted field shape names the field") {
    const auto magic_end = bytes.find('\n') + 1;
    const auto header_end = bytes.find('\n', magic_end);
    auto header = Json::parse(bytes.substr(magic_end, header_end - magic_end));
    bool tweaked_one = false;
    for (auto& jf : header["fields"]) {
      if (jf["name"] == "velocity") {
        jf["shape"] = std::vector<int>{5, 4};
        tweaked_one = true;
      }
    }
    REQUIRE(tweaked_one);
    std::ofstream(p, std::ios::binary)
        << bytes.substr(0, magic_end) << header.dump() << bytes.substr(header_end);
    CHECK_THROWS_WITH(load_checkpoint<double>(p), Catch::Matchers::ContainsSubstring("velocity"));
  }
  SECTION("a version bump is rejected") {
    std::string tweaked = bytes;
    const auto pos = tweaked.find("\"version\":1");
    REQUIRE(pos != std::string::npos);
    tweaked.replace(pos, 11, "\"version\":9");
    std::ofstream(p, std::ios::binary) << tweaked;
    CHECK_THROWS_WITH(load_checkpoint<double>(p), Catch::Matchers::ContainsSubstring("version"));
  }
  SECTION("a truncated blob is rejected") {
    std::ofstream(p, std::ios::binary) << bytes.substr(0, bytes.size() - 10);
    CHECK_THROWS_AS(load_checkpoint<double>(p), DataError);
  }
  SECTION("a bad magic line is rejected") {
    std::ofstream(p, std::ios::binary) << ("X" + bytes);
    CHECK_THROWS_WITH(load_checkpoint<double>(p), Catch::Matchers::ContainsSubstring("magic"));
  }
}

TEST_CASE("scene manifests round-trip and validate") {
  const auto dir = fresh_dir("scene");
  fs::create_directories(dir / "images");

  // One white 4x4 image so file-existence and decoding checks have a target.
  Image<double> white(4, 4, 3);
  for (auto& v : white.data) v = 1.0;
  write_pnm(white, (dir / "images" / "f0.ppm").string());

  Scene<double> scene;
  scene.name = "mini";
  scene.frame_count = 1;
  scene.fps = 24.0;
  scene.cameras.push_back(make_look_at_camera<double>("cam0", 50.0, 50.0, 4, 4,
                                                      Vec3<double>(0, 0, -2),
                                                      Vec3<double>(0, 0, 0)));
  FrameRef<double> fr;
  fr.camera = "cam0";
  fr.time = 0.0;
  fr.image = "images/f0.ppm";
  scene.frames.push_back(fr);
  scene.train_cameras = {"cam0"};
  scene.has_bounds = true;
  scene.bounds_lo = Vec3<double>(-1, -1, -1);
  scene.bounds_hi = Vec3<double>(1, 1, 1);

  const auto manifest = (dir / "manifest.json").string();
  save_scene(scene, manifest);
  auto loaded = load_scene<double>(manifest);
  CHECK(loaded.name == "mini");
  CHECK(loaded.frame_count == 1);
  CHECK(loaded.fps == 24.0);
  REQUIRE(loaded.cameras.size() == 1);
  CHECK(loaded.cameras[0].id == "cam0");
  CHECK(loaded.cameras[0].fx == 50.0);
  CHECK((loaded.cameras[0].rotation - scene.cameras[0].rotation).cwiseAbs().maxCoeff() == 0.0);
  CHECK((loaded.cameras[0].translation - scene.cameras[0].translation).cwiseAbs().maxCoeff() == 0.0);
  REQUIRE(loaded.frames.size() == 1);
  CHECK(loaded.frames[0].camera == "cam0");
  CHECK(loaded.frames[0].image == "images/f0.ppm");
  CHECK(loaded.train_cameras == std::vector<std::string>{"cam0"});
  CHECK(loaded.has_bounds);
  CHECK(loaded.bounds_lo == Vec3<double>(-1, -1, -1));

  SECTION("a full byte of 255 decodes to exactly one") {
    auto img = loaded.load_image(0);
    CHECK(img.height == 4);
    CHECK(img.at(2, 2, 1) == 1.0);
  }
  SECTION("an undeclared frame camera is named in the error") {
    auto bad = loaded;
    bad.frames[0].camera = "ghost";
    CHECK_THROWS_WITH(bad.validate(), Catch::Matchers::ContainsSubstring("ghost"));
  }
  SECTION("frame times outside the unit range are rejected") {
    auto bad = loaded;
    bad.frames[0].time = 1.5;
    CHECK_THROWS_AS(bad.validate(), DataError);
  }
  SECTION("a missing image file is rejected at load") {
    auto bad = loaded;
    bad.frames[0].image = "images/absent.ppm";
    save_scene(bad, manifest);
    CHECK_THROWS_WITH(load_scene<double>(manifest), Catch::Matchers::ContainsSubstring("absent"));
  }
  SECTION("duplicate camera ids are rejected") {
    auto bad = loaded;
    bad.cameras.push_back(bad.cameras[0]);
    CHECK_THROWS_AS(bad.validate(false), DataError);
  }
}

TEST_CASE("static blob scenes have zero ground-truth velocity") {
  const auto dir = fresh_dir("synth_static");
  SyntheticConfig<double> cfg;
  cfg.preset = SyntheticPreset::StaticBlobs;
  cfg.seed = 5;
  cfg.cameras = 3;
  cfg.frames = 2;
  cfg.blob_count = 12;
  cfg.width = cfg.height = 32;
  auto synth = generate_synthetic_scene(cfg, dir.string());
  for (double v : synth.ground_truth.velocity) CHECK(v == 0.0);
  CHECK(synth.scene.frames.size() == 3 * 2);
  CHECK(synth.scene.train_cameras.size() == 2);
  CHECK(synth.scene.test_cameras.size() == 1);
}

TEST_CASE("synthetic datasets re-render bit-exactly from the stored set") {
  const auto dir = fresh_dir("synth_moving");
  SyntheticConfig<double> cfg;
  cfg.preset = SyntheticPreset::MovingBlobs;
  cfg.seed = 9;
  cfg.cameras = 3;
  cfg.frames = 4;
  cfg.blob_count = 16;
  cfg.width = cfg.height = 32;
  auto synth = generate_synthetic_scene(cfg, dir.string());

  const auto gt = load_checkpoint<double>(synth.scene.resolve(synth.scene.ground_truth).string());
  RasterConfig<double> rcfg;
  const Vec3<double> bg = Vec3<double>::Zero();
  for (std::size_t f = 0; f < synth.scene.frames.size(); ++f) {
    const auto& fr = synth.scene.frames[f];
    const auto out = render(gt.set, synth.scene.camera(fr.camera), fr.time, bg, rcfg);
    Image<std::uint8_t> expect(out.rgb.height, out.rgb.width, 3);
    for (std::size_t i = 0; i < out.rgb.data.size(); ++i)
      expect.data[i] = quantize_u8(out.rgb.data[i]);
    const auto disk = read_pnm<double>(synth.scene.resolve(fr.image).string());
    REQUIRE(disk.data.size() == out.rgb.data.size());
    for (std::size_t i = 0; i < disk.data.size(); ++i)
      CHECK(quantize_u8(disk.data[i]) == expect.data[i]);
  }

  SECTION("correspondences triangulate back to blob centers") {
    auto cams = synth.scene.camera_map();
    std::map<std::string, Camera<double>> train_cams;
    for (const auto& id : synth.scene.train_cameras) train_cams.emplace(id, cams.at(id));
    auto corr = read_correspondences_file<double>(
        synth.scene.resolve(synth.scene.correspondences).string(), train_cams);
    REQUIRE(corr.frames.size() > 0);
    int checked = 0;
    for (const auto& frame : corr.frames) {
      for (const auto& track : frame.tracks) {
        auto res = triangulate(track, train_cams);
        REQUIRE(res.valid);
        // The recovered point must sit on some blob's trajectory at this time.
        double best = 1e9;
        for (int i = 0; i < gt.set.count; ++i) {
          const auto g = activate(gt.set, i);
          best = std::min(best, (motion_position(g, frame.time) - res.point).norm());
        }
        CHECK(best < 1e-4);
        ++checked;
      }
    }
    CHECK(checked > 20);
  }
}

TEST_CASE("crossing blobs approach within one radius at mid-clip") {
  const auto dir = fresh_dir("synth_cross");
  SyntheticConfig<double> cfg;
  cfg.preset = SyntheticPreset::CrossingBlobs;
  cfg.seed = 3;
  cfg.cameras = 2;
  cfg.frames = 3;
  cfg.blob_count = 8;
  cfg.width = cfg.height = 32;
  auto synth = generate_synthetic_scene(cfg, dir.string());
  const auto& gt = synth.ground_truth;
  const auto a = activate(gt, 0);
  const auto b = activate(gt, 1);
  const double dist = (motion_position(a, 0.5) - motion_position(b, 0.5)).norm();
  const double radius = a.scale.mean();
  CHECK(dist < radius);
  // And they start well separated.
  CHECK((motion_position(a, 0.0) - motion_position(b, 0.0)).norm() > 5 * radius);
}

TEST_CASE("synthetic generation is reproducible from preset and seed") {
  SyntheticConfig<double> cfg;
  cfg.preset = SyntheticPreset::MovingBlobs;
  cfg.seed = 77;
  cfg.cameras = 2;
  cfg.frames = 2;
  cfg.blob_count = 8;
  cfg.width = cfg.height = 32;
  const auto d1 = fresh_dir("synth_rep1");
  const auto d2 = fresh_dir("synth_rep2");
  auto s1 = generate_synthetic_scene(cfg, d1.string());
  auto s2 = generate_synthetic_scene(cfg, d2.string());
  CHECK(slurp(d1 / "gt.gsc") == slurp(d2 / "gt.gsc"));
  CHECK(slurp(d1 / "manifest.json") == slurp(d2 / "manifest.json"));
  CHECK(slurp(d1 / "correspondences.txt") == slurp(d2 / "correspondences.txt"));
  for (const auto& fr : s1.scene.frames)
    CHECK(slurp(d1 / fr.image) == slurp(d2 / fr.image));
  CHECK(parse_preset("moving-blobs") == SyntheticPreset::MovingBlobs);
  CHECK_THROWS_AS(parse_preset("spiral"), UsageError);
}
