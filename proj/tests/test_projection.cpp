#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "gs4d/projection.hpp"
#include "gs4d/random.hpp"
#include "test_util.hpp"

using namespace gs4d;
using testutil::central_diff;
using testutil::rel_err;

namespace {

Camera<double> simple_camera() {
  Camera<double> cam;
  cam.id = "cam0";
  cam.fx = cam.fy = 100.0;
  cam.cx = cam.cy = 50.0;
  cam.width = cam.height = 100;
  return cam;
}

Camera<double> posed_camera(unsigned seed) {
  Camera<double> cam = simple_camera();
  Rng rng(seed);
  const Vec3<double> axis =
      Vec3<double>(rng.normal(), rng.normal(), rng.normal()).normalized();
  const double angle = rng.uniform(-0.8, 0.8);
  cam.rotation = Eigen::AngleAxisd(angle, axis).toRotationMatrix();
  cam.translation = Vec3<double>(rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5), rng.uniform(2.0, 4.0));
  return cam;
}

}  // namespace

TEST_CASE("on-axis and off-axis points project to the expected pixels") {
  const auto cam = simple_camera();
  auto p = project_point(cam, Vec3<double>(0, 0, 5));
  REQUIRE(p.valid);
  REQUIRE(p.pixel[0] == Catch::Approx(50.0));
  REQUIRE(p.pixel[1] == Catch::Approx(50.0));
  REQUIRE(p.depth == Catch::Approx(5.0));

  p = project_point(cam, Vec3<double>(1, 0, 5));
  REQUIRE(p.valid);
  REQUIRE(p.pixel[0] == Catch::Approx(70.0));
  REQUIRE(p.pixel[1] == Catch::Approx(50.0));
}

TEST_CASE("points behind the camera or inside the near plane are invalid") {
  const auto cam = simple_camera();
  REQUIRE_FALSE(project_point(cam, Vec3<double>(0, 0, -1)).valid);
  REQUIRE_FALSE(project_point(cam, Vec3<double>(0, 0, 0.005)).valid);
  REQUIRE(project_point(cam, Vec3<double>(0, 0, 0.02)).valid);
}

TEST_CASE("camera center maps to the camera-space origin") {
  const auto cam = posed_camera(44);
  REQUIRE(cam.to_camera(cam.center()).norm() < 1e-12);
}

TEST_CASE("camera validation catches bad intrinsics and rotations") {
  auto cam = simple_camera();
  REQUIRE_NOTHROW(cam.validate());
  cam.fx = 0.0;
  REQUIRE_THROWS_AS(cam.validate(), DataError);
  cam = simple_camera();
  cam.rotation(0, 0) = 2.0;
  REQUIRE_THROWS_AS(cam.validate(), DataError);
  cam = simple_camera();
  cam.width = 0;
  REQUIRE_THROWS_AS(cam.validate(), DataError);
}

TEST_CASE("projection jacobian matches finite differences of project_point") {
  const auto cam = posed_camera(9);
  Rng rng(10);
  for (int trial = 0; trial < 5; ++trial) {
    const Vec3<double> p_world(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(-0.5, 0.5));
    const Vec3<double> p_cam = cam.to_camera(p_world);
    if (p_cam[2] < 0.5) continue;
    const Mat23<double> j = projection_jacobian(cam, p_cam);
    for (int axis = 0; axis < 3; ++axis) {
      for (int row = 0; row < 2; ++row) {
        auto fn = [&](double v) {
          Vec3<double> q = p_cam;
          q[axis] = v;
          return row == 0 ? cam.fx * q[0] / q[2] + cam.cx : cam.fy * q[1] / q[2] + cam.cy;
        };
        REQUIRE(rel_err(j(row, axis), central_diff(fn, p_cam[axis])) < 1e-6);
      }
    }
  }
  // On-axis: last column vanishes, diagonal is f/z.
  const auto cam0 = simple_camera();
  const Mat23<double> j0 = projection_jacobian(cam0, Vec3<double>(0, 0, 4));
  REQUIRE(j0(0, 0) == Catch::Approx(25.0));
  REQUIRE(j0(1, 1) == Catch::Approx(25.0));
  REQUIRE(j0(0, 2) == 0.0);
  REQUIRE(j0(1, 2) == 0.0);
  const Mat23<double> j1 = projection_jacobian(cam0, Vec3<double>(0, 0, 8));
  REQUIRE(j1(0, 0) == Catch::Approx(12.5));
}

TEST_CASE("isotropic on-axis covariance projects to the closed form") {
  const auto cam = simple_camera();
  GaussianSet<double> set;
  set.resize(1, 0);
  const double r = 0.2, z = 5.0;
  set.position[2] = z;
  for (int k = 0; k < 3; ++k) set.scale_log[k] = std::log(r);
  const auto g = activate(set, 0);
  const auto s = project_covariance(cam, g, 0.5);
  REQUIRE(s.valid);
  const double want = (cam.fx * r / z) * (cam.fx * r / z) + 0.3;
  REQUIRE(s.cov2d(0, 0) == Catch::Approx(want).epsilon(1e-12));
  REQUIRE(s.cov2d(1, 1) == Catch::Approx(want).epsilon(1e-12));
  REQUIRE(std::abs(s.cov2d(0, 1)) < 1e-12);
  REQUIRE(s.depth == Catch::Approx(z));
}

TEST_CASE("dilation lower-bounds the screen covariance eigenvalues") {
  const auto cam = posed_camera(3);
  Rng rng(17);
  for (int trial = 0; trial < 8; ++trial) {
    GaussianSet<double> set;
    set.resize(1, 0);
    for (int k = 0; k < 3; ++k) {
      set.position[k] = rng.uniform(-0.5, 0.5);
      set.scale_log[k] = rng.uniform(-9.0, -1.0);  // includes nearly flat primitives
      set.rotation_q[k + 1] = rng.uniform(-1.0, 1.0);
    }
    set.rotation_q[0] = rng.uniform(0.3, 1.0);
    const auto g = activate(set, 0);
    const auto s = project_covariance(cam, g, 0.5);
    if (!s.valid) continue;
    Eigen::SelfAdjointEigenSolver<Mat2<double>> es(s.cov2d);
    REQUIRE(es.eigenvalues().minCoeff() >= 0.3 - 1e-12);
    REQUIRE(s.cov2d(0, 1) == s.cov2d(1, 0));
  }
}

TEST_CASE("rotating the primitive about the view axis preserves eigenvalues") {
  const auto cam = simple_camera();
  GaussianSet<double> set;
  set.resize(1, 0);
  set.position[2] = 5.0;
  set.scale_log = {std::log(0.3), std::log(0.1), std::log(0.05)};
  auto eigenvalues_for = [&](double angle) {
    GaussianSet<double> s = set;
    s.rotation_q = {std::cos(angle / 2), 0.0, 0.0, std::sin(angle / 2)};  // about z = view axis
    const auto g = activate(s, 0);
    auto proj = project_covariance(cam, g, 0.5, 0.01, 0.0);
    Eigen::SelfAdjointEigenSolver<Mat2<double>> es(proj.cov2d);
    return Vec2<double>(es.eigenvalues());
  };
  const Vec2<double> base = eigenvalues_for(0.0);
  for (double angle : {0.3, 1.1, 2.4}) {
    const Vec2<double> rotated = eigenvalues_for(angle);
    REQUIRE(rotated[0] == Catch::Approx(base[0]).epsilon(1e-9));
    REQUIRE(rotated[1] == Catch::Approx(base[1]).epsilon(1e-9));
  }
}

TEST_CASE("behind-camera primitives come back invalid rather than throwing") {
  auto cam = simple_camera();
  GaussianSet<double> set;
  set.resize(1, 0);
  set.position[2] = -2.0;
  const auto g = activate(set, 0);
  const auto s = project_covariance(cam, g, 0.5);
  REQUIRE_FALSE(s.valid);
}

TEST_CASE("projected mean moves with the primitive's velocity") {
  const auto cam = simple_camera();
  GaussianSet<double> set;
  set.resize(1, 0);
  set.position[2] = 5.0;
  set.velocity[0] = 1.0;
  set.time[0] = 0.0;
  const auto g = activate(set, 0);
  const auto s0 = project_covariance(cam, g, 0.0);
  const auto s1 = project_covariance(cam, g, 0.5);
  REQUIRE(s0.mean2d[0] == Catch::Approx(50.0));
  REQUIRE(s1.mean2d[0] == Catch::Approx(60.0));  // fx * 0.5 / 5 = 10 px
}
