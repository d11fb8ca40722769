#pragma once

#include <string>

#include "gs4d/common.hpp"
#include "gs4d/primitives.hpp"

namespace gs4d {

/// Pinhole camera with a rigid world-to-camera transform.
template <class S>
struct Camera {
  std::string id;
  S fx = S(1), fy = S(1);
  S cx = S(0), cy = S(0);
  int width = 0, height = 0;
  Mat3<S> rotation = Mat3<S>::Identity();  // world-to-camera
  Vec3<S> translation = Vec3<S>::Zero();

  Vec3<S> to_camera(const Vec3<S>& p_world) const { return rotation * p_world + translation; }
  /// Camera center in world coordinates: -R^T t.
  Vec3<S> center() const { return -(rotation.transpose() * translation); }

  void validate() const {
    if (!(fx > S(0)) || !(fy > S(0))) throw DataError("camera '" + id + "': focal lengths must be positive");
    if (width <= 0 || height <= 0) throw DataError("camera '" + id + "': image size must be positive");
    const Mat3<S> rtr = rotation.transpose() * rotation;
    if ((rtr - Mat3<S>::Identity()).cwiseAbs().maxCoeff() > S(1e-4))
      throw DataError("camera '" + id + "': rotation is not orthonormal");
  }
};

template <class S>
struct PointProjection {
  Vec2<S> pixel;
  S depth = S(0);
  bool valid = false;
};

template <class S>
PointProjection<S> project_point(const Camera<S>& cam, const Vec3<S>& p_world, S near_plane = S(0.01)) {
  PointProjection<S> out;
  const Vec3<S> p = cam.to_camera(p_world);
  out.depth = p[2];
  if (!(p[2] > near_plane)) return out;
  out.pixel = Vec2<S>(cam.fx * p[0] / p[2] + cam.cx, cam.fy * p[1] / p[2] + cam.cy);
  out.valid = true;
  return out;
}

/// Camera at `pos` aimed at `target`, with x right, y down, and z forward so
/// the image v axis grows downward. `up` must not be parallel to the view
/// direction.
template <class S>
Camera<S> make_look_at_camera(const std::string& id, S fx, S fy, int width, int height,
                              const Vec3<S>& pos, const Vec3<S>& target,
                              const Vec3<S>& up = Vec3<S>(0, 1, 0)) {
  Camera<S> cam;
  cam.id = id;
  cam.fx = fx;
  cam.fy = fy;
  cam.cx = S(width) / S(2);
  cam.cy = S(height) / S(2);
  cam.width = width;
  cam.height = height;
  const Vec3<S> z = (target - pos).normalized();
  const Vec3<S> down = -up;
  Vec3<S> x = down.cross(z);
  const S xn = x.norm();
  if (!(xn > S(1e-8))) throw UsageError("make_look_at_camera: up is parallel to the view direction");
  x /= xn;
  const Vec3<S> y = z.cross(x);
  cam.rotation.row(0) = x.transpose();
  cam.rotation.row(1) = y.transpose();
  cam.rotation.row(2) = z.transpose();
  cam.translation = -(cam.rotation * pos);
  cam.validate();
  return cam;
}

/// First-order pixel-vs-camera-space Jacobian at a camera-space point.
template <class S>
Mat23<S> projection_jacobian(const Camera<S>& cam, const Vec3<S>& p_cam) {
  const S z = p_cam[2];
  const S inv_z = S(1) / z;
  const S inv_z2 = inv_z * inv_z;
  Mat23<S> j;
  j << cam.fx * inv_z, S(0), -cam.fx * p_cam[0] * inv_z2,
       S(0), cam.fy * inv_z, -cam.fy * p_cam[1] * inv_z2;
  return j;
}

template <class S>
struct SplatProjection {
  Vec2<S> mean2d;
  Mat2<S> cov2d;
  S depth = S(0);
  bool valid = false;
};

/// Screen-space Gaussian of a primitive at time t: linearized perspective
/// mapping of the world covariance plus an isotropic low-pass dilation that
/// keeps splats at least about a pixel wide.
template <class S>
SplatProjection<S> project_covariance(const Camera<S>& cam, const ActivatedGaussian<S>& g, S t,
                                      S near_plane = S(0.01), S dilation = S(0.3)) {
  SplatProjection<S> out;
  const Vec3<S> mu = motion_position(g, t);
  const Vec3<S> p_cam = cam.to_camera(mu);
  out.depth = p_cam[2];
  if (!(p_cam[2] > near_plane)) return out;
  out.mean2d = Vec2<S>(cam.fx * p_cam[0] / p_cam[2] + cam.cx, cam.fy * p_cam[1] / p_cam[2] + cam.cy);
  const Mat23<S> j = projection_jacobian(cam, p_cam);
  const Mat3<S> cam_cov = cam.rotation * covariance(g) * cam.rotation.transpose();
  out.cov2d = j * cam_cov * j.transpose();
  out.cov2d(0, 0) += dilation;
  out.cov2d(1, 1) += dilation;
  // Exact symmetry keeps the inverse well behaved downstream.
  const S off = (out.cov2d(0, 1) + out.cov2d(1, 0)) / S(2);
  out.cov2d(0, 1) = out.cov2d(1, 0) = off;
  out.valid = true;
  return out;
}

}  // namespace gs4d
