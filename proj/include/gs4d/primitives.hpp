#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "gs4d/common.hpp"

namespace gs4d {

enum class Field { Position, Time, Duration, Velocity, Scale, Rotation, Opacity, Sh };

constexpr int kFieldCount = 8;

constexpr const char* field_name(Field f) {
  switch (f) {
    case Field::Position: return "position";
    case Field::Time: return "time";
    case Field::Duration: return "duration";
    case Field::Velocity: return "velocity";
    case Field::Scale: return "scale";
    case Field::Rotation: return "rotation";
    case Field::Opacity: return "opacity";
    case Field::Sh: return "sh";
  }
  return "?";
}

/// Components per primitive for a field; B = (L+1)^2 SH basis functions.
constexpr int field_components(Field f, int basis_count) {
  switch (f) {
    case Field::Position: return 3;
    case Field::Time: return 1;
    case Field::Duration: return 1;
    case Field::Velocity: return 3;
    case Field::Scale: return 3;
    case Field::Rotation: return 4;
    case Field::Opacity: return 1;
    case Field::Sh: return 3 * basis_count;
  }
  return 0;
}

/// Structure-of-arrays store for N space-time Gaussian primitives.
///
/// Storage domains keep activations valid under unconstrained gradient
/// steps: duration and scale live in log space, opacity as a logit, the
/// orientation as an unnormalized quaternion (w, x, y, z). Position, time
/// center, velocity, and SH coefficients are stored directly. Timestamps
/// are normalized to [0, 1] over the sequence; velocity is scene units per
/// unit normalized time.
template <class S>
struct GaussianSet {
  int count = 0;
  int sh_degree = 0;
  std::uint64_t revision = 0;  // bumped by every mutation pass

  std::vector<S> position;      // N x 3
  std::vector<S> time;          // N
  std::vector<S> duration_log;  // N
  std::vector<S> velocity;      // N x 3
  std::vector<S> scale_log;     // N x 3
  std::vector<S> rotation_q;    // N x 4, (w, x, y, z), unnormalized
  std::vector<S> opacity_logit; // N
  std::vector<S> sh;            // N x 3 x B, channel-major per primitive

  int basis_count() const { return (sh_degree + 1) * (sh_degree + 1); }

  void resize(int n, int degree) {
    count = n;
    sh_degree = degree;
    position.assign(std::size_t(n) * 3, S(0));
    time.assign(n, S(0));
    duration_log.assign(n, S(0));
    velocity.assign(std::size_t(n) * 3, S(0));
    scale_log.assign(std::size_t(n) * 3, S(0));
    rotation_q.assign(std::size_t(n) * 4, S(0));
    for (int i = 0; i < n; ++i) rotation_q[std::size_t(i) * 4] = S(1);
    opacity_logit.assign(n, S(0));
    sh.assign(std::size_t(n) * 3 * basis_count(), S(0));
  }

  std::vector<S>& array(Field f) {
    switch (f) {
      case Field::Position: return position;
      case Field::Time: return time;
      case Field::Duration: return duration_log;
      case Field::Velocity: return velocity;
      case Field::Scale: return scale_log;
      case Field::Rotation: return rotation_q;
      case Field::Opacity: return opacity_logit;
      case Field::Sh: return sh;
    }
    throw std::logic_error("bad field");
  }
  const std::vector<S>& array(Field f) const { return const_cast<GaussianSet*>(this)->array(f); }

  void validate() const {
    const std::size_t n = std::size_t(count);
    auto check = [&](const std::vector<S>& v, Field f) {
      const std::size_t want = n * std::size_t(field_components(f, basis_count()));
      if (v.size() != want)
        throw DataError(std::string("gaussian set field '") + field_name(f) + "' has inconsistent length");
    };
    check(position, Field::Position);
    check(time, Field::Time);
    check(duration_log, Field::Duration);
    check(velocity, Field::Velocity);
    check(scale_log, Field::Scale);
    check(rotation_q, Field::Rotation);
    check(opacity_logit, Field::Opacity);
    check(sh, Field::Sh);
  }
};

template <class F>
void for_each_field(F&& fn) {
  fn(Field::Position);
  fn(Field::Time);
  fn(Field::Duration);
  fn(Field::Velocity);
  fn(Field::Scale);
  fn(Field::Rotation);
  fn(Field::Opacity);
  fn(Field::Sh);
}

/// Post-activation view of one primitive.
template <class S>
struct ActivatedGaussian {
  Vec3<S> position;
  S time;
  S duration;       // > 0
  Vec3<S> velocity;
  Vec3<S> scale;    // componentwise > 0
  Vec4<S> rotation; // unit quaternion (w, x, y, z)
  S opacity;        // in (0, 1)
  const S* sh = nullptr;
  int basis_count = 0;
};

template <class S>
Mat3<S> rotation_matrix(const Vec4<S>& q) {
  const S w = q[0], x = q[1], y = q[2], z = q[3];
  Mat3<S> r;
  r << S(1) - S(2) * (y * y + z * z), S(2) * (x * y - w * z), S(2) * (x * z + w * y),
       S(2) * (x * y + w * z), S(1) - S(2) * (x * x + z * z), S(2) * (y * z - w * x),
       S(2) * (x * z - w * y), S(2) * (y * z + w * x), S(1) - S(2) * (x * x + y * y);
  return r;
}

template <class S>
ActivatedGaussian<S> activate(const GaussianSet<S>& set, int index) {
  if (index < 0 || index >= set.count) {
    throw std::out_of_range("gaussian index " + std::to_string(index) + " out of range [0, " +
                            std::to_string(set.count) + ")");
  }
  ActivatedGaussian<S> g;
  const std::size_t i = std::size_t(index);
  g.position = Vec3<S>(set.position[i * 3], set.position[i * 3 + 1], set.position[i * 3 + 2]);
  g.time = set.time[i];
  g.duration = std::exp(set.duration_log[i]);
  g.velocity = Vec3<S>(set.velocity[i * 3], set.velocity[i * 3 + 1], set.velocity[i * 3 + 2]);
  g.scale = Vec3<S>(std::exp(set.scale_log[i * 3]), std::exp(set.scale_log[i * 3 + 1]),
                    std::exp(set.scale_log[i * 3 + 2]));
  Vec4<S> q(set.rotation_q[i * 4], set.rotation_q[i * 4 + 1], set.rotation_q[i * 4 + 2], set.rotation_q[i * 4 + 3]);
  const S norm = q.norm();
  if (!(norm > S(0))) throw NumericError("degenerate quaternion on primitive " + std::to_string(index));
  g.rotation = q / norm;
  g.opacity = sigmoid(set.opacity_logit[i]);
  g.sh = set.sh.data() + i * 3 * std::size_t(set.basis_count());
  g.basis_count = set.basis_count();
  return g;
}

/// Position of the primitive at time t under its linear motion.
template <class S>
Vec3<S> motion_position(const ActivatedGaussian<S>& g, S t) {
  return g.position + g.velocity * (t - g.time);
}

/// Unimodal temporal weight in (0, 1], peaking at the primitive's own time.
template <class S>
S temporal_opacity(const ActivatedGaussian<S>& g, S t) {
  const S u = (t - g.time) / g.duration;
  return std::exp(S(-0.5) * u * u);
}

/// Spatial covariance from scale and orientation.
template <class S>
Mat3<S> covariance(const ActivatedGaussian<S>& g) {
  const Mat3<S> r = rotation_matrix(g.rotation);
  const Mat3<S> m = r * g.scale.asDiagonal();
  return m * m.transpose();
}

/// Opacity contribution of the primitive at spatial point x and time t.
template <class S>
S spacetime_opacity(const ActivatedGaussian<S>& g, const Vec3<S>& x, S t) {
  const Vec3<S> delta = x - motion_position(g, t);
  const Mat3<S> sigma_inv = covariance(g).inverse();
  const S mahal = delta.dot(sigma_inv * delta);
  return temporal_opacity(g, t) * g.opacity * std::exp(S(-0.5) * mahal);
}

// ---------------------------------------------------------------------------
// Analytic partials with respect to the raw (stored) parameters. These are
// the building blocks of the rasterizer backward pass and are checked
// against central finite differences in the test suite.
// ---------------------------------------------------------------------------

template <class S>
struct MotionGrads {
  Vec3<S> d_position;
  S d_time;
  Vec3<S> d_velocity;
};

template <class S>
MotionGrads<S> motion_position_backward(const ActivatedGaussian<S>& g, S t, const Vec3<S>& upstream) {
  MotionGrads<S> out;
  out.d_position = upstream;
  out.d_velocity = upstream * (t - g.time);
  out.d_time = -g.velocity.dot(upstream);
  return out;
}

template <class S>
struct TemporalGrads {
  S d_time;
  S d_duration_log;
};

template <class S>
TemporalGrads<S> temporal_opacity_backward(const ActivatedGaussian<S>& g, S t, S upstream) {
  const S u = (t - g.time) / g.duration;
  const S value = std::exp(S(-0.5) * u * u);
  TemporalGrads<S> out;
  out.d_time = upstream * value * u / g.duration;
  out.d_duration_log = upstream * value * u * u;  // d/ds times s
  return out;
}

/// d(unit quaternion)/d(raw quaternion) applied to an upstream gradient.
template <class S>
Vec4<S> quat_normalize_backward(const Vec4<S>& q_raw, const Vec4<S>& d_unit) {
  const S norm = q_raw.norm();
  const Vec4<S> q = q_raw / norm;
  return (d_unit - q * q.dot(d_unit)) / norm;
}

/// The four partials dR/dq evaluated at a unit quaternion, contracted with
/// an upstream dL/dR.
template <class S>
Vec4<S> rotation_matrix_backward(const Vec4<S>& q, const Mat3<S>& d_r) {
  const S w = q[0], x = q[1], y = q[2], z = q[3];
  Mat3<S> dw, dx, dy, dz;
  dw << S(0), -z, y,
        z, S(0), -x,
        -y, x, S(0);
  dx << S(0), y, z,
        y, S(-2) * x, -w,
        z, w, S(-2) * x;
  dy << S(-2) * y, x, w,
        x, S(0), z,
        -w, z, S(-2) * y;
  dz << S(-2) * z, -w, x,
        w, S(-2) * z, y,
        x, y, S(0);
  Vec4<S> out;
  out[0] = S(2) * (d_r.array() * dw.array()).sum();
  out[1] = S(2) * (d_r.array() * dx.array()).sum();
  out[2] = S(2) * (d_r.array() * dy.array()).sum();
  out[3] = S(2) * (d_r.array() * dz.array()).sum();
  return out;
}

template <class S>
struct CovarianceGrads {
  Vec3<S> d_scale_log;
  Vec4<S> d_rotation_q;  // with respect to the raw (unnormalized) quaternion
};

/// Chains an upstream dL/dSigma through Sigma = R S S^T R^T down to the raw
/// scale-log and quaternion parameters. q_raw is the stored quaternion.
template <class S>
CovarianceGrads<S> covariance_backward(const ActivatedGaussian<S>& g, const Vec4<S>& q_raw, const Mat3<S>& d_sigma) {
  const Mat3<S> r = rotation_matrix(g.rotation);
  const Mat3<S> m = r * g.scale.asDiagonal();
  const Mat3<S> d_m = (d_sigma + d_sigma.transpose()) * m;
  CovarianceGrads<S> out;
  Mat3<S> d_r;
  for (int k = 0; k < 3; ++k) {
    S ds = S(0);
    for (int i = 0; i < 3; ++i) {
      ds += d_m(i, k) * r(i, k);
      d_r(i, k) = d_m(i, k) * g.scale[k];
    }
    out.d_scale_log[k] = ds * g.scale[k];
  }
  const Vec4<S> d_unit = rotation_matrix_backward(g.rotation, d_r);
  out.d_rotation_q = quat_normalize_backward(q_raw, d_unit);
  return out;
}

template <class S>
struct SpacetimeGrads {
  Vec3<S> d_position;
  S d_time = S(0);
  S d_duration_log = S(0);
  Vec3<S> d_velocity;
  Vec3<S> d_scale_log;
  Vec4<S> d_rotation_q;
  S d_opacity_logit = S(0);
};

/// Full raw-parameter gradient of spacetime_opacity at (x, t).
template <class S>
SpacetimeGrads<S> spacetime_opacity_backward(const ActivatedGaussian<S>& g, const Vec4<S>& q_raw, const Vec3<S>& x,
                                             S t, S upstream) {
  const Vec3<S> delta = x - motion_position(g, t);
  const Mat3<S> sigma_inv = covariance(g).inverse();
  const Vec3<S> lam_delta = sigma_inv * delta;
  const S gauss = std::exp(S(-0.5) * delta.dot(lam_delta));
  const S sigma_t = temporal_opacity(g, t);
  const S value = sigma_t * g.opacity * gauss;

  SpacetimeGrads<S> out;
  out.d_position.setZero();
  out.d_velocity.setZero();
  out.d_scale_log.setZero();
  out.d_rotation_q.setZero();

  // Opacity factor.
  out.d_opacity_logit = upstream * sigma_t * gauss * g.opacity * (S(1) - g.opacity);

  // Temporal factor.
  const TemporalGrads<S> tg = temporal_opacity_backward(g, t, upstream * g.opacity * gauss);
  out.d_time += tg.d_time;
  out.d_duration_log += tg.d_duration_log;

  // Spatial factor through the moved mean.
  const Vec3<S> d_mu = upstream * value * lam_delta;  // d(-1/2 d'Λd)/dμ = Λd
  const MotionGrads<S> mg = motion_position_backward(g, t, d_mu);
  out.d_position += mg.d_position;
  out.d_velocity += mg.d_velocity;
  out.d_time += mg.d_time;

  // Spatial factor through the covariance.
  const Mat3<S> d_sigma = upstream * value * S(0.5) * (lam_delta * lam_delta.transpose());
  const CovarianceGrads<S> cg = covariance_backward(g, q_raw, d_sigma);
  out.d_scale_log += cg.d_scale_log;
  out.d_rotation_q += cg.d_rotation_q;
  return out;
}

}  // namespace gs4d
