#pragma once

#include "gs4d/common.hpp"
#include "gs4d/primitives.hpp"

namespace gs4d {

constexpr int kMaxShDegree = 3;
constexpr int kMaxShBasis = 16;

// Real spherical harmonics constants, degree 0..3.
constexpr double kSh0 = 0.28209479177387814;
constexpr double kSh1 = 0.4886025119029199;
constexpr double kSh2_xy = 1.0925484305920792;   // also yz and xz
constexpr double kSh2_zz = 0.31539156525252005;  // times (3z^2 - 1)
constexpr double kSh2_xxyy = 0.5462742152960396; // times (x^2 - y^2)
constexpr double kSh3_0 = 0.5900435899266435;    // y (3x^2 - y^2) and x (x^2 - 3y^2)
constexpr double kSh3_1 = 2.890611442640554;     // xyz
constexpr double kSh3_2 = 0.4570457994644658;    // y (5z^2 - 1) and x (5z^2 - 1)
constexpr double kSh3_3 = 0.3731763325901154;    // z (5z^2 - 3)
constexpr double kSh3_4 = 1.445305721320277;     // z (x^2 - y^2)

/// Real SH basis at a direction, (l, m) order with m = -l..l, degree 0..3.
/// Non-unit directions are normalized first. Writes (L+1)^2 values.
template <class S>
void sh_basis(Vec3<S> d, int degree, S* out) {
  if (degree < 0 || degree > kMaxShDegree) throw UsageError("sh degree must be in [0, 3]");
  const S n = d.norm();
  if (n > S(0)) d /= n;
  const S x = d[0], y = d[1], z = d[2];
  out[0] = S(kSh0);
  if (degree < 1) return;
  out[1] = S(kSh1) * y;
  out[2] = S(kSh1) * z;
  out[3] = S(kSh1) * x;
  if (degree < 2) return;
  out[4] = S(kSh2_xy) * x * y;
  out[5] = S(kSh2_xy) * y * z;
  out[6] = S(kSh2_zz) * (S(3) * z * z - S(1));
  out[7] = S(kSh2_xy) * x * z;
  out[8] = S(kSh2_xxyy) * (x * x - y * y);
  if (degree < 3) return;
  out[9] = S(kSh3_0) * y * (S(3) * x * x - y * y);
  out[10] = S(kSh3_1) * x * y * z;
  out[11] = S(kSh3_2) * y * (S(5) * z * z - S(1));
  out[12] = S(kSh3_3) * z * (S(5) * z * z - S(3));
  out[13] = S(kSh3_2) * x * (S(5) * z * z - S(1));
  out[14] = S(kSh3_4) * z * (x * x - y * y);
  out[15] = S(kSh3_0) * x * (x * x - S(3) * y * y);
}

/// Unrestricted polynomial gradient dY/dd of each basis value at a unit
/// direction. Correct on the sphere only after tangent projection, which is
/// exactly what the normalization chain in color_backward applies.
template <class S>
void sh_basis_grad(const Vec3<S>& d, int degree, Vec3<S>* out) {
  const S x = d[0], y = d[1], z = d[2];
  out[0].setZero();
  if (degree < 1) return;
  out[1] = Vec3<S>(S(0), S(kSh1), S(0));
  out[2] = Vec3<S>(S(0), S(0), S(kSh1));
  out[3] = Vec3<S>(S(kSh1), S(0), S(0));
  if (degree < 2) return;
  out[4] = Vec3<S>(S(kSh2_xy) * y, S(kSh2_xy) * x, S(0));
  out[5] = Vec3<S>(S(0), S(kSh2_xy) * z, S(kSh2_xy) * y);
  out[6] = Vec3<S>(S(0), S(0), S(6) * S(kSh2_zz) * z);
  out[7] = Vec3<S>(S(kSh2_xy) * z, S(0), S(kSh2_xy) * x);
  out[8] = Vec3<S>(S(2) * S(kSh2_xxyy) * x, S(-2) * S(kSh2_xxyy) * y, S(0));
  if (degree < 3) return;
  out[9] = Vec3<S>(S(6) * S(kSh3_0) * x * y, S(3) * S(kSh3_0) * (x * x - y * y), S(0));
  out[10] = Vec3<S>(S(kSh3_1) * y * z, S(kSh3_1) * x * z, S(kSh3_1) * x * y);
  out[11] = Vec3<S>(S(0), S(kSh3_2) * (S(5) * z * z - S(1)), S(10) * S(kSh3_2) * y * z);
  out[12] = Vec3<S>(S(0), S(0), S(kSh3_3) * (S(15) * z * z - S(3)));
  out[13] = Vec3<S>(S(kSh3_2) * (S(5) * z * z - S(1)), S(0), S(10) * S(kSh3_2) * x * z);
  out[14] = Vec3<S>(S(2) * S(kSh3_4) * x * z, S(-2) * S(kSh3_4) * y * z, S(kSh3_4) * (x * x - y * y));
  out[15] = Vec3<S>(S(3) * S(kSh3_0) * (x * x - y * y), S(-6) * S(kSh3_0) * x * y, S(0));
}

template <class S>
struct ColorEval {
  Vec3<S> rgb;         // clamped at zero
  Vec3<S> raw;         // pre-clamp channel sums
  Vec3<S> direction;   // unit view direction actually used
  S inv_distance = S(0);
  bool degenerate = false;  // camera center coincided with the moved mean
};

/// View-dependent color at time t seen from camera_center. The direction
/// points from the camera toward the primitive's moved position; a zero
/// baseline falls back to +z and is flagged.
template <class S>
ColorEval<S> eval_color(const ActivatedGaussian<S>& g, const Vec3<S>& camera_center, S t, int degree) {
  ColorEval<S> out;
  const Vec3<S> rel = motion_position(g, t) - camera_center;
  const S len = rel.norm();
  if (len > S(0)) {
    out.direction = rel / len;
    out.inv_distance = S(1) / len;
  } else {
    out.direction = Vec3<S>(S(0), S(0), S(1));
    out.degenerate = true;
  }
  S basis[kMaxShBasis];
  sh_basis(out.direction, degree, basis);
  const int b = (degree + 1) * (degree + 1);
  for (int ch = 0; ch < 3; ++ch) {
    S sum = S(0);
    for (int k = 0; k < b; ++k) sum += g.sh[std::size_t(ch) * g.basis_count + k] * basis[k];
    out.raw[ch] = sum;
    out.rgb[ch] = std::max(sum, S(0));
  }
  return out;
}

template <class S>
struct ColorGrads {
  Vec3<S> d_position = Vec3<S>::Zero();
  S d_time = S(0);
  Vec3<S> d_velocity = Vec3<S>::Zero();
};

/// Backward pass of eval_color. d_sh accumulates 3 x basis_count entries in
/// the set's channel-major layout; the returned grads flow through the view
/// direction into the motion parameters. Channels clamped to zero pass no
/// gradient, and a degenerate direction passes none into motion.
template <class S>
ColorGrads<S> eval_color_backward(const ActivatedGaussian<S>& g, S t, int degree, const ColorEval<S>& eval,
                                  const Vec3<S>& upstream, S* d_sh) {
  S basis[kMaxShBasis];
  sh_basis(eval.direction, degree, basis);
  const int b = (degree + 1) * (degree + 1);
  Vec3<S> d_dir = Vec3<S>::Zero();
  Vec3<S> basis_grad[kMaxShBasis];
  sh_basis_grad(eval.direction, degree, basis_grad);
  for (int ch = 0; ch < 3; ++ch) {
    if (eval.raw[ch] <= S(0)) continue;  // clamp gate
    const S up = upstream[ch];
    for (int k = 0; k < b; ++k) {
      d_sh[std::size_t(ch) * g.basis_count + k] += up * basis[k];
      d_dir += up * g.sh[std::size_t(ch) * g.basis_count + k] * basis_grad[k];
    }
  }
  ColorGrads<S> out;
  if (eval.degenerate) return out;
  // d = r / |r|  =>  dL/dr = (I - d d^T) dL/dd / |r|
  const Vec3<S> d_rel = (d_dir - eval.direction * eval.direction.dot(d_dir)) * eval.inv_distance;
  const MotionGrads<S> mg = motion_position_backward(g, t, d_rel);
  out.d_position = mg.d_position;
  out.d_time = mg.d_time;
  out.d_velocity = mg.d_velocity;
  return out;
}

}  // namespace gs4d
