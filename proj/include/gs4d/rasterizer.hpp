#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "gs4d/appearance.hpp"
#include "gs4d/common.hpp"
#include "gs4d/image.hpp"
#include "gs4d/parallel.hpp"
#include "gs4d/primitives.hpp"
#include "gs4d/projection.hpp"

namespace gs4d {

template <class S>
struct RasterConfig {
  int tile = 16;
  S near_plane = S(0.01);
  S temporal_cutoff = S(0.05);        // temporal opacity below this culls the primitive
  S opacity_cutoff = S(1.0 / 255.0);  // activated opacity below this culls the primitive
  S alpha_floor = S(1.0 / 255.0);     // per-pixel contributions below this are skipped
  S alpha_cap = S(0.999);
  S transmittance_stop = S(1e-4);
  S dilation = S(0.3);                // screen-space low-pass, px^2
  S sigma_bound = S(3);               // extent multiplier for tile binning
  int sh_degree = -1;                 // -1: use the set's degree
};

/// One view-ready primitive: everything the per-pixel loops need, cached
/// once so the forward and backward passes share a single preparation path.
template <class S>
struct PreparedSplat {
  int prim = -1;
  Vec2<S> mean2d;
  Mat2<S> cov2d;
  Mat2<S> cov_inv;
  S depth = S(0);
  S sigma_t = S(0);   // temporal opacity at the render time
  S opacity = S(0);   // activated opacity
  ColorEval<S> color; // view-dependent color with cached direction
};

template <class S>
struct BinnedSplats {
  int tile = 16;
  int tiles_x = 0, tiles_y = 0;
  std::vector<PreparedSplat<S>> splats;       // survivors in primitive order
  std::vector<std::vector<std::int32_t>> tile_lists;  // per tile, depth-sorted splat indices
};

namespace detail {

template <class S>
struct PixelRec {
  std::int32_t local;  // position in the owning tile's list
  S alpha;
};

template <class S>
inline void check_finite_raw(const GaussianSet<S>& set, int i) {
  auto bad = [&](const std::vector<S>& a, int base, int n) {
    for (int k = 0; k < n; ++k)
      if (!std::isfinite(a[std::size_t(base) + k])) return true;
    return false;
  };
  const int b = set.basis_count();
  if (bad(set.position, i * 3, 3) || bad(set.time, i, 1) || bad(set.duration_log, i, 1) ||
      bad(set.velocity, i * 3, 3) || bad(set.scale_log, i * 3, 3) || bad(set.rotation_q, i * 4, 4) ||
      bad(set.opacity_logit, i, 1) || bad(set.sh, i * 3 * b, 3 * b))
    throw NumericError("non-finite parameter on primitive " + std::to_string(i));
}

}  // namespace detail

/// Prepares one primitive for rendering. Returns prim = -1 when culled by
/// the temporal window, the opacity cutoff, or an invalid projection.
template <class S>
PreparedSplat<S> prepare_splat(const GaussianSet<S>& set, int index, const Camera<S>& cam, S t,
                               const RasterConfig<S>& cfg) {
  detail::check_finite_raw(set, index);
  PreparedSplat<S> out;
  const ActivatedGaussian<S> g = activate(set, index);
  out.sigma_t = temporal_opacity(g, t);
  if (out.sigma_t < cfg.temporal_cutoff) return out;
  out.opacity = g.opacity;
  if (out.opacity < cfg.opacity_cutoff) return out;
  const SplatProjection<S> proj = project_covariance(cam, g, t, cfg.near_plane, cfg.dilation);
  if (!proj.valid) return out;
  const int degree = cfg.sh_degree >= 0 ? std::min(cfg.sh_degree, set.sh_degree) : set.sh_degree;
  out.mean2d = proj.mean2d;
  out.cov2d = proj.cov2d;
  const S det = proj.cov2d(0, 0) * proj.cov2d(1, 1) - proj.cov2d(0, 1) * proj.cov2d(1, 0);
  if (!(det > S(0))) return out;
  out.cov_inv << proj.cov2d(1, 1) / det, -proj.cov2d(0, 1) / det,
                 -proj.cov2d(1, 0) / det, proj.cov2d(0, 0) / det;
  out.depth = proj.depth;
  out.color = eval_color(g, cam.center(), t, degree);
  out.prim = index;
  return out;
}

/// Culls against the temporal window, opacity cutoff, and frustum, then bins
/// survivors into every tile their sigma_bound ellipse touches, sorted
/// front to back (ties broken by primitive index).
template <class S>
BinnedSplats<S> cull_and_bin(const GaussianSet<S>& set, const Camera<S>& cam, S t, const RasterConfig<S>& cfg) {
  BinnedSplats<S> out;
  out.tile = cfg.tile;
  out.tiles_x = (cam.width + cfg.tile - 1) / cfg.tile;
  out.tiles_y = (cam.height + cfg.tile - 1) / cfg.tile;
  out.tile_lists.assign(std::size_t(out.tiles_x) * out.tiles_y, {});

  std::vector<PreparedSplat<S>> prepared(set.count);
  parallel_for(set.count, [&](std::int64_t begin, std::int64_t end) {
    for (std::int64_t i = begin; i < end; ++i) prepared[i] = prepare_splat(set, int(i), cam, t, cfg);
  });

  for (int i = 0; i < set.count; ++i) {
    PreparedSplat<S>& p = prepared[i];
    if (p.prim < 0) continue;
    const S rx = cfg.sigma_bound * std::sqrt(p.cov2d(0, 0));
    const S ry = cfg.sigma_bound * std::sqrt(p.cov2d(1, 1));
    const int tx0 = std::max(0, int(std::floor((p.mean2d[0] - rx) / cfg.tile)));
    const int tx1 = std::min(out.tiles_x - 1, int(std::floor((p.mean2d[0] + rx) / cfg.tile)));
    const int ty0 = std::max(0, int(std::floor((p.mean2d[1] - ry) / cfg.tile)));
    const int ty1 = std::min(out.tiles_y - 1, int(std::floor((p.mean2d[1] + ry) / cfg.tile)));
    if (tx1 < 0 || ty1 < 0 || tx0 > out.tiles_x - 1 || ty0 > out.tiles_y - 1) continue;
    if (p.mean2d[0] + rx < S(0) || p.mean2d[0] - rx > S(cam.width) || p.mean2d[1] + ry < S(0) ||
        p.mean2d[1] - ry > S(cam.height))
      continue;
    const std::int32_t splat_index = std::int32_t(out.splats.size());
    out.splats.push_back(std::move(p));
    for (int ty = ty0; ty <= ty1; ++ty)
      for (int tx = tx0; tx <= tx1; ++tx)
        out.tile_lists[std::size_t(ty) * out.tiles_x + tx].push_back(splat_index);
  }

  parallel_for(std::int64_t(out.tile_lists.size()), [&](std::int64_t begin, std::int64_t end) {
    for (std::int64_t k = begin; k < end; ++k) {
      auto& list = out.tile_lists[k];
      std::sort(list.begin(), list.end(), [&](std::int32_t a, std::int32_t b) {
        if (out.splats[a].depth != out.splats[b].depth) return out.splats[a].depth < out.splats[b].depth;
        return out.splats[a].prim < out.splats[b].prim;
      });
    }
  });
  return out;
}

template <class S>
struct RenderOutput {
  Image<S> rgb;    // H x W x 3
  Image<S> alpha;  // H x W x 1
  Vec3<S> background;
  int tile = 16, tiles_x = 0, tiles_y = 0;
  // Compositing replay data, indexed per tile: one record stream in pixel
  // order plus the per-pixel record counts.
  std::vector<std::vector<detail::PixelRec<S>>> tile_records;
  std::vector<std::vector<std::int32_t>> tile_counts;
  // Forward/backward pairing guard.
  std::uint64_t set_revision = 0;
  std::string camera_id;
  S render_time = S(0);
  int set_count = 0;
};

template <class S>
RenderOutput<S> render_forward(const GaussianSet<S>& set, const BinnedSplats<S>& bins, const Camera<S>& cam,
                               S t, const Vec3<S>& background, const RasterConfig<S>& cfg) {
  RenderOutput<S> out;
  out.rgb = Image<S>(cam.height, cam.width, 3);
  out.alpha = Image<S>(cam.height, cam.width, 1);
  out.background = background;
  out.tile = bins.tile;
  out.tiles_x = bins.tiles_x;
  out.tiles_y = bins.tiles_y;
  out.tile_records.assign(bins.tile_lists.size(), {});
  out.tile_counts.assign(bins.tile_lists.size(), {});
  out.set_revision = set.revision;
  out.camera_id = cam.id;
  out.render_time = t;
  out.set_count = set.count;

  parallel_for(std::int64_t(bins.tile_lists.size()), [&](std::int64_t begin, std::int64_t end) {
    for (std::int64_t tile_idx = begin; tile_idx < end; ++tile_idx) {
      const auto& list = bins.tile_lists[tile_idx];
      auto& records = out.tile_records[tile_idx];
      auto& counts = out.tile_counts[tile_idx];
      const int tx = int(tile_idx) % bins.tiles_x, ty = int(tile_idx) / bins.tiles_x;
      const int x0 = tx * bins.tile, x1 = std::min(cam.width, x0 + bins.tile);
      const int y0 = ty * bins.tile, y1 = std::min(cam.height, y0 + bins.tile);
      counts.reserve(std::size_t(x1 - x0) * (y1 - y0));
      for (int py = y0; py < y1; ++py) {
        for (int px = x0; px < x1; ++px) {
          const Vec2<S> pix(S(px) + S(0.5), S(py) + S(0.5));
          S transmittance = S(1);
          Vec3<S> rgb = Vec3<S>::Zero();
          std::int32_t emitted = 0;
          for (std::int32_t local = 0; local < std::int32_t(list.size()); ++local) {
            if (transmittance < cfg.transmittance_stop) break;
            const PreparedSplat<S>& sp = bins.splats[list[local]];
            const Vec2<S> delta = pix - sp.mean2d;
            const S quad = delta.dot(sp.cov_inv * delta);
            const S gauss = std::exp(S(-0.5) * quad);
            const S raw_alpha = sp.opacity * sp.sigma_t * gauss;
            if (raw_alpha < cfg.alpha_floor) continue;
            const S alpha = std::min(cfg.alpha_cap, raw_alpha);
            rgb += sp.color.rgb * (alpha * transmittance);
            records.push_back({local, alpha});
            ++emitted;
            transmittance *= (S(1) - alpha);
          }
          counts.push_back(emitted);
          rgb += transmittance * background;
          for (int c = 0; c < 3; ++c) out.rgb.at(py, px, c) = rgb[c];
          out.alpha.at(py, px, 0) = S(1) - transmittance;
        }
      }
    }
  });
  return out;
}

/// Convenience wrapper: bin then composite.
template <class S>
RenderOutput<S> render(const GaussianSet<S>& set, const Camera<S>& cam, S t, const Vec3<S>& background,
                       const RasterConfig<S>& cfg) {
  const BinnedSplats<S> bins = cull_and_bin(set, cam, t, cfg);
  return render_forward(set, bins, cam, t, background, cfg);
}

/// Per-field gradients for one render plus the screen-space statistics used
/// by relocation scoring. Field arrays are zeroed per step by the caller;
/// the accumulators persist until relocation resets them.
template <class S>
struct GradientSet {
  int count = 0;
  int sh_degree = 0;

  std::vector<S> position, time, duration_log, velocity, scale_log, rotation_q, opacity_logit, sh;
  std::vector<S> accum_grad2d;  // summed L2 norms of the mean2d gradient
  std::vector<S> accum_count;   // renders in which the primitive survived culling

  int basis_count() const { return (sh_degree + 1) * (sh_degree + 1); }

  void resize(const GaussianSet<S>& set) {
    count = set.count;
    sh_degree = set.sh_degree;
    zero_param_grads();
    accum_grad2d.assign(count, S(0));
    accum_count.assign(count, S(0));
  }

  void zero_param_grads() {
    position.assign(std::size_t(count) * 3, S(0));
    time.assign(count, S(0));
    duration_log.assign(count, S(0));
    velocity.assign(std::size_t(count) * 3, S(0));
    scale_log.assign(std::size_t(count) * 3, S(0));
    rotation_q.assign(std::size_t(count) * 4, S(0));
    opacity_logit.assign(count, S(0));
    sh.assign(std::size_t(count) * 3 * basis_count(), S(0));
  }

  void reset_accumulators() {
    accum_grad2d.assign(count, S(0));
    accum_count.assign(count, S(0));
  }

  S mean_grad2d(int i) const {
    return accum_count[i] > S(0) ? accum_grad2d[i] / accum_count[i] : S(0);
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
  const std::vector<S>& array(Field f) const { return const_cast<GradientSet*>(this)->array(f); }
};

namespace detail {

template <class S>
struct SplatPartial {
  Vec2<S> d_mean2d = Vec2<S>::Zero();
  S d_lam_xx = S(0), d_lam_xy = S(0), d_lam_yy = S(0);
  Vec3<S> d_rgb = Vec3<S>::Zero();
  S d_opacity = S(0);  // with respect to the activated opacity
  S d_sigma_t = S(0);
  bool touched = false;
};

}  // namespace detail

/// Analytic backward pass of render_forward. Adds raw-parameter gradients
/// into `grads` and updates the relocation accumulators for every surviving
/// primitive. Deterministic for any thread count: per-tile partials are
/// merged in tile order, and the per-primitive chain has no shared writes.
template <class S>
void render_backward(const GaussianSet<S>& set, const BinnedSplats<S>& bins, const Camera<S>& cam, S t,
                     const RenderOutput<S>& out, const Image<S>& dL_drgb, GradientSet<S>& grads,
                     const RasterConfig<S>& cfg) {
  if (out.set_revision != set.revision || out.camera_id != cam.id || out.render_time != t ||
      out.set_count != set.count)
    throw DataError("render_backward: output does not match the forward inputs");
  if (dL_drgb.height != cam.height || dL_drgb.width != cam.width || dL_drgb.channels != 3)
    throw DataError("render_backward: gradient image dimensions differ from the camera");
  if (grads.count != set.count) throw DataError("render_backward: gradient set size mismatch");

  // Phase 1: per-tile accumulation of screen-space partials.
  std::vector<std::vector<detail::SplatPartial<S>>> tile_partials(bins.tile_lists.size());
  parallel_for(std::int64_t(bins.tile_lists.size()), [&](std::int64_t begin, std::int64_t end) {
    std::vector<S> trans;  // per-pixel transmittance stack, reused
    for (std::int64_t tile_idx = begin; tile_idx < end; ++tile_idx) {
      const auto& list = bins.tile_lists[tile_idx];
      const auto& records = out.tile_records[tile_idx];
      const auto& counts = out.tile_counts[tile_idx];
      if (records.empty()) continue;
      auto& partials = tile_partials[tile_idx];
      partials.assign(list.size(), {});
      const int tx = int(tile_idx) % bins.tiles_x, ty = int(tile_idx) / bins.tiles_x;
      const int x0 = tx * bins.tile, x1 = std::min(cam.width, x0 + bins.tile);
      const int y0 = ty * bins.tile, y1 = std::min(cam.height, y0 + bins.tile);
      std::size_t cursor = 0;
      std::size_t pixel_in_tile = 0;
      for (int py = y0; py < y1; ++py) {
        for (int px = x0; px < x1; ++px, ++pixel_in_tile) {
          const std::int32_t k = counts[pixel_in_tile];
          if (k == 0) continue;
          const detail::PixelRec<S>* recs = records.data() + cursor;
          cursor += std::size_t(k);
          const Vec3<S> dl(dL_drgb.at(py, px, 0), dL_drgb.at(py, px, 1), dL_drgb.at(py, px, 2));
          const Vec2<S> pix(S(px) + S(0.5), S(py) + S(0.5));
          // Forward transmittance replay.
          trans.assign(std::size_t(k) + 1, S(1));
          for (std::int32_t i = 0; i < k; ++i) trans[i + 1] = trans[i] * (S(1) - recs[i].alpha);
          Vec3<S> suffix = trans[k] * out.background;  // render behind splat i
          for (std::int32_t i = k - 1; i >= 0; --i) {
            const PreparedSplat<S>& sp = bins.splats[list[recs[i].local]];
            detail::SplatPartial<S>& acc = partials[recs[i].local];
            const S alpha = recs[i].alpha;
            const S weight = alpha * trans[i];
            acc.d_rgb += dl * weight;
            acc.touched = true;
            if (alpha < cfg.alpha_cap) {  // the cap gates alpha gradients only
              const S d_alpha = dl.dot(sp.color.rgb * trans[i] - suffix / (S(1) - alpha));
              const S b = d_alpha * alpha;
              acc.d_opacity += b / sp.opacity;
              acc.d_sigma_t += b / sp.sigma_t;
              const Vec2<S> delta = pix - sp.mean2d;
              const Vec2<S> lam_delta = sp.cov_inv * delta;
              acc.d_mean2d += b * lam_delta;
              acc.d_lam_xx -= S(0.5) * b * delta[0] * delta[0];
              acc.d_lam_xy -= b * delta[0] * delta[1];  // both off-diagonal slots
              acc.d_lam_yy -= S(0.5) * b * delta[1] * delta[1];
            }
            suffix += sp.color.rgb * weight;
          }
        }
      }
    }
  });

  // Phase 2: merge tile partials in fixed tile order.
  std::vector<detail::SplatPartial<S>> totals(bins.splats.size());
  for (std::size_t tile_idx = 0; tile_idx < bins.tile_lists.size(); ++tile_idx) {
    const auto& partials = tile_partials[tile_idx];
    if (partials.empty()) continue;
    const auto& list = bins.tile_lists[tile_idx];
    for (std::size_t j = 0; j < partials.size(); ++j) {
      const auto& p = partials[j];
      if (!p.touched) continue;
      auto& tot = totals[list[j]];
      tot.d_mean2d += p.d_mean2d;
      tot.d_lam_xx += p.d_lam_xx;
      tot.d_lam_xy += p.d_lam_xy;
      tot.d_lam_yy += p.d_lam_yy;
      tot.d_rgb += p.d_rgb;
      tot.d_opacity += p.d_opacity;
      tot.d_sigma_t += p.d_sigma_t;
      tot.touched = true;
    }
  }

  // Phase 3: chain screen-space totals to raw parameters, one primitive per
  // splat, disjoint writes.
  const int degree = cfg.sh_degree >= 0 ? std::min(cfg.sh_degree, set.sh_degree) : set.sh_degree;
  parallel_for(std::int64_t(bins.splats.size()), [&](std::int64_t begin, std::int64_t end) {
    for (std::int64_t s = begin; s < end; ++s) {
      const PreparedSplat<S>& sp = bins.splats[s];
      const int i = sp.prim;
      grads.accum_count[i] += S(1);
      const detail::SplatPartial<S>& tot = totals[s];
      if (!tot.touched) continue;
      grads.accum_grad2d[i] += tot.d_mean2d.norm();

      const ActivatedGaussian<S> g = activate(set, i);
      const Vec4<S> q_raw(set.rotation_q[std::size_t(i) * 4], set.rotation_q[std::size_t(i) * 4 + 1],
                          set.rotation_q[std::size_t(i) * 4 + 2], set.rotation_q[std::size_t(i) * 4 + 3]);

      Vec3<S> d_position = Vec3<S>::Zero(), d_velocity = Vec3<S>::Zero();
      S d_time = S(0), d_duration_log = S(0);

      // Color chain: SH coefficients and the view direction.
      const ColorGrads<S> cg =
          eval_color_backward(g, t, degree, sp.color, tot.d_rgb, grads.sh.data() + std::size_t(i) * 3 * set.basis_count());
      d_position += cg.d_position;
      d_velocity += cg.d_velocity;
      d_time += cg.d_time;

      // Temporal opacity chain.
      const TemporalGrads<S> tg = temporal_opacity_backward(g, t, tot.d_sigma_t);
      d_time += tg.d_time;
      d_duration_log += tg.d_duration_log;

      // Opacity activation.
      grads.opacity_logit[i] += tot.d_opacity * g.opacity * (S(1) - g.opacity);

      // Geometry chain: inverse covariance -> screen covariance -> camera
      // covariance and the projective Jacobian -> world parameters.
      Mat2<S> d_lam;
      d_lam << tot.d_lam_xx, tot.d_lam_xy / S(2), tot.d_lam_xy / S(2), tot.d_lam_yy;
      const Mat2<S> d_cov2d = -(sp.cov_inv * d_lam * sp.cov_inv);

      const Vec3<S> mu = motion_position(g, t);
      const Vec3<S> p_cam = cam.to_camera(mu);
      const Mat23<S> j = projection_jacobian(cam, p_cam);
      const Mat3<S> sigma = covariance(g);
      const Mat3<S> cam_cov = cam.rotation * sigma * cam.rotation.transpose();

      const Mat23<S> d_j = S(2) * d_cov2d * j * cam_cov;
      const Mat3<S> d_cam_cov = j.transpose() * d_cov2d * j;
      const Mat3<S> d_sigma = cam.rotation.transpose() * d_cam_cov * cam.rotation;
      const CovarianceGrads<S> covg = covariance_backward(g, q_raw, d_sigma);
      for (int k = 0; k < 3; ++k) grads.scale_log[std::size_t(i) * 3 + k] += covg.d_scale_log[k];
      for (int k = 0; k < 4; ++k) grads.rotation_q[std::size_t(i) * 4 + k] += covg.d_rotation_q[k];

      // Jacobian entries depend on the camera-space point.
      const S z = p_cam[2], inv_z2 = S(1) / (z * z), inv_z3 = inv_z2 / z;
      Vec3<S> d_p_cam = Vec3<S>::Zero();
      d_p_cam[0] += d_j(0, 2) * (-cam.fx * inv_z2);
      d_p_cam[1] += d_j(1, 2) * (-cam.fy * inv_z2);
      d_p_cam[2] += d_j(0, 0) * (-cam.fx * inv_z2) + d_j(0, 2) * (S(2) * cam.fx * p_cam[0] * inv_z3) +
                    d_j(1, 1) * (-cam.fy * inv_z2) + d_j(1, 2) * (S(2) * cam.fy * p_cam[1] * inv_z3);
      // The projected mean moves with J as well.
      d_p_cam += j.transpose() * tot.d_mean2d;

      const Vec3<S> d_mu = cam.rotation.transpose() * d_p_cam;
      const MotionGrads<S> mg = motion_position_backward(g, t, d_mu);
      d_position += mg.d_position;
      d_velocity += mg.d_velocity;
      d_time += mg.d_time;

      for (int k = 0; k < 3; ++k) {
        grads.position[std::size_t(i) * 3 + k] += d_position[k];
        grads.velocity[std::size_t(i) * 3 + k] += d_velocity[k];
      }
      grads.time[i] += d_time;
      grads.duration_log[i] += d_duration_log;
    }
  });
}

}  // namespace gs4d
