#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "gs4d/appearance.hpp"
#include "gs4d/common.hpp"
#include "gs4d/parallel.hpp"
#include "gs4d/primitives.hpp"
#include "gs4d/projection.hpp"
#include "gs4d/random.hpp"

namespace gs4d {

// ---------------------------------------------------------------------------
// Correspondence ingestion
// ---------------------------------------------------------------------------

template <class S>
struct TrackView {
  std::string camera;
  Vec2<S> pixel{S(0), S(0)};
};

/// One scene point observed in two or more cameras at a single time.
template <class S>
struct Track {
  std::vector<TrackView<S>> views;
};

template <class S>
struct FrameTracks {
  S time = S(0);
  std::vector<Track<S>> tracks;
};

/// All 2D matches, grouped by frame time and sorted by time.
template <class S>
struct CorrespondenceSet {
  std::vector<FrameTracks<S>> frames;

  std::size_t track_count() const {
    std::size_t n = 0;
    for (const auto& f : frames) n += f.tracks.size();
    return n;
  }
};

/// Parses the plain-text match format: one track per line,
/// `time cam u v cam u v ...`; `#` starts a comment. Every camera id must be
/// a key of `cameras` and every track needs at least two views.
template <class S>
CorrespondenceSet<S> read_correspondences(std::istream& in,
                                          const std::map<std::string, Camera<S>>& cameras) {
  CorrespondenceSet<S> out;
  std::map<S, std::size_t> frame_of_time;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    std::istringstream ss(line);
    double time;
    if (!(ss >> time)) continue;  // blank or comment-only line
    Track<S> track;
    std::string cam_token;
    double u, v;
    while (ss >> cam_token) {
      if (!(ss >> u >> v))
        throw DataError("correspondence line " + std::to_string(line_no) +
                        ": camera token without a pixel pair");
      TrackView<S> view;
      view.camera = cam_token;
      if (!cameras.count(view.camera))
        throw DataError("correspondence line " + std::to_string(line_no) + ": unknown camera '" +
                        view.camera + "'");
      view.pixel = Vec2<S>(S(u), S(v));
      track.views.push_back(view);
    }
    if (track.views.size() < 2)
      throw DataError("correspondence line " + std::to_string(line_no) +
                      ": a track needs at least two views");
    const S t = S(time);
    auto it = frame_of_time.find(t);
    if (it == frame_of_time.end()) {
      it = frame_of_time.emplace(t, out.frames.size()).first;
      out.frames.push_back(FrameTracks<S>{t, {}});
    }
    out.frames[it->second].tracks.push_back(std::move(track));
  }
  std::sort(out.frames.begin(), out.frames.end(),
            [](const auto& a, const auto& b) { return a.time < b.time; });
  return out;
}

template <class S>
CorrespondenceSet<S> read_correspondences_file(const std::string& path,
                                               const std::map<std::string, Camera<S>>& cameras) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open correspondence file '" + path + "'");
  return read_correspondences<S>(in, cameras);
}

// ---------------------------------------------------------------------------
// Triangulation
// ---------------------------------------------------------------------------

template <class S>
struct TriangulationResult {
  Vec3<S> point{S(0), S(0), S(0)};
  S rms = std::numeric_limits<S>::infinity();  // reprojection RMS in pixels
  bool valid = false;                          // accepted (finite, in front, rms within bound)
  bool degenerate = false;                     // near-parallel rays / no baseline
};

/// Linear (DLT) triangulation of one track: stacks two homogeneous rows per
/// view and takes the null-space direction of the stacked matrix. A nearly
/// two-dimensional null space (second-smallest singular value below 1e-8 of
/// the largest) marks the geometry degenerate. Accepted solutions reproject
/// into every view with an RMS pixel error of at most `max_rms`.
template <class S>
TriangulationResult<S> triangulate(const Track<S>& track,
                                   const std::map<std::string, Camera<S>>& cameras,
                                   S max_rms = S(2)) {
  TriangulationResult<S> res;
  if (track.views.size() < 2) throw DataError("triangulate: a track needs at least two views");

  Eigen::Matrix<double, Eigen::Dynamic, 4> a(2 * track.views.size(), 4);
  for (std::size_t i = 0; i < track.views.size(); ++i) {
    const auto it = cameras.find(track.views[i].camera);
    if (it == cameras.end())
      throw DataError("triangulate: unknown camera '" + track.views[i].camera + "'");
    const Camera<S>& cam = it->second;
    Eigen::Matrix<double, 3, 4> p;
    Eigen::Matrix3d k = Eigen::Matrix3d::Identity();
    k(0, 0) = double(cam.fx);
    k(1, 1) = double(cam.fy);
    k(0, 2) = double(cam.cx);
    k(1, 2) = double(cam.cy);
    Eigen::Matrix<double, 3, 4> rt;
    rt.template leftCols<3>() = cam.rotation.template cast<double>();
    rt.col(3) = cam.translation.template cast<double>();
    p = k * rt;
    const double u = double(track.views[i].pixel.x());
    const double v = double(track.views[i].pixel.y());
    a.row(2 * i) = u * p.row(2) - p.row(0);
    a.row(2 * i + 1) = v * p.row(2) - p.row(1);
  }

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  if (sv(0) <= 0.0 || sv(2) / sv(0) < 1e-8) {
    res.degenerate = true;
    return res;
  }
  Eigen::Vector4d x = svd.matrixV().col(3);
  if (std::abs(x(3)) < 1e-12 * x.norm()) {
    res.degenerate = true;  // point at infinity: rays do not meet
    return res;
  }
  x /= x(3);
  res.point = Vec3<S>(S(x(0)), S(x(1)), S(x(2)));

  double sq_sum = 0.0;
  for (const auto& view : track.views) {
    const Camera<S>& cam = cameras.at(view.camera);
    const auto proj = project_point(cam, res.point);
    if (!proj.valid) return res;  // behind a camera: rejected, rms stays infinite
    const double du = double(proj.pixel.x() - view.pixel.x());
    const double dv = double(proj.pixel.y() - view.pixel.y());
    sq_sum += du * du + dv * dv;
  }
  res.rms = S(std::sqrt(sq_sum / double(track.views.size())));
  res.valid = res.rms <= max_rms;
  return res;
}

// ---------------------------------------------------------------------------
// Seed clouds and velocity estimation
// ---------------------------------------------------------------------------

/// Points recovered at one frame time, with optional per-point colors and the
/// velocities estimated against a neighbouring frame.
template <class S>
struct FrameCloud {
  S time = S(0);
  std::vector<Vec3<S>> points;
  std::vector<Vec3<S>> colors;  // empty when no color source exists
  std::vector<Vec3<S>> velocities;

  void check() const {
    if (!colors.empty() && colors.size() != points.size())
      throw DataError("frame cloud: color count differs from point count");
    if (!velocities.empty() && velocities.size() != points.size())
      throw DataError("frame cloud: velocity count differs from point count");
  }
};

template <class S>
struct SeedCloud {
  std::vector<FrameCloud<S>> frames;  // ascending time

  std::size_t point_count() const {
    std::size_t n = 0;
    for (const auto& f : frames) n += f.points.size();
    return n;
  }
};

template <class S>
struct VelocityEstimate {
  std::vector<Vec3<S>> velocity;
  int zeroed_by_cutoff = 0;
  bool empty_next = false;
};

/// Displacement to the nearest neighbour(s) in the next cloud divided by the
/// time step. Matches farther than `cutoff_factor` times the median
/// nearest-neighbour distance are treated as mismatches and get velocity
/// zero, as does everything when the next cloud is empty.
template <class S>
VelocityEstimate<S> knn_velocity(const std::vector<Vec3<S>>& points,
                                 const std::vector<Vec3<S>>& points_next, S dt, int k = 1,
                                 S cutoff_factor = S(3)) {
  if (!(dt > S(0))) throw UsageError("knn_velocity: the time step must be positive");
  if (k < 1) throw UsageError("knn_velocity: k must be at least 1");
  VelocityEstimate<S> out;
  out.velocity.assign(points.size(), Vec3<S>::Zero());
  if (points_next.empty()) {
    out.empty_next = true;
    return out;
  }

  const int kk = std::min<int>(k, int(points_next.size()));
  std::vector<S> nearest(points.size());
  std::vector<std::vector<int>> picks(points.size());
  parallel_for(std::int64_t(points.size()), [&](std::int64_t b, std::int64_t e) {
    std::vector<std::pair<S, int>> best;
    for (std::int64_t i = b; i < e; ++i) {
      best.clear();
      for (int j = 0; j < int(points_next.size()); ++j) {
        const S d2 = (points_next[j] - points[std::size_t(i)]).squaredNorm();
        if (int(best.size()) < kk) {
          best.emplace_back(d2, j);
          std::push_heap(best.begin(), best.end());
        } else if (d2 < best.front().first) {
          std::pop_heap(best.begin(), best.end());
          best.back() = {d2, j};
          std::push_heap(best.begin(), best.end());
        }
      }
      std::sort_heap(best.begin(), best.end());
      nearest[std::size_t(i)] = std::sqrt(best.front().first);
      picks[std::size_t(i)].clear();
      for (const auto& [d2, j] : best) picks[std::size_t(i)].push_back(j);
    }
  });

  std::vector<S> med = nearest;
  std::nth_element(med.begin(), med.begin() + med.size() / 2, med.end());
  const S cutoff = cutoff_factor * med[med.size() / 2];

  for (std::size_t i = 0; i < points.size(); ++i) {
    Vec3<S> disp = Vec3<S>::Zero();
    int used = 0;
    for (int j : picks[i]) {
      if ((points_next[std::size_t(j)] - points[i]).norm() <= cutoff) {
        disp += points_next[std::size_t(j)] - points[i];
        ++used;
      }
    }
    if (used == 0) {
      ++out.zeroed_by_cutoff;
      continue;
    }
    out.velocity[i] = disp / (S(used) * dt);
  }
  return out;
}

/// Fills every frame's velocities by matching into the following frame; the
/// final frame is matched into the preceding one with the displacement sign
/// flipped so its velocities still point forward in time. A single-frame
/// cloud gets zero velocities.
template <class S>
void estimate_velocities(SeedCloud<S>& cloud, int k = 1, S cutoff_factor = S(3)) {
  for (std::size_t f = 0; f < cloud.frames.size(); ++f) {
    auto& fr = cloud.frames[f];
    if (cloud.frames.size() < 2) {
      fr.velocities.assign(fr.points.size(), Vec3<S>::Zero());
      continue;
    }
    const bool backward = (f + 1 == cloud.frames.size());
    const std::size_t g = backward ? f - 1 : f + 1;
    const S dt = std::abs(cloud.frames[g].time - fr.time);
    if (!(dt > S(0))) throw DataError("seed cloud has two frames at the same time");
    auto est = knn_velocity(fr.points, cloud.frames[g].points, dt, k, cutoff_factor);
    if (backward)
      for (auto& v : est.velocity) v = -v;
    fr.velocities = std::move(est.velocity);
  }
}

// ---------------------------------------------------------------------------
// Seeding
// ---------------------------------------------------------------------------

template <class S>
struct SeedConfig {
  int max_points_per_frame = 20000;  // stride-subsampled above this
  S max_rms = S(2);                  // px, triangulation acceptance bound
  int knn_k = 1;
  S knn_cutoff_factor = S(3);
  S opacity = S(0.1);
  S duration_scale = S(2);  // times the inter-frame interval
  int scale_neighbors = 3;  // same-frame neighbours averaged for the scale
  S fallback_scale = S(0.1);  // used when a frame has a single point
  int sh_degree = 2;
};

namespace detail {

template <class S>
void stride_subsample(FrameCloud<S>& frame, int cap) {
  const std::size_t n = frame.points.size();
  if (cap <= 0 || n <= std::size_t(cap)) return;
  const std::size_t stride = (n + std::size_t(cap) - 1) / std::size_t(cap);
  FrameCloud<S> kept;
  kept.time = frame.time;
  for (std::size_t i = 0; i < n; i += stride) {
    kept.points.push_back(frame.points[i]);
    if (!frame.colors.empty()) kept.colors.push_back(frame.colors[i]);
    if (!frame.velocities.empty()) kept.velocities.push_back(frame.velocities[i]);
  }
  frame = std::move(kept);
}

/// Mean distance from each point to its `k` nearest same-frame neighbours.
template <class S>
std::vector<S> neighbor_scales(const std::vector<Vec3<S>>& pts, int k, S fallback) {
  std::vector<S> out(pts.size(), fallback);
  if (pts.size() < 2) return out;
  const int kk = std::min<int>(k, int(pts.size()) - 1);
  parallel_for(std::int64_t(pts.size()), [&](std::int64_t b, std::int64_t e) {
    std::vector<S> dist;
    for (std::int64_t i = b; i < e; ++i) {
      dist.clear();
      for (std::size_t j = 0; j < pts.size(); ++j) {
        if (std::int64_t(j) == i) continue;
        dist.push_back((pts[j] - pts[std::size_t(i)]).norm());
      }
      std::nth_element(dist.begin(), dist.begin() + (kk - 1), dist.end());
      S mean = S(0);
      for (int j = 0; j < kk; ++j) mean += dist[std::size_t(j)];
      out[std::size_t(i)] = mean / S(kk);
    }
  });
  return out;
}

template <class S>
S median_frame_interval(const std::vector<S>& times) {
  if (times.size() < 2) return S(1);  // a single frame spans the whole range
  std::vector<S> gaps;
  for (std::size_t i = 1; i < times.size(); ++i) gaps.push_back(times[i] - times[i - 1]);
  std::nth_element(gaps.begin(), gaps.begin() + gaps.size() / 2, gaps.end());
  return gaps[gaps.size() / 2];
}

}  // namespace detail

/// Turns per-frame point clouds into a primitive set: position and time from
/// the cloud, duration a fixed multiple of the frame interval, velocity as
/// estimated, isotropic scale from same-frame neighbour distances, identity
/// orientation, a common starting opacity, and a DC-only color (the point
/// color, mid-gray when absent, divided by the degree-zero basis constant).
template <class S>
GaussianSet<S> seed_primitives(const SeedCloud<S>& cloud, const SeedConfig<S>& cfg) {
  std::size_t total = 0;
  std::vector<S> times;
  for (const auto& f : cloud.frames) {
    f.check();
    total += f.points.size();
    times.push_back(f.time);
  }
  if (total == 0)
    throw DataError(
        "seeding found no points: no usable tracks were triangulated; "
        "fall back to random initialization over the scene bounds and time range");

  const S interval = detail::median_frame_interval(times);
  const S duration = cfg.duration_scale * interval;

  GaussianSet<S> set;
  set.resize(int(total), cfg.sh_degree);
  const int b = set.basis_count();
  std::size_t i = 0;
  for (const auto& f : cloud.frames) {
    const auto scales = detail::neighbor_scales(f.points, cfg.scale_neighbors, cfg.fallback_scale);
    for (std::size_t p = 0; p < f.points.size(); ++p, ++i) {
      for (int k = 0; k < 3; ++k) {
        set.position[i * 3 + k] = f.points[p][k];
        set.velocity[i * 3 + k] = f.velocities.empty() ? S(0) : f.velocities[p][k];
        set.scale_log[i * 3 + k] = std::log(std::max(scales[p], S(1e-12)));
      }
      set.time[i] = f.time;
      set.duration_log[i] = std::log(duration);
      set.rotation_q[i * 4 + 0] = S(1);  // identity orientation
      set.opacity_logit[i] = logit(cfg.opacity);
      const Vec3<S> color = f.colors.empty() ? Vec3<S>(S(0.5), S(0.5), S(0.5)) : f.colors[p];
      for (int ch = 0; ch < 3; ++ch)
        set.sh[(i * 3 + std::size_t(ch)) * std::size_t(b)] = color[ch] / S(kSh0);
    }
  }
  set.validate();
  return set;
}

/// Triangulates every track, drops rejects, samples colors through
/// `color_lookup` (camera id, time, pixel -> optional rgb; views that return
/// a value are averaged), estimates velocities, and seeds primitives.
template <class S, class ColorLookup>
GaussianSet<S> init_from_correspondences(const CorrespondenceSet<S>& corr,
                                         const std::map<std::string, Camera<S>>& cameras,
                                         const SeedConfig<S>& cfg, ColorLookup&& color_lookup) {
  SeedCloud<S> cloud;
  for (const auto& frame : corr.frames) {
    FrameCloud<S> fc;
    fc.time = frame.time;
    std::vector<TriangulationResult<S>> results(frame.tracks.size());
    parallel_for(std::int64_t(frame.tracks.size()), [&](std::int64_t b, std::int64_t e) {
      for (std::int64_t t = b; t < e; ++t)
        results[std::size_t(t)] = triangulate(frame.tracks[std::size_t(t)], cameras, cfg.max_rms);
    });
    for (std::size_t t = 0; t < frame.tracks.size(); ++t) {
      if (!results[t].valid) continue;
      fc.points.push_back(results[t].point);
      Vec3<S> color_sum = Vec3<S>::Zero();
      int color_n = 0;
      for (const auto& view : frame.tracks[t].views) {
        const std::optional<Vec3<S>> c = color_lookup(view.camera, frame.time, view.pixel);
        if (c) {
          color_sum += *c;
          ++color_n;
        }
      }
      fc.colors.push_back(color_n > 0 ? Vec3<S>(color_sum / S(color_n))
                                      : Vec3<S>(S(0.5), S(0.5), S(0.5)));
    }
    detail::stride_subsample(fc, cfg.max_points_per_frame);
    if (!fc.points.empty()) cloud.frames.push_back(std::move(fc));
  }
  estimate_velocities(cloud, cfg.knn_k, cfg.knn_cutoff_factor);
  return seed_primitives(cloud, cfg);
}

template <class S>
GaussianSet<S> init_from_correspondences(const CorrespondenceSet<S>& corr,
                                         const std::map<std::string, Camera<S>>& cameras,
                                         const SeedConfig<S>& cfg) {
  return init_from_correspondences(
      corr, cameras, cfg,
      [](const std::string&, S, const Vec2<S>&) -> std::optional<Vec3<S>> { return std::nullopt; });
}

/// Fallback when no tracks exist: positions uniform inside the given bounds,
/// times uniform over the frame range, zero velocity; everything else follows
/// the seeding defaults.
template <class S>
GaussianSet<S> random_init(const Vec3<S>& bounds_lo, const Vec3<S>& bounds_hi, S time_lo, S time_hi,
                           S frame_interval, int count, const SeedConfig<S>& cfg, Rng& rng) {
  if (count <= 0) throw UsageError("random_init: the primitive count must be positive");
  for (int k = 0; k < 3; ++k)
    if (!(bounds_hi[k] > bounds_lo[k])) throw DataError("random_init: empty scene bounds");

  GaussianSet<S> set;
  set.resize(count, cfg.sh_degree);
  const int b = set.basis_count();
  std::vector<Vec3<S>> pts;
  pts.resize(std::size_t(count));
  for (int i = 0; i < count; ++i)
    for (int k = 0; k < 3; ++k)
      pts[std::size_t(i)][k] = S(rng.uniform(double(bounds_lo[k]), double(bounds_hi[k])));
  const auto scales = detail::neighbor_scales(pts, cfg.scale_neighbors, cfg.fallback_scale);
  const S duration = cfg.duration_scale * std::max(frame_interval, S(0));
  for (int i = 0; i < count; ++i) {
    for (int k = 0; k < 3; ++k) {
      set.position[std::size_t(i) * 3 + k] = pts[std::size_t(i)][k];
      set.scale_log[std::size_t(i) * 3 + k] = std::log(std::max(scales[std::size_t(i)], S(1e-12)));
    }
    set.time[i] = time_hi > time_lo ? S(rng.uniform(double(time_lo), double(time_hi))) : time_lo;
    set.duration_log[i] = std::log(std::max(duration, S(1e-6)));
    set.rotation_q[std::size_t(i) * 4 + 0] = S(1);
    set.opacity_logit[i] = logit(cfg.opacity);
    for (int ch = 0; ch < 3; ++ch)
      set.sh[(std::size_t(i) * 3 + std::size_t(ch)) * std::size_t(b)] = S(0.5) / S(kSh0);
  }
  set.validate();
  return set;
}

}  // namespace gs4d
