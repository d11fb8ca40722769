#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "gs4d/common.hpp"
#include "gs4d/config.hpp"
#include "gs4d/initfit.hpp"
#include "gs4d/objective.hpp"
#include "gs4d/optimizer.hpp"
#include "gs4d/primitives.hpp"
#include "gs4d/random.hpp"
#include "gs4d/rasterizer.hpp"
#include "gs4d/relocation.hpp"
#include "gs4d/scenedata.hpp"

namespace gs4d {

/// Typed view of the configuration schema used by training and rendering.
template <class S>
struct TrainOptions {
  RasterConfig<S> raster;
  LossWeights<S> loss;
  RelocationConfig<S> reloc;
  bool reloc_enabled = true;
  SeedConfig<S> seed_cfg;
  std::string init_mode = "auto";
  int init_random_count = 4096;

  FieldRates<S> base_rates;   // position entry is per unit scene extent
  S position_lr_final = S(1.6e-6);
  S scene_extent = S(0);      // 0: derive from the scene bounds
  S vel_lambda0 = S(1), vel_lambda1 = S(0.01);
  bool vel_additive = false;
  bool disable_velocity = false;

  std::int64_t iterations = 0;  // 0: 100 per frame
  std::int64_t checkpoint_every = 1000;
  std::int64_t log_every = 50;
  std::uint64_t seed = 1;
  int sh_degree = 2;
  bool deterministic = true;
  int threads = 0;

  void validate() const {
    if (loss.lambda_perc != S(0))
      throw UsageError("loss.perceptual is pinned to 0 in this build (no pretrained network)");
    if (checkpoint_every <= 0 || log_every <= 0)
      throw UsageError("train.checkpoint_every and train.log_every must be positive");
    reloc.validate();
  }
};

template <class S>
TrainOptions<S> make_train_options(const ConfigMap& c) {
  TrainOptions<S> o;
  o.raster.tile = int(c.get_int("raster.tile"));
  o.raster.near_plane = S(c.get_double("raster.near_plane"));
  o.raster.temporal_cutoff = S(c.get_double("raster.temporal_cutoff"));
  o.raster.opacity_cutoff = S(c.get_double("raster.opacity_cutoff"));
  o.raster.alpha_floor = S(c.get_double("raster.alpha_floor"));
  o.raster.alpha_cap = S(c.get_double("raster.alpha_cap"));
  o.raster.transmittance_stop = S(c.get_double("raster.transmittance_stop"));
  o.raster.dilation = S(c.get_double("raster.dilation"));
  o.raster.sigma_bound = S(c.get_double("raster.sigma_bound"));

  o.loss.lambda_img = S(c.get_double("loss.l1"));
  o.loss.lambda_ssim = S(c.get_double("loss.ssim"));
  o.loss.lambda_perc = S(c.get_double("loss.perceptual"));
  o.loss.lambda_reg = S(c.get_double("loss.reg"));
  o.loss.reg_end_fraction = S(c.get_double("loss.reg_end_fraction"));
  o.loss.reg_decay_fraction = S(c.get_double("loss.reg_decay_fraction"));

  o.reloc_enabled = c.get_bool("relocate.enabled");
  o.reloc.period = int(c.get_int("relocate.period"));
  o.reloc.lambda_grad = S(c.get_double("relocate.lambda_grad"));
  o.reloc.lambda_opacity = S(c.get_double("relocate.lambda_opacity"));
  o.reloc.dead_threshold = S(c.get_double("relocate.dead_threshold"));
  o.reloc.position_jitter = S(c.get_double("relocate.position_jitter"));
  o.reloc.time_jitter = S(c.get_double("relocate.time_jitter"));
  o.reloc.opacity_reset = S(c.get_double("relocate.opacity_reset"));

  o.init_mode = c.get("init.mode");
  if (o.init_mode != "auto" && o.init_mode != "correspondences" && o.init_mode != "random")
    throw UsageError("init.mode must be auto, correspondences, or random");
  o.init_random_count = int(c.get_int("init.random_count"));
  o.seed_cfg.max_points_per_frame = int(c.get_int("init.max_points_per_frame"));
  o.seed_cfg.max_rms = S(c.get_double("init.max_rms"));
  o.seed_cfg.knn_k = int(c.get_int("init.knn_k"));
  o.seed_cfg.knn_cutoff_factor = S(c.get_double("init.knn_cutoff"));
  o.seed_cfg.opacity = S(c.get_double("init.opacity"));
  o.seed_cfg.duration_scale = S(c.get_double("init.duration_scale"));
  o.seed_cfg.scale_neighbors = int(c.get_int("init.scale_neighbors"));
  o.seed_cfg.sh_degree = int(c.get_int("sh_degree"));

  o.base_rates[Field::Position] = S(c.get_double("lr.position"));
  o.position_lr_final = S(c.get_double("lr.position_final"));
  o.base_rates[Field::Opacity] = S(c.get_double("lr.opacity"));
  o.base_rates[Field::Scale] = S(c.get_double("lr.scale"));
  o.base_rates[Field::Rotation] = S(c.get_double("lr.rotation"));
  o.base_rates[Field::Sh] = S(c.get_double("lr.sh"));
  o.base_rates[Field::Time] = S(c.get_double("lr.time"));
  o.base_rates[Field::Duration] = S(c.get_double("lr.duration"));
  o.base_rates[Field::Velocity] = S(c.get_double("lr.velocity"));

  o.scene_extent = S(c.get_double("train.scene_extent"));
  o.vel_lambda0 = S(c.get_double("schedule.velocity_lambda0"));
  o.vel_lambda1 = S(c.get_double("schedule.velocity_lambda1"));
  o.vel_additive = c.get_bool("schedule.velocity_additive");
  o.disable_velocity = c.get_bool("train.disable_velocity");

  o.iterations = c.get_int("train.iterations");
  o.checkpoint_every = c.get_int("train.checkpoint_every");
  o.log_every = c.get_int("train.log_every");
  o.seed = std::uint64_t(c.get_int("seed"));
  o.sh_degree = int(c.get_int("sh_degree"));
  o.deterministic = c.get_bool("deterministic");
  o.threads = int(c.get_int("threads"));
  o.validate();
  return o;
}

/// The regularizer weight at a training progress in [0, 1]: full until
/// `reg_end_fraction`, then a linear fade to zero over `reg_decay_fraction`.
template <class S>
S reg_weight_at(const LossWeights<S>& w, S progress) {
  if (progress < w.reg_end_fraction) return w.lambda_reg;
  if (w.reg_decay_fraction <= S(0)) return S(0);
  const S fade = (progress - w.reg_end_fraction) / w.reg_decay_fraction;
  return fade >= S(1) ? S(0) : w.lambda_reg * (S(1) - fade);
}

/// Builds the starting primitive set for a scene: triangulated tracks when a
/// correspondence file is available (colors sampled from the training
/// images), otherwise primitives drawn uniformly inside the scene bounds.
template <class S>
GaussianSet<S> initialize_primitives(const Scene<S>& scene, const TrainOptions<S>& opt, Rng& rng) {
  const bool has_corr = !scene.correspondences.empty();
  std::string mode = opt.init_mode;
  if (mode == "auto") mode = has_corr ? "correspondences" : "random";

  const auto frame_times = scene.frame_times();
  S interval = S(1);
  if (frame_times.size() > 1) {
    std::vector<S> gaps;
    for (std::size_t i = 1; i < frame_times.size(); ++i)
      gaps.push_back(frame_times[i] - frame_times[i - 1]);
    std::nth_element(gaps.begin(), gaps.begin() + gaps.size() / 2, gaps.end());
    interval = gaps[gaps.size() / 2];
  }

  if (mode == "correspondences") {
    if (!has_corr)
      throw DataError("scene '" + scene.name + "' declares no correspondence file; use init.mode=random");
    auto cameras = scene.camera_map();
    auto corr = read_correspondences_file<S>(scene.resolve(scene.correspondences).string(), cameras);

    // Nearest-pixel color lookup over lazily decoded training images.
    std::map<std::pair<std::string, S>, std::size_t> frame_index;
    for (std::size_t i = 0; i < scene.frames.size(); ++i)
      frame_index[{scene.frames[i].camera, scene.frames[i].time}] = i;
    std::map<std::size_t, Image<S>> cache;
    auto lookup = [&](const std::string& cam, S t, const Vec2<S>& px) -> std::optional<Vec3<S>> {
      const auto it = frame_index.find({cam, t});
      if (it == frame_index.end()) return std::nullopt;
      auto ci = cache.find(it->second);
      if (ci == cache.end()) ci = cache.emplace(it->second, scene.load_image(it->second)).first;
      const Image<S>& img = ci->second;
      const int x = int(std::lround(double(px.x())));
      const int y = int(std::lround(double(px.y())));
      if (x < 0 || y < 0 || x >= img.width || y >= img.height) return std::nullopt;
      if (img.channels == 1) return Vec3<S>::Constant(img.at(y, x, 0));
      return Vec3<S>(img.at(y, x, 0), img.at(y, x, 1), img.at(y, x, 2));
    };
    return init_from_correspondences(corr, cameras, opt.seed_cfg, lookup);
  }

  if (!scene.has_bounds)
    throw DataError("scene '" + scene.name + "' has no bounds; random initialization needs them");
  SeedConfig<S> seed_cfg = opt.seed_cfg;
  return random_init(scene.bounds_lo, scene.bounds_hi, frame_times.empty() ? S(0) : frame_times.front(),
                     frame_times.empty() ? S(1) : frame_times.back(), interval, opt.init_random_count,
                     seed_cfg, rng);
}

template <class S>
struct TrainLogEntry {
  std::int64_t iteration = 0;  // 1-based, after the step
  S loss = S(0);               // image term + weighted regularizer
  S loss_image = S(0);
  S loss_reg_weighted = S(0);
  int count = 0;
  S mean_opacity = S(0);
  int relocated = 0;
};

/// One-frame-per-step optimization driver. Deterministic given scene,
/// initial set, options, and rng state: frames are drawn uniformly with one
/// generator call per step, before any other randomness of that step.
template <class S>
class Trainer {
 public:
  Trainer(const Scene<S>& scene, GaussianSet<S> init, const TrainOptions<S>& opt,
          std::map<std::string, std::string> config_snapshot = {}, std::int64_t start_iteration = 0,
          const std::string& rng_state = "")
      : scene_(scene), set_(std::move(init)), opt_(opt), config_snapshot_(std::move(config_snapshot)),
        iteration_(start_iteration), rng_(opt.seed + 0x9e3779b97f4a7c15ULL) {
    opt_.validate();
    if (!rng_state.empty()) rng_.set_state(rng_state);

    for (std::size_t i = 0; i < scene_.frames.size(); ++i) {
      const auto& fr = scene_.frames[i];
      if (std::find(scene_.train_cameras.begin(), scene_.train_cameras.end(), fr.camera) !=
          scene_.train_cameras.end())
        train_frames_.push_back(i);
    }
    if (train_frames_.empty()) throw DataError("scene '" + scene_.name + "' has no training frames");
    images_.reserve(train_frames_.size());
    for (std::size_t idx : train_frames_) images_.push_back(scene_.load_image(idx));

    total_iterations_ = opt_.iterations > 0
                            ? opt_.iterations
                            : 100 * std::int64_t(std::max(1, scene_.frame_count));
    if (opt_.scene_extent > S(0)) {
      extent_ = opt_.scene_extent;
    } else if (scene_.has_bounds) {
      extent_ = (scene_.bounds_hi - scene_.bounds_lo).norm();
    } else {
      Vec3<S> lo = Vec3<S>::Constant(std::numeric_limits<S>::max());
      Vec3<S> hi = Vec3<S>::Constant(std::numeric_limits<S>::lowest());
      for (int i = 0; i < set_.count; ++i) {
        const Vec3<S> p(set_.position[std::size_t(i) * 3], set_.position[std::size_t(i) * 3 + 1],
                        set_.position[std::size_t(i) * 3 + 2]);
        lo = lo.cwiseMin(p);
        hi = hi.cwiseMax(p);
      }
      extent_ = set_.count > 0 ? (hi - lo).norm() : S(1);
    }
    if (!(extent_ > S(0))) extent_ = S(1);

    if (opt_.disable_velocity)
      for (auto& v : set_.velocity) v = S(0);

    grads_.resize(set_);
    adam_.resize(set_);
  }

  const GaussianSet<S>& set() const { return set_; }
  GaussianSet<S>& mutable_set() { return set_; }
  const GradientSet<S>& gradients() const { return grads_; }
  const AdamState<S>& adam() const { return adam_; }
  std::int64_t iteration() const { return iteration_; }
  std::int64_t total_iterations() const { return total_iterations_; }
  S scene_extent() const { return extent_; }
  int relocation_events() const { return relocation_events_; }

  /// Field rates for a given progress: geometric position decay and the
  /// annealed velocity rate (zero when motion is disabled).
  FieldRates<S> rates_at(S progress) const {
    FieldRates<S> r = opt_.base_rates;
    const S p0 = opt_.base_rates[Field::Position];
    const S p1 = opt_.position_lr_final;
    r[Field::Position] = extent_ * p0 * std::pow(p1 / p0, clamp01(progress));
    r[Field::Velocity] =
        opt_.disable_velocity
            ? S(0)
            : opt_.base_rates[Field::Velocity] * velocity_lr_schedule(clamp01(progress), opt_.vel_lambda0,
                                                                      opt_.vel_lambda1, opt_.vel_additive);
    return r;
  }

  TrainLogEntry<S> step() {
    const std::size_t pick = std::size_t(rng_.uniform_index(train_frames_.size()));
    try {
      return step_on(pick);
    } catch (const DataError& e) {
      throw DataError("iteration " + std::to_string(iteration_ + 1) + ": " + e.what());
    } catch (const NumericError& e) {
      throw NumericError("iteration " + std::to_string(iteration_ + 1) + ": " + e.what());
    }
  }

  /// Runs until `total_iterations`, invoking `on_log` every log_every steps
  /// (plus the first and last) and `on_checkpoint` every checkpoint_every
  /// steps and at the end.
  void run(const std::function<void(const TrainLogEntry<S>&)>& on_log = nullptr,
           const std::function<void(std::int64_t)>& on_checkpoint = nullptr) {
    while (iteration_ < total_iterations_) {
      const TrainLogEntry<S> entry = step();
      if (on_log &&
          (entry.iteration == 1 || entry.iteration == total_iterations_ ||
           entry.iteration % opt_.log_every == 0))
        on_log(entry);
      if (on_checkpoint &&
          (entry.iteration % opt_.checkpoint_every == 0 || entry.iteration == total_iterations_))
        on_checkpoint(entry.iteration);
    }
  }

  Checkpoint<S> checkpoint() const {
    Checkpoint<S> ckpt;
    ckpt.set = set_;
    ckpt.config = config_snapshot_;
    ckpt.iteration = iteration_;
    ckpt.rng_state = rng_.state();
    return ckpt;
  }

  S mean_opacity() const {
    if (set_.count == 0) return S(0);
    S sum = S(0);
    for (int i = 0; i < set_.count; ++i) sum += sigmoid(set_.opacity_logit[i]);
    return sum / S(set_.count);
  }

 private:
  TrainLogEntry<S> step_on(std::size_t pick) {
    const auto& frame = scene_.frames[train_frames_[pick]];
    const Camera<S>& cam = scene_.camera(frame.camera);
    const Image<S>& gt = images_[pick];
    const S progress = S(iteration_) / S(std::max<std::int64_t>(1, total_iterations_));

    const auto bins = cull_and_bin(set_, cam, frame.time, opt_.raster);
    const auto out = render_forward(set_, bins, cam, frame.time, background_, opt_.raster);
    const auto loss = loss_render(out.rgb, gt, opt_.loss);

    grads_.zero_param_grads();
    render_backward(set_, bins, cam, frame.time, out, loss.grad_pred, grads_, opt_.raster);

    TrainLogEntry<S> entry;
    entry.loss_image = loss.value;
    const S reg_w = reg_weight_at(opt_.loss, progress);
    if (reg_w > S(0)) {
      const auto reg = loss_reg(set_, frame.time);
      entry.loss_reg_weighted = reg_w * reg.value;
      auto& d_op = grads_.array(Field::Opacity);
      for (int i = 0; i < set_.count; ++i) d_op[std::size_t(i)] += reg_w * reg.d_opacity_logit[i];
    }

    adam_step(adam_, set_, grads_, rates_at(progress));
    iteration_ += 1;

    entry.relocated = 0;
    if (opt_.reloc_enabled && iteration_ % opt_.reloc.period == 0) {
      std::vector<S> grad_stat(std::size_t(set_.count)), opacity(std::size_t(set_.count));
      for (int i = 0; i < set_.count; ++i) {
        grad_stat[std::size_t(i)] = grads_.mean_grad2d(i);
        opacity[std::size_t(i)] = sigmoid(set_.opacity_logit[i]);
      }
      const auto scores = sampling_score(grad_stat, opacity, opt_.reloc);
      const auto report = relocate(set_, adam_, grads_, scores, opt_.reloc, rng_);
      entry.relocated = report.moved;
      relocation_events_ += 1;
    }

    entry.iteration = iteration_;
    entry.loss = entry.loss_image + entry.loss_reg_weighted;
    entry.count = set_.count;
    entry.mean_opacity = mean_opacity();
    return entry;
  }

  Scene<S> scene_;
  GaussianSet<S> set_;
  TrainOptions<S> opt_;
  std::map<std::string, std::string> config_snapshot_;
  std::vector<std::size_t> train_frames_;
  std::vector<Image<S>> images_;
  Vec3<S> background_ = Vec3<S>::Zero();
  GradientSet<S> grads_;
  AdamState<S> adam_;
  std::int64_t iteration_ = 0;
  std::int64_t total_iterations_ = 0;
  int relocation_events_ = 0;
  S extent_ = S(1);
  Rng rng_;
};

}  // namespace gs4d
