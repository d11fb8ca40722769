#pragma once

#include <cmath>
#include <utility>
#include <vector>

#include "gs4d/common.hpp"
#include "gs4d/optimizer.hpp"
#include "gs4d/primitives.hpp"
#include "gs4d/random.hpp"
#include "gs4d/rasterizer.hpp"

namespace gs4d {

template <class S>
struct RelocationConfig {
  int period = 100;
  S lambda_grad = S(0.5);
  S lambda_opacity = S(0.5);
  S dead_threshold = S(0.005);  // on activated opacity
  S position_jitter = S(0.1);   // times the target's per-axis scale
  S time_jitter = S(0.1);       // times the target's duration
  S opacity_reset = S(0.1);

  void validate() const {
    if (!(lambda_grad + lambda_opacity > S(0)))
      throw UsageError("relocation weights must not both be zero");
    if (!(dead_threshold > S(0)) || !(dead_threshold < S(1)))
      throw UsageError("relocation dead threshold must lie in (0, 1)");
    if (period <= 0) throw UsageError("relocation period must be positive");
  }
};

/// Per-primitive sampling score: a weighted blend of the screen-space
/// gradient statistic (normalized by its running maximum) and the activated
/// opacity.
template <class S>
std::vector<S> sampling_score(const std::vector<S>& grad_stat, const std::vector<S>& opacity,
                              const RelocationConfig<S>& cfg) {
  if (grad_stat.size() != opacity.size()) throw DataError("sampling_score: array lengths differ");
  S max_g = S(0);
  for (S g : grad_stat) max_g = std::max(max_g, g);
  std::vector<S> score(grad_stat.size());
  for (std::size_t i = 0; i < score.size(); ++i) {
    const S norm_g = max_g > S(0) ? grad_stat[i] / max_g : S(0);
    score[i] = cfg.lambda_grad * norm_g + cfg.lambda_opacity * opacity[i];
  }
  return score;
}

struct RelocationReport {
  int moved = 0;
  double mean_target_score = 0.0;
  bool all_dead = false;
  std::vector<std::pair<int, int>> moves;  // (relocated primitive, target)
};

/// Moves every primitive whose activated opacity fell below the dead
/// threshold onto a score-sampled living target: copies the target's
/// position, time, velocity, scale, orientation, and SH coefficients,
/// jitters position and time relative to the target's extent, resets the
/// opacity, and clears the moved primitive's optimizer moments. The
/// primitive count never changes. The relocation statistics window is
/// restarted on every call.
template <class S>
RelocationReport relocate(GaussianSet<S>& set, AdamState<S>& adam, GradientSet<S>& grads,
                          const std::vector<S>& scores, const RelocationConfig<S>& cfg, Rng& rng) {
  if (int(scores.size()) != set.count) throw DataError("relocate: score array length mismatch");
  RelocationReport report;
  std::vector<int> dead;
  for (int i = 0; i < set.count; ++i) {
    if (sigmoid(set.opacity_logit[i]) < cfg.dead_threshold) dead.push_back(i);
  }
  if (int(dead.size()) == set.count && set.count > 0) {
    report.all_dead = true;
    grads.reset_accumulators();
    return report;
  }
  if (dead.empty()) {
    grads.reset_accumulators();
    return report;
  }

  std::vector<double> weights(set.count, 0.0);
  double total = 0.0;
  std::size_t next_dead = 0;
  for (int i = 0; i < set.count; ++i) {
    if (next_dead < dead.size() && dead[next_dead] == i) {
      ++next_dead;
      continue;  // dead primitives are never targets
    }
    weights[i] = std::max(0.0, double(scores[i]));
    total += weights[i];
  }
  if (total <= 0.0) {
    next_dead = 0;
    for (int i = 0; i < set.count; ++i) {
      if (next_dead < dead.size() && dead[next_dead] == i) {
        ++next_dead;
        continue;
      }
      weights[i] = 1.0;  // uniform over the living
    }
  }

  const int b = set.basis_count();
  double score_sum = 0.0;
  for (int i : dead) {
    const int j = int(rng.multinomial(weights));
    for (int k = 0; k < 3; ++k) {
      set.position[std::size_t(i) * 3 + k] = set.position[std::size_t(j) * 3 + k];
      set.velocity[std::size_t(i) * 3 + k] = set.velocity[std::size_t(j) * 3 + k];
      set.scale_log[std::size_t(i) * 3 + k] = set.scale_log[std::size_t(j) * 3 + k];
    }
    set.time[i] = set.time[j];
    for (int k = 0; k < 4; ++k)
      set.rotation_q[std::size_t(i) * 4 + k] = set.rotation_q[std::size_t(j) * 4 + k];
    for (int k = 0; k < 3 * b; ++k)
      set.sh[std::size_t(i) * 3 * b + k] = set.sh[std::size_t(j) * 3 * b + k];

    for (int k = 0; k < 3; ++k) {
      const S scale_k = std::exp(set.scale_log[std::size_t(j) * 3 + k]);
      set.position[std::size_t(i) * 3 + k] += S(rng.normal(0.0, double(cfg.position_jitter * scale_k)));
    }
    const S duration_j = std::exp(set.duration_log[j]);
    set.time[i] += S(rng.normal(0.0, double(cfg.time_jitter * duration_j)));
    set.opacity_logit[i] = logit(cfg.opacity_reset);

    adam.zero_primitive(set, i);
    report.moves.emplace_back(i, j);
    score_sum += double(scores[j]);
  }
  report.moved = int(dead.size());
  report.mean_target_score = score_sum / double(dead.size());
  set.revision += 1;
  grads.reset_accumulators();
  return report;
}

}  // namespace gs4d
