#pragma once

#include <array>
#include <cmath>
#include <cstdint>

#include "gs4d/common.hpp"
#include "gs4d/primitives.hpp"
#include "gs4d/rasterizer.hpp"

namespace gs4d {

template <class S>
struct FieldRates {
  std::array<S, kFieldCount> lr{};

  S& operator[](Field f) { return lr[std::size_t(f)]; }
  const S& operator[](Field f) const { return lr[std::size_t(f)]; }
};

/// First and second Adam moments mirroring every raw field.
template <class S>
struct AdamState {
  S beta1 = S(0.9), beta2 = S(0.999), eps = S(1e-8);
  std::int64_t step_count = 0;
  std::uint64_t skipped_nonfinite = 0;  // diagnostics: gradient entries ignored
  std::array<std::vector<S>, kFieldCount> m, v;

  void resize(const GaussianSet<S>& set) {
    for_each_field([&](Field f) {
      const std::size_t n = std::size_t(set.count) * field_components(f, set.basis_count());
      m[std::size_t(f)].assign(n, S(0));
      v[std::size_t(f)].assign(n, S(0));
    });
  }

  /// Clears the moments of one primitive across all fields; used when a
  /// primitive is relocated and its history no longer applies.
  void zero_primitive(const GaussianSet<S>& set, int index) {
    for_each_field([&](Field f) {
      const int c = field_components(f, set.basis_count());
      for (int k = 0; k < c; ++k) {
        m[std::size_t(f)][std::size_t(index) * c + k] = S(0);
        v[std::size_t(f)][std::size_t(index) * c + k] = S(0);
      }
    });
  }
};

/// One bias-corrected Adam update over every raw field. Entries with a
/// non-finite gradient are skipped untouched and tallied. Bumps the set
/// revision once.
template <class S>
void adam_step(AdamState<S>& state, GaussianSet<S>& set, const GradientSet<S>& grads,
               const FieldRates<S>& rates) {
  state.step_count += 1;
  const S bc1 = S(1) - std::pow(state.beta1, S(state.step_count));
  const S bc2 = S(1) - std::pow(state.beta2, S(state.step_count));
  for_each_field([&](Field f) {
    const S lr = rates[f];
    auto& params = set.array(f);
    const auto& g = grads.array(f);
    auto& m = state.m[std::size_t(f)];
    auto& v = state.v[std::size_t(f)];
    if (params.size() != g.size() || params.size() != m.size())
      throw DataError(std::string("adam_step: shape mismatch on field '") + field_name(f) + "'");
    for (std::size_t i = 0; i < params.size(); ++i) {
      const S gi = g[i];
      if (!std::isfinite(gi)) {
        state.skipped_nonfinite += 1;
        continue;
      }
      m[i] = state.beta1 * m[i] + (S(1) - state.beta1) * gi;
      v[i] = state.beta2 * v[i] + (S(1) - state.beta2) * gi * gi;
      const S m_hat = m[i] / bc1;
      const S v_hat = v[i] / bc2;
      params[i] -= lr * m_hat / (std::sqrt(v_hat) + state.eps);
    }
  });
  set.revision += 1;
}

/// Annealing scale for the velocity learning rate. The geometric form
/// interpolates the endpoints exactly; the additive form is kept selectable
/// for comparison and does not reach the endpoints.
template <class S>
S velocity_lr_schedule(S progress, S lambda0, S lambda1, bool additive = false) {
  if (!(lambda0 > S(0)) || !(lambda1 > S(0)))
    throw UsageError("velocity schedule endpoints must be positive");
  const S p = std::min(S(1), std::max(S(0), progress));
  if (additive) return std::pow(lambda0, S(1) - p) + std::pow(lambda1, p);
  return std::pow(lambda0, S(1) - p) * std::pow(lambda1, p);
}

}  // namespace gs4d
