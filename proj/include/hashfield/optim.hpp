// Copyright 2026 The hashfield Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <string>

#include "hashfield/params.hpp"

namespace hashfield {

// Adam moments aligned with the flat parameter store, plus the per-group
// learning rates (Gaussian means train slower than everything else).
template <class S>
struct TrainState {
  std::int64_t step = 0;
  Eigen::VectorX<S> m, v;
  double lr = 1e-2;
  double lr_gaussian = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double epsilon = 1e-15;
  std::uint64_t rng_state = 0;
};

template <class S>
TrainState<S> make_train_state(const ParamLayout& layout) {
  TrainState<S> st;
  st.m = Eigen::VectorX<S>::Zero(layout.total);
  st.v = Eigen::VectorX<S>::Zero(layout.total);
  return st;
}

namespace detail {

// Bias-corrected Adam over one index range; shared by all slices so that
// disjoint slices update independently of processing order.
template <class S>
void adam_update_range(TrainState<S>& st, Eigen::VectorX<S>& params,
                       const Eigen::VectorX<S>& grads, std::int64_t lo, std::int64_t hi,
                       double lr, std::int64_t t) {
  const S b1 = S(st.beta1), b2 = S(st.beta2);
  const S corr1 = S(1.0 / (1.0 - std::pow(st.beta1, double(t))));
  const S corr2 = S(1.0 / (1.0 - std::pow(st.beta2, double(t))));
  const S eps = S(st.epsilon), step_size = S(lr);
  for (std::int64_t i = lo; i < hi; ++i) {
    const S g = grads[i];
    st.m[i] = b1 * st.m[i] + (S(1) - b1) * g;
    st.v[i] = b2 * st.v[i] + (S(1) - b2) * g * g;
    const S mhat = st.m[i] * corr1;
    const S vhat = st.v[i] * corr2;
    params[i] -= step_size * mhat / (std::sqrt(vhat) + eps);
  }
}

}  // namespace detail

// One Adam step over every slice; gaussian_means slices use lr_gaussian.
// Non-finite gradients abort with a diagnostic naming the offending slice.
template <class S>
void adam_step(TrainState<S>& st, ParameterStore<S>& store, const Eigen::VectorX<S>& grads) {
  if (grads.size() != store.layout.total || st.m.size() != store.layout.total)
    throw std::invalid_argument("adam_step: shape mismatch");
  if (!grads.allFinite()) {
    for (std::int64_t i = 0; i < grads.size(); ++i)
      if (!std::isfinite(double(grads[i])))
        throw std::runtime_error("adam_step: non-finite gradient in slice " +
                                 store.layout.slice_name_at(i));
  }
  const std::int64_t t = st.step + 1;
  for (const SliceInfo& s : store.layout.slices) {
    const double lr = s.gaussian_mean ? st.lr_gaussian : st.lr;
    detail::adam_update_range(st, store.values, grads, s.offset, s.offset + s.size, lr, t);
  }
  st.step = t;
}

// Standard deviation for a level's Gaussians: starts at sigma_start_mult grid
// cells, decays exponentially to sigma_end_mult cells over sigma_decay_steps,
// constant afterwards. Endpoints are exact by construction.
inline double sigma_schedule(const FieldConfig& cfg, int level, std::int64_t step) {
  const double res = double(cfg.level_resolution(level));
  if (step >= cfg.sigma_decay_steps) return cfg.sigma_end_mult / res;
  const double u = double(step) / double(cfg.sigma_decay_steps);
  return (cfg.sigma_start_mult / res) * std::pow(cfg.sigma_end_mult / cfg.sigma_start_mult, u);
}

template <class S>
std::vector<S> sigmas_at(const FieldConfig& cfg, std::int64_t step) {
  std::vector<S> out(cfg.levels);
  for (int l = 0; l < cfg.levels; ++l) out[l] = S(sigma_schedule(cfg, l, step));
  return out;
}

}  // namespace hashfield
