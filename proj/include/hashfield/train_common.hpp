// Copyright 2026 The hashfield Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "hashfield/config.hpp"
#include "hashfield/optim.hpp"
#include "hashfield/params.hpp"

namespace hashfield {

struct TrainOptions {
  std::int64_t steps = 2000;
  int batch = 4096;
  int log_every = 100;
  std::uint64_t seed = 1;
  int threads = 1;
  double lr = 1e-2;
  double lr_gaussian = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double epsilon = 1e-15;
  int val_subsample = 4096;
  LossWeights losses;
};

struct MetricsRow {
  std::int64_t step = 0;
  double recon = 0, guide = 0, dist = 0, psnr = 0;
};

template <class S>
struct FitResult {
  ParameterStore<S> params;
  TrainState<S> state;
  std::vector<MetricsRow> metrics;
  double final_psnr = 0;
  double train_seconds = 0;
};

template <class S>
TrainState<S> make_train_state(const ParamLayout& layout, const TrainOptions& opt) {
  TrainState<S> st = make_train_state<S>(layout);
  st.lr = opt.lr;
  st.lr_gaussian = opt.lr_gaussian;
  st.beta1 = opt.beta1;
  st.beta2 = opt.beta2;
  st.epsilon = opt.epsilon;
  st.rng_state = opt.seed;
  return st;
}

// Numerically stable logistic and softplus with derivatives in terms of the
// function value.
template <class S>
S sigmoid(S x) {
  if (x >= S(0)) return S(1) / (S(1) + std::exp(-x));
  const S e = std::exp(x);
  return e / (S(1) + e);
}

template <class S>
S softplus(S x) {
  const S a = std::abs(x);
  return std::log1p(std::exp(-a)) + std::max(x, S(0));
}

}  // namespace hashfield
