// Copyright 2026 The hashfield Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "hashfield/config.hpp"
#include "hashfield/rng.hpp"

namespace hashfield {

struct SliceInfo {
  std::string name;
  std::int64_t offset = 0;
  std::int64_t size = 0;
  bool gaussian_mean = false;  // optimizer group flag
};

// One resolution level of the field, with offsets into the flat store.
// `rows` is the feature-table row count for Eulerian levels and the bucket
// count for Lagrangian ones. `hashed` is false only while the full grid fits
// strictly below the table size (the injective regime).
struct LevelLayout {
  LevelKind kind = LevelKind::Eulerian;
  int res = 0;
  std::int64_t rows = 0;
  bool hashed = false;
  std::int64_t table = -1;  // Eulerian feature rows, rows x F
  std::int64_t means = -1;  // Lagrangian means, B x K x D
  std::int64_t feats = -1;  // Lagrangian features, B x K x F
};

struct MlpLayer {
  int out = 0, in = 0;
  std::int64_t weights = 0;  // column-major out x in
  std::int64_t biases = 0;
};

struct ParamLayout {
  std::vector<LevelLayout> levels;
  std::vector<MlpLayer> mlp;
  std::vector<SliceInfo> slices;  // disjoint, in storage order, cover [0, total)
  std::int64_t total = 0;

  const SliceInfo& slice(std::string_view name) const {
    for (const auto& s : slices)
      if (s.name == name) return s;
    throw std::invalid_argument("unknown parameter slice: " + std::string(name));
  }

  const std::string& slice_name_at(std::int64_t index) const {
    for (const auto& s : slices)
      if (index >= s.offset && index < s.offset + s.size) return s.name;
    throw std::invalid_argument("parameter index out of range");
  }
};

namespace detail {

inline std::int64_t ipow(std::int64_t b, int e) {
  std::int64_t r = 1;
  while (e-- > 0) r *= b;
  return r;
}

inline std::vector<MlpLayer> mlp_shapes(const FieldConfig& cfg) {
  std::vector<MlpLayer> shapes;
  int in = cfg.code_dim();
  for (int l = 0; l < cfg.mlp_layers; ++l) {
    shapes.push_back({cfg.mlp_hidden, in, 0, 0});
    in = cfg.mlp_hidden;
  }
  shapes.push_back({cfg.output_dim, in, 0, 0});
  return shapes;
}

}  // namespace detail

inline ParamLayout make_layout(const FieldConfig& cfg) {
  cfg.validate();
  ParamLayout layout;
  std::int64_t at = 0;
  auto add = [&](std::string name, std::int64_t size, bool mean = false) {
    layout.slices.push_back({std::move(name), at, size, mean});
    const std::int64_t off = at;
    at += size;
    return off;
  };

  for (int l = 0; l < cfg.levels; ++l) {
    LevelLayout lvl;
    lvl.res = cfg.level_resolution(l);
    const std::int64_t grid = detail::ipow(lvl.res + 1, cfg.dim);
    lvl.hashed = grid >= cfg.table_size;
    if (cfg.level_is_lagrangian(l)) {
      lvl.kind = LevelKind::Lagrangian;
      lvl.rows = cfg.table_size;
      const std::int64_t entries = lvl.rows * cfg.gaussians_per_bucket;
      lvl.means = add("gaussian_means[" + std::to_string(l) + "]", entries * cfg.dim, true);
      lvl.feats = add("gaussian_feats[" + std::to_string(l) + "]", entries * cfg.feature_dim);
    } else {
      lvl.kind = LevelKind::Eulerian;
      lvl.rows = lvl.hashed ? cfg.table_size : grid;
      lvl.table = add("eulerian[" + std::to_string(l) + "]", lvl.rows * cfg.feature_dim);
    }
    layout.levels.push_back(lvl);
  }

  layout.mlp = detail::mlp_shapes(cfg);
  std::int64_t wsize = 0, bsize = 0;
  for (const auto& s : layout.mlp) {
    wsize += std::int64_t(s.out) * s.in;
    bsize += s.out;
  }
  std::int64_t woff = add("mlp_weights", wsize);
  std::int64_t boff = add("mlp_biases", bsize);
  for (auto& s : layout.mlp) {
    s.weights = woff;
    s.biases = boff;
    woff += std::int64_t(s.out) * s.in;
    boff += s.out;
  }
  layout.total = at;
  return layout;
}

struct ParamBreakdown {
  std::int64_t total = 0;
  std::vector<std::pair<std::string, std::int64_t>> by_slice;
};

// Trainable parameter accounting, straight from the closed-form counts
// (Eulerian rows*F, Lagrangian B*K*(F+D), dense MLP). Sigmas are scheduled,
// not trained, and do not appear here.
inline ParamBreakdown count_params(const FieldConfig& cfg) {
  ParamBreakdown out;
  for (int l = 0; l < cfg.levels; ++l) {
    const std::int64_t grid = detail::ipow(cfg.level_resolution(l) + 1, cfg.dim);
    if (cfg.level_is_lagrangian(l)) {
      const std::int64_t n =
          std::int64_t(cfg.table_size) * cfg.gaussians_per_bucket * (cfg.feature_dim + cfg.dim);
      out.by_slice.emplace_back("lagrangian[" + std::to_string(l) + "]", n);
    } else {
      const std::int64_t rows = grid < cfg.table_size ? grid : cfg.table_size;
      out.by_slice.emplace_back("eulerian[" + std::to_string(l) + "]", rows * cfg.feature_dim);
    }
  }
  std::int64_t mlp = 0;
  for (const auto& s : detail::mlp_shapes(cfg)) mlp += std::int64_t(s.out) * s.in + s.out;
  out.by_slice.emplace_back("mlp", mlp);
  for (const auto& [name, n] : out.by_slice) out.total += n;
  return out;
}

// Flat storage of every trainable scalar plus the slice map into it.
template <class S>
struct ParameterStore {
  ParamLayout layout;
  Eigen::VectorX<S> values;

  Eigen::Map<Eigen::VectorX<S>> slice(std::string_view name) {
    const SliceInfo& s = layout.slice(name);
    return {values.data() + s.offset, s.size};
  }
  Eigen::Map<const Eigen::VectorX<S>> slice(std::string_view name) const {
    const SliceInfo& s = layout.slice(name);
    return {values.data() + s.offset, s.size};
  }

  template <class T>
  ParameterStore<T> cast() const {
    ParameterStore<T> out;
    out.layout = layout;
    out.values = values.template cast<T>();
    return out;
  }
};

// Feature tables ~ N(0, 1e-3) as for hash-grid features, Gaussian means
// uniform over the unit domain, decoder weights Xavier-uniform, biases zero.
template <class S>
ParameterStore<S> init_params(const FieldConfig& cfg, std::uint64_t seed) {
  ParameterStore<S> store;
  store.layout = make_layout(cfg);
  store.values = Eigen::VectorX<S>::Zero(store.layout.total);
  Rng rng(seed);
  constexpr double kFeatureStd = 1e-3;

  for (const auto& lvl : store.layout.levels) {
    if (lvl.kind == LevelKind::Eulerian) {
      S* p = store.values.data() + lvl.table;
      for (std::int64_t i = 0; i < lvl.rows * cfg.feature_dim; ++i)
        p[i] = S(rng.normal() * kFeatureStd);
    } else {
      S* mu = store.values.data() + lvl.means;
      const std::int64_t entries = lvl.rows * cfg.gaussians_per_bucket;
      for (std::int64_t i = 0; i < entries * cfg.dim; ++i) mu[i] = S(rng.uniform());
      S* f = store.values.data() + lvl.feats;
      for (std::int64_t i = 0; i < entries * cfg.feature_dim; ++i)
        f[i] = S(rng.normal() * kFeatureStd);
    }
  }

  for (const auto& lay : store.layout.mlp) {
    const double bound = std::sqrt(6.0 / double(lay.in + lay.out));
    S* w = store.values.data() + lay.weights;
    for (std::int64_t i = 0; i < std::int64_t(lay.out) * lay.in; ++i)
      w[i] = S(rng.uniform(-bound, bound));
    // biases stay zero
  }
  return store;
}

}  // namespace hashfield
