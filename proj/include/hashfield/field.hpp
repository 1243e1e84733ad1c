// Copyright 2026 The hashfield Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <numbers>
#include <span>

#include "hashfield/params.hpp"

namespace hashfield {

inline constexpr int kMaxDim = 3;
inline constexpr int kMaxCorners = 1 << kMaxDim;

// Floor on the Gaussian exponent before exp(); contributions below this are
// numerically zero and their mean gradient is cut to exactly zero.
inline constexpr double kExponentClamp = -60.0;

// Per-dimension hash primes (dimension 0 uses 1 so x varies fastest).
inline constexpr std::uint32_t kHashPrimes[kMaxDim] = {1u, 2654435761u, 805459861u};

// Table row of a grid vertex. Row-major and collision-free while the full
// grid fits strictly below the table size, prime-multiply XOR hash mod rows
// otherwise. Products wrap in unsigned 32-bit arithmetic.
inline std::uint32_t vertex_index(const LevelLayout& level, int dim, std::span<const int> vertex) {
  for (int i = 0; i < dim; ++i)
    if (vertex[i] < 0 || vertex[i] > level.res)
      throw std::domain_error("vertex_index: vertex outside grid range");
  if (!level.hashed) {
    std::int64_t idx = 0, stride = 1;
    for (int i = 0; i < dim; ++i) {
      idx += vertex[i] * stride;
      stride *= level.res + 1;
    }
    return std::uint32_t(idx);
  }
  std::uint32_t h = 0;
  for (int i = 0; i < dim; ++i) h ^= std::uint32_t(vertex[i]) * kHashPrimes[i];
  return h % std::uint32_t(level.rows);
}

// Multilinear interpolation stencil of the cell containing x * res. Corner v
// has lattice coordinates base[i] + ((v >> i) & 1).
template <class S>
struct InterpWeights {
  int count = 0;
  std::array<int, kMaxDim> base{};
  std::array<S, kMaxCorners> alpha{};

  void corner(int v, int dim, int* out) const {
    for (int i = 0; i < dim; ++i) out[i] = base[i] + ((v >> i) & 1);
  }
};

template <class S>
InterpWeights<S> interp_weights(const S* x, int dim, int res) {
  InterpWeights<S> w;
  w.count = 1 << dim;
  S frac[kMaxDim];
  for (int i = 0; i < dim; ++i) {
    S p = x[i] * S(res);
    int c = int(std::floor(double(p)));
    if (c < 0) c = 0;
    if (c > res - 1) c = res - 1;  // x = 1 lands in the last cell
    w.base[i] = c;
    frac[i] = p - S(c);
  }
  for (int v = 0; v < w.count; ++v) {
    S a = S(1);
    for (int i = 0; i < dim; ++i) a *= ((v >> i) & 1) ? frac[i] : S(1) - frac[i];
    w.alpha[v] = a;
  }
  return w;
}

// Isotropic Gaussian density, normalized with the univariate constant
// 1/(sqrt(2 pi) sigma) for every dim; the decoder absorbs the scale.
template <class S>
S gaussian_pdf(const S* x, const S* mu, int dim, S sigma) {
  if (!(sigma > S(0))) throw std::invalid_argument("gaussian_pdf: sigma must be positive");
  S d2 = S(0);
  for (int i = 0; i < dim; ++i) {
    const S d = x[i] - mu[i];
    d2 += d * d;
  }
  S e = -d2 / (S(2) * sigma * sigma);
  if (e < S(kExponentClamp)) e = S(kExponentClamp);
  const S norm = S(1) / (S(std::numbers::sqrt2 * std::sqrt(std::numbers::pi)) * sigma);
  return norm * std::exp(e);
}

template <class S>
struct GaussianEval {
  S pdf = S(0);
  Eigen::VectorX<S> contribution;  // pdf * feature
};

template <class S>
GaussianEval<S> gaussian_eval(const Eigen::VectorX<S>& mu, S sigma, const Eigen::VectorX<S>& feat,
                              const Eigen::VectorX<S>& x) {
  GaussianEval<S> out;
  out.pdf = gaussian_pdf(x.data(), mu.data(), int(x.size()), sigma);
  out.contribution = out.pdf * feat;
  return out;
}

// Interpolated feature of one Eulerian level.
template <class S>
void eulerian_feature(const FieldConfig& cfg, const ParameterStore<S>& store, int level,
                      const S* x, S* out) {
  const LevelLayout& lvl = store.layout.levels[level];
  const int F = cfg.feature_dim;
  const S* table = store.values.data() + lvl.table;
  const auto w = interp_weights(x, cfg.dim, lvl.res);
  for (int f = 0; f < F; ++f) out[f] = S(0);
  int corner[kMaxDim];
  for (int v = 0; v < w.count; ++v) {
    w.corner(v, cfg.dim, corner);
    const std::uint32_t idx = vertex_index(lvl, cfg.dim, {corner, size_t(cfg.dim)});
    const S* row = table + std::int64_t(idx) * F;
    for (int f = 0; f < F; ++f) out[f] += w.alpha[v] * row[f];
  }
}

// Interpolated Gaussian-mixture feature of one Lagrangian level: the corner
// buckets' mixtures evaluated at x, blended with the same multilinear weights.
template <class S>
void lagrangian_feature(const FieldConfig& cfg, const ParameterStore<S>& store, int level,
                        S sigma, const S* x, S* out) {
  const LevelLayout& lvl = store.layout.levels[level];
  const int F = cfg.feature_dim, D = cfg.dim, K = cfg.gaussians_per_bucket;
  const S* means = store.values.data() + lvl.means;
  const S* feats = store.values.data() + lvl.feats;
  const auto w = interp_weights(x, D, lvl.res);
  for (int f = 0; f < F; ++f) out[f] = S(0);
  int corner[kMaxDim];
  for (int v = 0; v < w.count; ++v) {
    w.corner(v, D, corner);
    const std::uint32_t bucket = vertex_index(lvl, D, {corner, size_t(D)});
    for (int k = 0; k < K; ++k) {
      const std::int64_t entry = std::int64_t(bucket) * K + k;
      const S pdf = gaussian_pdf(x, means + entry * D, D, sigma);
      const S* f_k = feats + entry * F;
      const S scale = w.alpha[v] * pdf;
      for (int f = 0; f < F; ++f) out[f] += scale * f_k[f];
    }
  }
}

// Concatenated per-level features, coarse to fine (Eulerian block first by
// construction since the Lagrangian levels are the finest).
template <class S>
void encode(const FieldConfig& cfg, const ParameterStore<S>& store, const std::vector<S>& sigmas,
            const S* x, S* code) {
  for (int l = 0; l < cfg.levels; ++l) {
    S* seg = code + std::int64_t(l) * cfg.feature_dim;
    if (store.layout.levels[l].kind == LevelKind::Eulerian)
      eulerian_feature(cfg, store, l, x, seg);
    else
      lagrangian_feature(cfg, store, l, sigmas[l], x, seg);
  }
}

// Fully connected decoder: ReLU hidden layers, linear output. Tasks apply
// their own output squashing.
template <class S>
void mlp_forward(const FieldConfig& cfg, const ParameterStore<S>& store, const S* code, S* out) {
  Eigen::VectorX<S> h = Eigen::Map<const Eigen::VectorX<S>>(code, cfg.code_dim());
  for (size_t i = 0; i < store.layout.mlp.size(); ++i) {
    const MlpLayer& lay = store.layout.mlp[i];
    Eigen::Map<const Eigen::MatrixX<S>> W(store.values.data() + lay.weights, lay.out, lay.in);
    Eigen::Map<const Eigen::VectorX<S>> b(store.values.data() + lay.biases, lay.out);
    Eigen::VectorX<S> z = W * h + b;
    if (i + 1 < store.layout.mlp.size()) z = z.cwiseMax(S(0));
    h = std::move(z);
  }
  Eigen::Map<Eigen::VectorX<S>>(out, cfg.output_dim) = h;
}

// Query positions in the unit domain, one column per point, plus optional
// per-point importance weights for the guidance loss.
template <class S>
struct QueryBatch {
  Eigen::MatrixX<S> positions;  // dim x M
  Eigen::VectorX<S> weights;    // empty, or M non-negative entries

  Eigen::Index size() const { return positions.cols(); }
  bool has_weights() const { return weights.size() == positions.cols() && positions.cols() > 0; }

  void validate() const {
    if (!positions.allFinite()) throw std::invalid_argument("query positions must be finite");
    if (weights.size() != 0 && weights.size() != positions.cols())
      throw std::invalid_argument("weights must be empty or match the batch size");
    if (weights.size() > 0 && (!weights.allFinite() || (weights.array() < S(0)).any()))
      throw std::invalid_argument("weights must be finite and non-negative");
  }
};

// Raw decoder outputs for a batch, one column per point. Points are
// independent: results do not depend on batch composition or order.
template <class S>
Eigen::MatrixX<S> field_eval(const FieldConfig& cfg, const ParameterStore<S>& store,
                             const std::vector<S>& sigmas, const Eigen::MatrixX<S>& positions) {
  const Eigen::Index m = positions.cols();
  Eigen::MatrixX<S> out(cfg.output_dim, m);
  Eigen::VectorX<S> code(cfg.code_dim());
  for (Eigen::Index i = 0; i < m; ++i) {
    encode(cfg, store, sigmas, positions.col(i).data(), code.data());
    mlp_forward(cfg, store, code.data(), out.col(i).data());
  }
  return out;
}

}  // namespace hashfield
