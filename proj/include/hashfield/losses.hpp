// Copyright 2026 The hashfield Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "hashfield/field.hpp"
#include "hashfield/image.hpp"

namespace hashfield {

// ---------------------------------------------------------------------------
// Huber reconstruction loss, mean over components.

template <class S>
S huber_loss(std::span<const S> pred, std::span<const S> target, S delta) {
  if (pred.size() != target.size())
    throw std::invalid_argument("huber_loss: length mismatch");
  if (pred.empty()) return S(0);
  S acc = S(0);
  for (size_t i = 0; i < pred.size(); ++i) {
    const S e = pred[i] - target[i];
    const S a = std::abs(e);
    acc += a <= delta ? S(0.5) * e * e : delta * (a - S(0.5) * delta);
  }
  return acc / S(pred.size());
}

// Also writes d(loss)/d(pred) into dpred.
template <class S>
S huber_loss_grad(std::span<const S> pred, std::span<const S> target, S delta, S* dpred) {
  if (pred.size() != target.size())
    throw std::invalid_argument("huber_loss: length mismatch");
  if (pred.empty()) return S(0);
  const S inv_n = S(1) / S(pred.size());
  S acc = S(0);
  for (size_t i = 0; i < pred.size(); ++i) {
    const S e = pred[i] - target[i];
    const S a = std::abs(e);
    if (a <= delta) {
      acc += S(0.5) * e * e;
      dpred[i] = e * inv_n;
    } else {
      acc += delta * (a - S(0.5) * delta);
      dpred[i] = (e > S(0) ? delta : -delta) * inv_n;
    }
  }
  return acc * inv_n;
}

// ---------------------------------------------------------------------------
// Guidance loss: per query and Lagrangian level, the hard minimum over the
// corner buckets' Gaussians of  -log(alpha_v) + |x - mu|^2 / (2 sigma^2),
// weighted by W(x) and averaged over the batch. Corners with alpha_v = 0 are
// excluded. Ties keep the lowest (corner, k) pair.

struct GuidanceArgmin {
  std::int32_t corner = -1;
  std::int32_t k = -1;
  std::uint32_t bucket = 0;
};

template <class S>
struct GuidanceResult {
  double value = 0.0;
  Eigen::Index points = 0;
  int lag_levels = 0;
  std::vector<GuidanceArgmin> argmin;  // size lag_levels * points, index l * points + i
  std::vector<S> terms;                // matching per-(level, point) min terms
};

template <class S>
GuidanceResult<S> guidance_loss(const FieldConfig& cfg, const ParameterStore<S>& store,
                                const std::vector<S>& sigmas, const QueryBatch<S>& batch) {
  if (!batch.has_weights())
    throw std::invalid_argument("guidance_loss: batch carries no importance weights");
  batch.validate();

  GuidanceResult<S> res;
  res.points = batch.size();
  res.lag_levels = cfg.lagrangian_levels;
  res.argmin.resize(size_t(res.lag_levels) * res.points);
  res.terms.assign(size_t(res.lag_levels) * res.points, S(0));

  const int D = cfg.dim, K = cfg.gaussians_per_bucket;
  int corner[kMaxDim];
  double total = 0.0;
  for (Eigen::Index i = 0; i < res.points; ++i) {
    const S* x = batch.positions.col(i).data();
    const S w_i = batch.weights[i];
    double point_sum = 0.0;
    int lag = 0;
    for (int l = 0; l < cfg.levels; ++l) {
      const LevelLayout& lvl = store.layout.levels[l];
      if (lvl.kind != LevelKind::Lagrangian) continue;
      const S sigma = sigmas[l];
      const S inv_2s2 = S(1) / (S(2) * sigma * sigma);
      const S* means = store.values.data() + lvl.means;
      const auto iw = interp_weights(x, D, lvl.res);
      S best = std::numeric_limits<S>::infinity();
      GuidanceArgmin arg;
      for (int v = 0; v < iw.count; ++v) {
        if (!(iw.alpha[v] > S(0))) continue;  // -log 0 = +inf
        iw.corner(v, D, corner);
        const std::uint32_t bucket = vertex_index(lvl, D, {corner, size_t(D)});
        const S neglog = -std::log(iw.alpha[v]);
        for (int k = 0; k < K; ++k) {
          const S* mu = means + (std::int64_t(bucket) * K + k) * D;
          S d2 = S(0);
          for (int c = 0; c < D; ++c) {
            const S dx = x[c] - mu[c];
            d2 += dx * dx;
          }
          const S t = neglog + d2 * inv_2s2;
          if (t < best) {
            best = t;
            arg = {v, k, bucket};
          }
        }
      }
      res.argmin[size_t(lag) * res.points + i] = arg;
      res.terms[size_t(lag) * res.points + i] = best;
      point_sum += double(best);
      ++lag;
    }
    total += double(w_i) * point_sum;
  }
  res.value = res.points > 0 ? total / double(res.points) : 0.0;
  return res;
}

// Accumulates scale * d(guidance)/d(params). Only the selected Gaussian's
// mean receives gradient; W(x) is a constant weight.
template <class S>
void guidance_backward(const FieldConfig& cfg, const ParameterStore<S>& store,
                       const std::vector<S>& sigmas, const QueryBatch<S>& batch,
                       const GuidanceResult<S>& res, S scale, Eigen::VectorX<S>& grads) {
  if (res.points != batch.size())
    throw std::invalid_argument("guidance_backward: batch/result mismatch");
  if (res.points == 0) return;
  const int D = cfg.dim, K = cfg.gaussians_per_bucket;
  const S inv_m = S(1) / S(res.points);
  int lag = 0;
  for (int l = 0; l < cfg.levels; ++l) {
    const LevelLayout& lvl = store.layout.levels[l];
    if (lvl.kind != LevelKind::Lagrangian) continue;
    const S sigma = sigmas[l];
    const S inv_s2 = S(1) / (sigma * sigma);
    const S* means = store.values.data() + lvl.means;
    for (Eigen::Index i = 0; i < res.points; ++i) {
      const S w_i = batch.weights[i];
      if (w_i == S(0)) continue;
      const GuidanceArgmin& arg = res.argmin[size_t(lag) * res.points + i];
      if (arg.k < 0) continue;
      const std::int64_t entry = std::int64_t(arg.bucket) * K + arg.k;
      const S* mu = means + entry * D;
      const S* x = batch.positions.col(i).data();
      S* dmu = grads.data() + lvl.means + entry * D;
      const S c = scale * w_i * inv_m * inv_s2;
      for (int d = 0; d < D; ++d) dmu[d] += c * (mu[d] - x[d]);
    }
    ++lag;
  }
}

// ---------------------------------------------------------------------------
// Distortion loss over one ray's quadrature weights,
//   sum_{i,j} w_i w_j |s_i - s_j| + (1/3) sum_i w_i^2 ds_i,
// evaluated in O(S) with prefix sums (s must be sorted ascending).

template <class S>
S distortion_loss(std::span<const S> w, std::span<const S> s, std::span<const S> ds) {
  const size_t n = w.size();
  if (s.size() != n || ds.size() != n)
    throw std::invalid_argument("distortion_loss: length mismatch");
  for (size_t i = 1; i < n; ++i)
    if (!(s[i] >= s[i - 1])) throw std::invalid_argument("distortion_loss: s must be sorted");
  S pair = S(0), acc_w = S(0), acc_ws = S(0), intra = S(0);
  for (size_t i = 0; i < n; ++i) {
    pair += w[i] * (s[i] * acc_w - acc_ws);
    acc_w += w[i];
    acc_ws += w[i] * s[i];
    intra += w[i] * w[i] * ds[i];
  }
  return S(2) * pair + intra / S(3);
}

// Accumulates upstream * dL/dw into dw, O(S) via prefix and suffix sums.
template <class S>
void distortion_backward(std::span<const S> w, std::span<const S> s, std::span<const S> ds,
                         S upstream, S* dw) {
  const size_t n = w.size();
  if (n == 0) return;
  std::vector<S> suf_w(n + 1, S(0)), suf_ws(n + 1, S(0));
  for (size_t i = n; i-- > 0;) {
    suf_w[i] = suf_w[i + 1] + w[i];
    suf_ws[i] = suf_ws[i + 1] + w[i] * s[i];
  }
  S pre_w = S(0), pre_ws = S(0);
  for (size_t i = 0; i < n; ++i) {
    const S pairwise = (s[i] * pre_w - pre_ws) + (suf_ws[i + 1] - s[i] * suf_w[i + 1]);
    dw[i] += upstream * (S(2) * pairwise + S(2) / S(3) * w[i] * ds[i]);
    pre_w += w[i];
    pre_ws += w[i] * s[i];
  }
}

// ---------------------------------------------------------------------------
// Importance weights for image fitting: spatial gradient norm of the
// luminance, central differences inside, one-sided at the border, normalized
// to max 1.

inline Eigen::MatrixXf image_weight_map(const Image& img) {
  const int h = img.height, w = img.width;
  Eigen::MatrixXf map = Eigen::MatrixXf::Zero(h, w);
  float maxv = 0.f;
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      double gx = 0.0, gy = 0.0;
      if (w > 1) {
        if (c == 0)
          gx = luminance_at(img, r, 1) - luminance_at(img, r, 0);
        else if (c == w - 1)
          gx = luminance_at(img, r, w - 1) - luminance_at(img, r, w - 2);
        else
          gx = 0.5 * (luminance_at(img, r, c + 1) - luminance_at(img, r, c - 1));
      }
      if (h > 1) {
        if (r == 0)
          gy = luminance_at(img, 1, c) - luminance_at(img, 0, c);
        else if (r == h - 1)
          gy = luminance_at(img, h - 1, c) - luminance_at(img, h - 2, c);
        else
          gy = 0.5 * (luminance_at(img, r + 1, c) - luminance_at(img, r - 1, c));
      }
      const float g = float(std::sqrt(gx * gx + gy * gy));
      map(r, c) = g;
      maxv = std::max(maxv, g);
    }
  }
  if (maxv > 0.f) map /= maxv;
  return map;
}

// ---------------------------------------------------------------------------
// Total loss with linear guidance warm-up.

inline double warmup_ramp(std::int64_t step, std::int64_t warmup_steps) {
  if (warmup_steps <= 0) return 1.0;
  return std::min(1.0, double(step) / double(warmup_steps));
}

template <class S>
S total_loss(S recon, S dist, S guide, const LossWeights& w, std::int64_t step) {
  return recon + S(w.lambda_dist) * dist +
         S(w.lambda_guide * warmup_ramp(step, w.guide_warmup_steps)) * guide;
}

}  // namespace hashfield
