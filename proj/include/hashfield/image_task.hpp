// Copyright 2026 The hashfield Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>
#include <cmath>

#include "hashfield/image.hpp"
#include "hashfield/losses.hpp"
#include "hashfield/tape.hpp"
#include "hashfield/train_common.hpp"

namespace hashfield {

// Image plus its guidance weight map. Pixel (r, c) maps to
// x = ((c + 0.5) / W, (r + 0.5) / H), so all samples are interior points.
struct ImageDataset {
  Image pixels;
  Eigen::MatrixXf weight;
};

inline ImageDataset make_dataset(Image img) {
  Eigen::MatrixXf w = image_weight_map(img);
  return {std::move(img), std::move(w)};
}

inline double psnr_from_mse(double mse) {
  if (mse <= 0.0) return 100.0;  // declared cap for exact reconstructions
  return std::min(100.0, -10.0 * std::log10(mse));
}

inline double psnr(const Image& pred, const Image& target) {
  if (pred.height != target.height || pred.width != target.width ||
      pred.channels != target.channels)
    throw std::invalid_argument("psnr: shape mismatch");
  double acc = 0.0;
  for (size_t i = 0; i < pred.data.size(); ++i) {
    const double e = double(pred.data[i]) - double(target.data[i]);
    acc += e * e;
  }
  return psnr_from_mse(pred.data.empty() ? 0.0 : acc / double(pred.data.size()));
}

// One sampled training batch: positions, target colors, guidance weights.
template <class S>
struct ImageBatch {
  Eigen::MatrixX<S> positions;  // 2 x M
  Eigen::MatrixX<S> targets;    // C x M
  Eigen::VectorX<S> weights;    // M
};

template <class S>
struct ImageLossWorkspace {
  Tape<S> tape;
  Eigen::MatrixX<S> pred, dout;
};

struct LossValue {
  double total = 0, recon = 0, guide = 0, dist = 0;
};

// Reconstruction (Huber on the sigmoid-squashed decoder output) plus warmed-up
// guidance. Accumulates gradients when `grads` is given; one code path serves
// both training and the finite-difference fixtures.
template <class S>
LossValue image_loss(const FieldConfig& cfg, const ParameterStore<S>& store,
                     const std::vector<S>& sigmas, const ImageBatch<S>& batch,
                     const LossWeights& weights, std::int64_t step, Eigen::VectorX<S>* grads,
                     ImageLossWorkspace<S>& ws, int threads = 1) {
  const Eigen::Index m = batch.positions.cols();
  forward_record(cfg, store, sigmas, batch.positions, ws.tape, threads);

  ws.pred.resize(cfg.output_dim, m);
  for (Eigen::Index i = 0; i < m; ++i)
    for (int c = 0; c < cfg.output_dim; ++c) ws.pred(c, i) = sigmoid(ws.tape.output(c, i));

  LossValue out;
  ws.dout.resize(cfg.output_dim, m);
  out.recon = double(huber_loss_grad<S>({ws.pred.data(), size_t(ws.pred.size())},
                                        {batch.targets.data(), size_t(batch.targets.size())},
                                        S(weights.huber_delta), ws.dout.data()));

  QueryBatch<S> qb{batch.positions, batch.weights};
  GuidanceResult<S> guide;
  const double ramp = warmup_ramp(step, weights.guide_warmup_steps);
  if (weights.lambda_guide > 0.0) {
    guide = guidance_loss(cfg, store, sigmas, qb);
    out.guide = guide.value;
  }
  out.total = out.recon + weights.lambda_guide * ramp * out.guide;

  if (grads) {
    // chain through the sigmoid: d/draw = dpred * pred * (1 - pred)
    ws.dout.array() *= ws.pred.array() * (S(1) - ws.pred.array());
    backward_field(cfg, store, ws.tape, ws.dout, *grads, threads);
    if (weights.lambda_guide > 0.0 && ramp > 0.0)
      guidance_backward(cfg, store, sigmas, qb, guide, S(weights.lambda_guide * ramp), *grads);
  }
  return out;
}

// Row-major tiled evaluation of every pixel center; identical to per-pixel
// evaluation for any tile size.
template <class S>
Image render_full(const FieldConfig& cfg, const ParameterStore<S>& store,
                  const std::vector<S>& sigmas, int height, int width, int tile = 4096) {
  Image img(height, width, cfg.output_dim);
  const std::int64_t total = std::int64_t(height) * width;
  Eigen::MatrixX<S> pos(2, std::min<std::int64_t>(tile, total));
  for (std::int64_t start = 0; start < total; start += tile) {
    const std::int64_t n = std::min<std::int64_t>(tile, total - start);
    pos.resize(2, n);
    for (std::int64_t j = 0; j < n; ++j) {
      const std::int64_t p = start + j;
      const int r = int(p / width), c = int(p % width);
      pos(0, j) = S((c + 0.5) / double(width));
      pos(1, j) = S((r + 0.5) / double(height));
    }
    const Eigen::MatrixX<S> out = field_eval(cfg, store, sigmas, pos);
    for (std::int64_t j = 0; j < n; ++j) {
      const std::int64_t p = start + j;
      for (int ch = 0; ch < cfg.output_dim; ++ch)
        img.data[size_t(p) * cfg.output_dim + ch] = float(sigmoid(out(ch, j)));
    }
  }
  return img;
}

struct GaussianPoint {
  int level = 0;
  std::uint32_t bucket = 0;
  int k = 0;
  std::array<double, kMaxDim> mu{};
  double sigma = 0;
};

// Every Gaussian of every Lagrangian level, with the level's scheduled sigma.
template <class S>
std::vector<GaussianPoint> export_points(const FieldConfig& cfg, const ParameterStore<S>& store,
                                         const std::vector<S>& sigmas) {
  std::vector<GaussianPoint> pts;
  for (int l = 0; l < cfg.levels; ++l) {
    const LevelLayout& lvl = store.layout.levels[l];
    if (lvl.kind != LevelKind::Lagrangian) continue;
    const S* means = store.values.data() + lvl.means;
    for (std::int64_t b = 0; b < lvl.rows; ++b)
      for (int k = 0; k < cfg.gaussians_per_bucket; ++k) {
        GaussianPoint p;
        p.level = l;
        p.bucket = std::uint32_t(b);
        p.k = k;
        const S* mu = means + (b * cfg.gaussians_per_bucket + k) * cfg.dim;
        for (int d = 0; d < cfg.dim; ++d) p.mu[d] = double(mu[d]);
        p.sigma = double(sigmas[l]);
        pts.push_back(p);
      }
  }
  return pts;
}

// Uniform-with-replacement pixel sampling, forward, losses, backward, Adam,
// sigma schedule. Deterministic for a fixed seed and thread count.
template <class S>
FitResult<S> fit_image(const FieldConfig& cfg, const ImageDataset& ds, const TrainOptions& opt) {
  if (cfg.dim != 2) throw std::invalid_argument("fit_image: config dim must be 2");
  if (cfg.output_dim != ds.pixels.channels)
    throw std::invalid_argument("fit_image: output_dim must match image channels");
  if (ds.weight.rows() != ds.pixels.height || ds.weight.cols() != ds.pixels.width)
    throw std::invalid_argument("fit_image: weight map shape mismatch");

  const int H = ds.pixels.height, W = ds.pixels.width, C = ds.pixels.channels;
  const std::int64_t npix = std::int64_t(H) * W;

  FitResult<S> res;
  res.params = init_params<S>(cfg, opt.seed);
  res.state = make_train_state<S>(res.params.layout, opt);

  Rng sampler(opt.seed ^ 0x5b5ce065a5dad1eeull);
  // fixed validation subsample, drawn once
  Rng val_rng(opt.seed ^ 0x3c6ef372fe94f82bull);
  const int nval = int(std::min<std::int64_t>(opt.val_subsample, npix));
  Eigen::MatrixX<S> val_pos(2, nval);
  Eigen::MatrixX<S> val_tgt(C, nval);
  for (int j = 0; j < nval; ++j) {
    const std::int64_t p = std::int64_t(val_rng.below(npix));
    const int r = int(p / W), c = int(p % W);
    val_pos(0, j) = S((c + 0.5) / double(W));
    val_pos(1, j) = S((r + 0.5) / double(H));
    for (int ch = 0; ch < C; ++ch) val_tgt(ch, j) = S(ds.pixels.at(r, c, ch));
  }

  ImageBatch<S> batch;
  batch.positions.resize(2, opt.batch);
  batch.targets.resize(C, opt.batch);
  batch.weights.resize(opt.batch);
  ImageLossWorkspace<S> ws;
  Eigen::VectorX<S> grads = Eigen::VectorX<S>::Zero(res.params.layout.total);

  const auto t0 = std::chrono::steady_clock::now();
  for (std::int64_t s = 0; s < opt.steps; ++s) {
    for (int j = 0; j < opt.batch; ++j) {
      const std::int64_t p = std::int64_t(sampler.below(npix));
      const int r = int(p / W), c = int(p % W);
      batch.positions(0, j) = S((c + 0.5) / double(W));
      batch.positions(1, j) = S((r + 0.5) / double(H));
      for (int ch = 0; ch < C; ++ch) batch.targets(ch, j) = S(ds.pixels.at(r, c, ch));
      batch.weights[j] = S(ds.weight(r, c));
    }
    const std::vector<S> sigmas = sigmas_at<S>(cfg, s);
    grads.setZero();
    const LossValue lv =
        image_loss(cfg, res.params, sigmas, batch, opt.losses, s, &grads, ws, opt.threads);
    adam_step(res.state, res.params, grads);

    if ((s + 1) % opt.log_every == 0 || s + 1 == opt.steps) {
      const std::vector<S> sig_now = sigmas_at<S>(cfg, s + 1);
      const Eigen::MatrixX<S> out = field_eval(cfg, res.params, sig_now, val_pos);
      double mse = 0.0;
      for (int j = 0; j < nval; ++j)
        for (int ch = 0; ch < C; ++ch) {
          const double e = double(sigmoid(out(ch, j))) - double(val_tgt(ch, j));
          mse += e * e;
        }
      mse /= double(nval) * C;
      res.metrics.push_back({s + 1, lv.recon, lv.guide, 0.0, psnr_from_mse(mse)});
    }
  }
  res.train_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  const std::vector<S> sig_end = sigmas_at<S>(cfg, res.state.step);
  res.final_psnr = psnr(render_full(cfg, res.params, sig_end, H, W), ds.pixels);
  return res;
}

}  // namespace hashfield
