// Copyright 2026 The hashfield Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <memory>

#include "hashfield/fdcheck.hpp"
#include "hashfield/flatland.hpp"
#include "hashfield/image_task.hpp"

namespace hashfield {

// Gradient-check fixtures: small deterministic problems that close the tasks'
// own loss code over a fixed batch, in both precisions. The shipped fixture
// configs live under fixtures/.

namespace detail {

template <class S>
ImageBatch<S> cast_image_batch(const ImageBatch<double>& b) {
  return {b.positions.cast<S>(), b.targets.cast<S>(), b.weights.cast<S>()};
}

template <class S>
RayBatch<S> cast_ray_batch(const RayBatch<double>& b) {
  return {b.rays, b.samples, b.positions.cast<S>(), b.s.cast<S>(), b.ds.cast<S>(),
          b.gt.cast<S>()};
}

// Fixture parameter point: trained-scale values rather than the near-zero
// init, so ReLU and Huber kinks sit far from the evaluation point relative to
// the finite-difference step.
inline Eigen::VectorXd fd_params(const FieldConfig& cfg, std::uint64_t seed) {
  Eigen::VectorXd p = init_params<double>(cfg, seed).values;
  Rng spread(seed ^ 0xd1b54a32d192ed03ull);
  for (Eigen::Index i = 0; i < p.size(); ++i) p[i] += 0.2 * spread.normal();
  return p;
}

}  // namespace detail

// Image-fitting loss (or the guidance term alone) over every pixel of `ds`.
inline FdFixture make_image_fd_fixture(const FieldConfig& field, const LossWeights& weights,
                                       const ImageDataset& ds, bool guidance_only = false,
                                       std::uint64_t seed = 11, std::int64_t step = 10) {
  FdFixture fx;
  fx.name = guidance_only ? "guidance" : "image";
  fx.field = field;
  if (fx.field.output_dim != ds.pixels.channels)
    throw std::invalid_argument("fd fixture: output_dim must match image channels");
  fx.layout = make_layout(fx.field);
  fx.params0 = detail::fd_params(fx.field, seed);

  const int H = ds.pixels.height, W = ds.pixels.width, C = ds.pixels.channels;
  auto batch = std::make_shared<ImageBatch<double>>();
  const Eigen::Index m = Eigen::Index(H) * W;
  batch->positions.resize(2, m);
  batch->targets.resize(C, m);
  batch->weights.resize(m);
  for (Eigen::Index p = 0; p < m; ++p) {
    const int r = int(p / W), c = int(p % W);
    batch->positions(0, p) = (c + 0.5) / double(W);
    batch->positions(1, p) = (r + 0.5) / double(H);
    for (int ch = 0; ch < C; ++ch) batch->targets(ch, p) = ds.pixels.at(r, c, ch);
    batch->weights[p] = ds.weight(r, c);
  }

  const FieldConfig cfg = fx.field;
  const ParamLayout layout = fx.layout;
  const bool recon = !guidance_only;
  auto eval = [cfg, layout, batch, weights, step, recon]<class S>(const Eigen::VectorX<S>& p,
                                                                  Eigen::VectorX<S>* g) {
    ParameterStore<S> store{layout, p};
    const std::vector<S> sigmas = sigmas_at<S>(cfg, step);
    const ImageBatch<S> b = detail::cast_image_batch<S>(*batch);
    if (recon) {
      ImageLossWorkspace<S> ws;
      const LossValue lv = image_loss(cfg, store, sigmas, b, weights, step, g, ws);
      return lv.total;
    }
    QueryBatch<S> qb{b.positions, b.weights};
    const GuidanceResult<S> guide = guidance_loss(cfg, store, sigmas, qb);
    if (g) guidance_backward(cfg, store, sigmas, qb, guide, S(weights.lambda_guide), *g);
    return weights.lambda_guide * guide.value;
  };
  fx.loss_d = [eval](const Eigen::VectorXd& p) { return eval(p, (Eigen::VectorXd*)nullptr); };
  fx.grad_d = [eval](const Eigen::VectorXd& p, Eigen::VectorXd& g) { return eval(p, &g); };
  fx.loss_f = [eval](const Eigen::VectorXf& p) { return eval(p, (Eigen::VectorXf*)nullptr); };
  fx.grad_f = [eval](const Eigen::VectorXf& p, Eigen::VectorXf& g) { return eval(p, &g); };
  return fx;
}

// Full volumetric loss over rays_per_batch deterministic rays of
// samples_per_ray midpoint samples each. Guidance weights are frozen at the
// base parameters, so finite differences see exactly the loss whose gradient
// the training step applies.
inline FdFixture make_flatland_fd_fixture(const FieldConfig& field, const LossWeights& weights,
                                          const FlatScene& scene, int rays, int samples,
                                          double ring_radius = 0.42,
                                          double fov = std::numbers::pi / 3,
                                          std::uint64_t seed = 13, std::int64_t step = 10) {
  FdFixture fx;
  fx.name = "flatland";
  fx.field = field;
  if (fx.field.output_dim != 4)
    throw std::invalid_argument("fd fixture: flatland needs output_dim = 4");
  fx.layout = make_layout(fx.field);
  fx.params0 = detail::fd_params(fx.field, seed);

  const int pixels = std::max(8, rays);
  const auto cams = camera_ring(std::max(2, rays), ring_radius, fov, pixels);
  auto batch = std::make_shared<RayBatch<double>>();
  batch->rays = rays;
  batch->samples = samples;
  batch->positions.resize(2, Eigen::Index(rays) * samples);
  batch->s.resize(samples, rays);
  batch->ds.resize(samples, rays);
  batch->gt.resize(3, rays);
  for (int r = 0; r < rays; ++r) {
    const Camera1D& cam = cams[r % cams.size()];
    check_camera(cam, scene);
    const Ray2 ray = camera_ray(cam, (3 + 2 * r) % pixels);
    const auto [t0, t1] = ray_unit_box(ray);
    const double dt = (t1 - t0) / samples;
    for (int i = 0; i < samples; ++i) {
      const double t = t0 + (i + 0.5) * dt;
      batch->s(i, r) = t;
      batch->ds(i, r) = dt;
      const Eigen::Vector2d p = ray.origin + t * ray.dir;
      batch->positions(0, Eigen::Index(r) * samples + i) = std::clamp(p.x(), 0.0, 1.0);
      batch->positions(1, Eigen::Index(r) * samples + i) = std::clamp(p.y(), 0.0, 1.0);
    }
    batch->gt.col(r) = march_ray<double>(scene, ray, 64, t0, t1).rendered;
  }

  auto frozen = std::make_shared<Eigen::VectorXd>();
  {
    ParameterStore<double> store{fx.layout, fx.params0};
    const std::vector<double> sigmas = sigmas_at<double>(fx.field, step);
    FlatlandLossWorkspace<double> ws;
    flatland_loss<double>(fx.field, store, sigmas, *batch, weights, step, nullptr, nullptr, ws);
    *frozen = ws.guide_w;
  }

  const FieldConfig cfg = fx.field;
  const ParamLayout layout = fx.layout;
  auto eval = [cfg, layout, batch, weights, step, frozen]<class S>(const Eigen::VectorX<S>& p,
                                                                   Eigen::VectorX<S>* g) {
    ParameterStore<S> store{layout, p};
    const std::vector<S> sigmas = sigmas_at<S>(cfg, step);
    const RayBatch<S> b = detail::cast_ray_batch<S>(*batch);
    const Eigen::VectorX<S> w = frozen->cast<S>();
    FlatlandLossWorkspace<S> ws;
    const LossValue lv = flatland_loss(cfg, store, sigmas, b, weights, step, &w, g, ws);
    return lv.total;
  };
  fx.loss_d = [eval](const Eigen::VectorXd& p) { return eval(p, (Eigen::VectorXd*)nullptr); };
  fx.grad_d = [eval](const Eigen::VectorXd& p, Eigen::VectorXd& g) { return eval(p, &g); };
  fx.loss_f = [eval](const Eigen::VectorXf& p) { return eval(p, (Eigen::VectorXf*)nullptr); };
  fx.grad_f = [eval](const Eigen::VectorXf& p, Eigen::VectorXf& g) { return eval(p, &g); };
  return fx;
}

}  // namespace hashfield
