// Copyright 2026 The hashfield Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>
#include <istream>
#include <sstream>

#include "hashfield/image_task.hpp"

namespace hashfield {

// ---------------------------------------------------------------------------
// Analytic 2D scene: disks with constant density and color. A nonzero feather
// width smooths the silhouette (smoothstep falloff), which keeps quadrature
// convergence clean for the fixtures that need it. Densities add where disks
// overlap; color is the density-weighted average.

struct Disk {
  double cx = 0.5, cy = 0.5, radius = 0.1, density = 10.0;
  std::array<double, 3> color{1.0, 1.0, 1.0};
  double feather = 0.0;

  double coverage(double x, double y) const {
    const double dx = x - cx, dy = y - cy;
    const double r = std::sqrt(dx * dx + dy * dy);
    if (r >= radius) return 0.0;
    if (feather <= 0.0 || r <= radius - feather) return 1.0;
    const double t = (radius - r) / feather;  // in (0, 1)
    return t * t * (3.0 - 2.0 * t);
  }
};

struct FlatScene {
  std::vector<Disk> disks;

  double density_at(double x, double y) const {
    double tau = 0.0;
    for (const Disk& d : disks) tau += d.density * d.coverage(x, y);
    return tau;
  }

  std::array<double, 3> color_at(double x, double y) const {
    double tau = 0.0;
    std::array<double, 3> c{0, 0, 0};
    for (const Disk& d : disks) {
      const double w = d.density * d.coverage(x, y);
      tau += w;
      for (int i = 0; i < 3; ++i) c[i] += w * d.color[i];
    }
    if (tau > 0.0)
      for (double& v : c) v /= tau;
    return c;
  }
};

// Text fixture format, one primitive per line:
//   disk <cx> <cy> <radius> <density> <r> <g> <b> [feather]
// '#' starts a comment.
inline FlatScene parse_scene(std::istream& in) {
  FlatScene scene;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ss(line);
    std::string kind;
    if (!(ss >> kind)) continue;
    if (kind != "disk")
      throw ConfigError("scene line " + std::to_string(lineno) + ": unknown primitive '" + kind +
                        "'");
    Disk d;
    if (!(ss >> d.cx >> d.cy >> d.radius >> d.density >> d.color[0] >> d.color[1] >> d.color[2]))
      throw ConfigError("scene line " + std::to_string(lineno) + ": expected 7 numbers");
    ss >> d.feather;  // optional
    if (d.density < 0.0) throw ConfigError("scene: density must be non-negative");
    if (d.cx - d.radius < 0.0 || d.cx + d.radius > 1.0 || d.cy - d.radius < 0.0 ||
        d.cy + d.radius > 1.0)
      throw ConfigError("scene: disk must lie inside the unit square");
    scene.disks.push_back(d);
  }
  return scene;
}

// ---------------------------------------------------------------------------
// 1D pinhole camera in the plane.

struct Camera1D {
  Eigen::Vector2d origin{0.5, 0.02};
  double view_angle = std::numbers::pi / 2;  // direction of the view axis
  double fov = std::numbers::pi / 3;
  int pixels = 128;
};

struct Ray2 {
  Eigen::Vector2d origin, dir;  // dir is unit length
};

inline Ray2 camera_ray(const Camera1D& cam, int pixel) {
  const double a =
      cam.view_angle + cam.fov * ((pixel + 0.5) / double(cam.pixels) - 0.5);
  return {cam.origin, {std::cos(a), std::sin(a)}};
}

// Cameras on a ring inside the unit square, all aimed at the center.
inline std::vector<Camera1D> camera_ring(int count, double radius, double fov, int pixels,
                                         double phase = 0.0) {
  std::vector<Camera1D> cams(count);
  for (int i = 0; i < count; ++i) {
    const double a = phase + 2.0 * std::numbers::pi * i / count;
    cams[i].origin = {0.5 + radius * std::cos(a), 0.5 + radius * std::sin(a)};
    cams[i].view_angle = std::atan2(0.5 - cams[i].origin.y(), 0.5 - cams[i].origin.x());
    cams[i].fov = fov;
    cams[i].pixels = pixels;
  }
  return cams;
}

inline void check_camera(const Camera1D& cam, const FlatScene& scene) {
  for (const Disk& d : scene.disks) {
    const double dx = cam.origin.x() - d.cx, dy = cam.origin.y() - d.cy;
    if (dx * dx + dy * dy <= d.radius * d.radius)
      throw std::invalid_argument("camera origin lies inside a scene primitive");
  }
}

// Entry/exit parameters of a ray against the unit square; returns t0 > t1
// when the ray misses. Marching stays inside the field's domain.
inline std::pair<double, double> ray_unit_box(const Ray2& ray) {
  double t0 = 0.0, t1 = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 2; ++a) {
    const double o = ray.origin[a], d = ray.dir[a];
    if (std::abs(d) < 1e-12) {
      if (o < 0.0 || o > 1.0) return {1.0, 0.0};
      continue;
    }
    double lo = (0.0 - o) / d, hi = (1.0 - o) / d;
    if (lo > hi) std::swap(lo, hi);
    t0 = std::max(t0, lo);
    t1 = std::min(t1, hi);
  }
  return {t0, t1};
}

// ---------------------------------------------------------------------------
// Quadrature along a ray. alpha_i = 1 - exp(-tau_i ds_i), T_i = prod(1-alpha),
// w_i = T_i alpha_i; sum w_i + T_final telescopes to exactly 1.

template <class S>
struct RaySamples {
  Eigen::VectorX<S> s, ds;      // midpoints and interval lengths, s ascending
  Eigen::MatrixX<S> positions;  // 2 x n
  Eigen::VectorX<S> tau;
  Eigen::MatrixX<S> color;  // 3 x n
  Eigen::VectorX<S> alpha, trans, weight;  // trans[i] = T before sample i
  S t_final = S(1);
  Eigen::Matrix<S, 3, 1> rendered = Eigen::Matrix<S, 3, 1>::Zero();
  S opacity = S(0);
};

template <class S>
void composite_weights(const Eigen::VectorX<S>& tau, const Eigen::VectorX<S>& ds,
                       Eigen::VectorX<S>& alpha, Eigen::VectorX<S>& trans,
                       Eigen::VectorX<S>& weight, S& t_final) {
  const Eigen::Index n = tau.size();
  alpha.resize(n);
  trans.resize(n);
  weight.resize(n);
  S t = S(1);
  for (Eigen::Index i = 0; i < n; ++i) {
    alpha[i] = S(1) - std::exp(-tau[i] * ds[i]);
    trans[i] = t;
    weight[i] = t * alpha[i];
    t *= S(1) - alpha[i];
  }
  t_final = t;
}

// Reverse of composite_weights: dL/dtau_i = ds_i (g_i T_{i+1} - sum_{j>i} g_j w_j)
// with g = dL/dw. Division-free, so saturated rays stay finite.
template <class S>
void composite_backward(const Eigen::VectorX<S>& ds, const Eigen::VectorX<S>& alpha,
                        const Eigen::VectorX<S>& trans, const Eigen::VectorX<S>& weight,
                        const Eigen::VectorX<S>& dweight, Eigen::VectorX<S>& dtau) {
  const Eigen::Index n = ds.size();
  dtau.resize(n);
  S suffix = S(0);
  for (Eigen::Index i = n; i-- > 0;) {
    const S t_next = trans[i] * (S(1) - alpha[i]);
    dtau[i] = ds[i] * (dweight[i] * t_next - suffix);
    suffix += dweight[i] * weight[i];
  }
}

// Midpoint-rule march of the analytic scene.
template <class S>
RaySamples<S> march_ray(const FlatScene& scene, const Ray2& ray, int steps, double near,
                        double far) {
  if (!(near < far) || steps < 1) throw std::invalid_argument("march_ray: bad interval");
  RaySamples<S> rs;
  const double dt = (far - near) / steps;
  rs.s.resize(steps);
  rs.ds = Eigen::VectorX<S>::Constant(steps, S(dt));
  rs.positions.resize(2, steps);
  rs.tau.resize(steps);
  rs.color.resize(3, steps);
  for (int i = 0; i < steps; ++i) {
    const double t = near + (i + 0.5) * dt;
    rs.s[i] = S(t);
    const Eigen::Vector2d p = ray.origin + t * ray.dir;
    rs.positions(0, i) = S(p.x());
    rs.positions(1, i) = S(p.y());
    rs.tau[i] = S(scene.density_at(p.x(), p.y()));
    const auto c = scene.color_at(p.x(), p.y());
    for (int ch = 0; ch < 3; ++ch) rs.color(ch, i) = S(c[ch]);
  }
  composite_weights(rs.tau, rs.ds, rs.alpha, rs.trans, rs.weight, rs.t_final);
  rs.rendered = rs.color * rs.weight;
  rs.opacity = rs.weight.sum();
  return rs;
}

// Same quadrature with densities and colors read from the field
// (softplus density, sigmoid color).
template <class S>
RaySamples<S> march_ray(const FieldConfig& cfg, const ParameterStore<S>& store,
                        const std::vector<S>& sigmas, const Ray2& ray, int steps, double near,
                        double far) {
  if (!(near < far) || steps < 1) throw std::invalid_argument("march_ray: bad interval");
  if (cfg.output_dim != 4)
    throw std::invalid_argument("march_ray: field output_dim must be 4 (density + rgb)");
  RaySamples<S> rs;
  const double dt = (far - near) / steps;
  rs.s.resize(steps);
  rs.ds = Eigen::VectorX<S>::Constant(steps, S(dt));
  rs.positions.resize(2, steps);
  for (int i = 0; i < steps; ++i) {
    const double t = near + (i + 0.5) * dt;
    rs.s[i] = S(t);
    const Eigen::Vector2d p = ray.origin + t * ray.dir;
    rs.positions(0, i) = S(p.x());
    rs.positions(1, i) = S(p.y());
  }
  const Eigen::MatrixX<S> out = field_eval(cfg, store, sigmas, rs.positions);
  rs.tau.resize(steps);
  rs.color.resize(3, steps);
  for (int i = 0; i < steps; ++i) {
    rs.tau[i] = softplus(out(0, i));
    for (int ch = 0; ch < 3; ++ch) rs.color(ch, i) = sigmoid(out(ch + 1, i));
  }
  composite_weights(rs.tau, rs.ds, rs.alpha, rs.trans, rs.weight, rs.t_final);
  rs.rendered = rs.color * rs.weight;
  rs.opacity = rs.weight.sum();
  return rs;
}

// ---------------------------------------------------------------------------
// Batched training loss over a set of rays with fixed sample positions.

template <class S>
struct RayBatch {
  int rays = 0, samples = 0;
  Eigen::MatrixX<S> positions;  // 2 x (rays*samples)
  Eigen::MatrixX<S> s, ds;      // samples x rays
  Eigen::MatrixX<S> gt;         // 3 x rays
};

template <class S>
struct FlatlandLossWorkspace {
  Tape<S> tape;
  Eigen::MatrixX<S> tau, alpha, trans, weight;  // samples x rays
  Eigen::MatrixX<S> color;                      // 3 x (rays*samples)
  Eigen::MatrixX<S> pred, dpred;                // 3 x rays
  Eigen::MatrixX<S> dweight, dtau;              // samples x rays
  Eigen::MatrixX<S> dout;                       // 4 x (rays*samples)
  Eigen::VectorX<S> guide_w;                    // rays*samples
};

// Full volumetric loss: Huber on composited colors, per-ray distortion
// (averaged over rays), and guidance over all sample positions weighted by
// the integration weights. The guidance weights are treated as constants;
// `frozen_guide_weights` pins them for finite-difference fixtures.
template <class S>
LossValue flatland_loss(const FieldConfig& cfg, const ParameterStore<S>& store,
                        const std::vector<S>& sigmas, const RayBatch<S>& batch,
                        const LossWeights& weights, std::int64_t step,
                        const Eigen::VectorX<S>* frozen_guide_weights, Eigen::VectorX<S>* grads,
                        FlatlandLossWorkspace<S>& ws, int threads = 1) {
  const int R = batch.rays, N = batch.samples;
  const Eigen::Index total = Eigen::Index(R) * N;
  if (batch.positions.cols() != total)
    throw std::invalid_argument("flatland_loss: position count mismatch");

  forward_record(cfg, store, sigmas, batch.positions, ws.tape, threads);

  ws.tau.resize(N, R);
  ws.color.resize(3, total);
  for (Eigen::Index i = 0; i < total; ++i) {
    ws.tau(i % N, i / N) = softplus(ws.tape.output(0, i));
    for (int ch = 0; ch < 3; ++ch) ws.color(ch, i) = sigmoid(ws.tape.output(ch + 1, i));
  }

  ws.alpha.resize(N, R);
  ws.trans.resize(N, R);
  ws.weight.resize(N, R);
  ws.pred.resize(3, R);
  Eigen::VectorX<S> t_final(R);
  for (int r = 0; r < R; ++r) {
    Eigen::VectorX<S> a, t, w;
    const Eigen::VectorX<S> tau_r = ws.tau.col(r);
    const Eigen::VectorX<S> ds_r = batch.ds.col(r);
    S tf;
    composite_weights(tau_r, ds_r, a, t, w, tf);
    ws.alpha.col(r) = a;
    ws.trans.col(r) = t;
    ws.weight.col(r) = w;
    t_final[r] = tf;
    ws.pred.col(r) = ws.color.middleCols(Eigen::Index(r) * N, N) * w;
  }

  LossValue out;
  ws.dpred.resize(3, R);
  out.recon = double(huber_loss_grad<S>({ws.pred.data(), size_t(ws.pred.size())},
                                        {batch.gt.data(), size_t(batch.gt.size())},
                                        S(weights.huber_delta), ws.dpred.data()));

  if (weights.lambda_dist > 0.0) {
    double acc = 0.0;
    for (int r = 0; r < R; ++r)
      acc += double(distortion_loss<S>({ws.weight.col(r).data(), size_t(N)},
                                       {batch.s.col(r).data(), size_t(N)},
                                       {batch.ds.col(r).data(), size_t(N)}));
    out.dist = acc / R;
  }

  QueryBatch<S> qb;
  GuidanceResult<S> guide;
  const double ramp = warmup_ramp(step, weights.guide_warmup_steps);
  if (weights.lambda_guide > 0.0) {
    qb.positions = batch.positions;
    if (frozen_guide_weights) {
      ws.guide_w = *frozen_guide_weights;
    } else {
      ws.guide_w.resize(total);
      for (int r = 0; r < R; ++r) ws.guide_w.segment(Eigen::Index(r) * N, N) = ws.weight.col(r);
    }
    qb.weights = ws.guide_w;
    guide = guidance_loss(cfg, store, sigmas, qb);
    out.guide = guide.value;
  }

  out.total = out.recon + weights.lambda_dist * out.dist +
              weights.lambda_guide * ramp * out.guide;

  if (grads) {
    ws.dweight.resize(N, R);
    ws.dtau.resize(N, R);
    for (int r = 0; r < R; ++r) {
      // recon path: rendered = sum_i w_i c_i
      for (int i = 0; i < N; ++i) {
        S acc = S(0);
        for (int ch = 0; ch < 3; ++ch)
          acc += ws.dpred(ch, r) * ws.color(ch, Eigen::Index(r) * N + i);
        ws.dweight(i, r) = acc;
      }
      if (weights.lambda_dist > 0.0)
        distortion_backward<S>({ws.weight.col(r).data(), size_t(N)},
                               {batch.s.col(r).data(), size_t(N)},
                               {batch.ds.col(r).data(), size_t(N)},
                               S(weights.lambda_dist / R), ws.dweight.col(r).data());
      Eigen::VectorX<S> dtau_r;
      const Eigen::VectorX<S> ds_r = batch.ds.col(r);
      const Eigen::VectorX<S> a_r = ws.alpha.col(r);
      const Eigen::VectorX<S> t_r = ws.trans.col(r);
      const Eigen::VectorX<S> w_r = ws.weight.col(r);
      const Eigen::VectorX<S> dw_r = ws.dweight.col(r);
      composite_backward(ds_r, a_r, t_r, w_r, dw_r, dtau_r);
      ws.dtau.col(r) = dtau_r;
    }

    ws.dout.resize(4, total);
    for (Eigen::Index i = 0; i < total; ++i) {
      const int r = int(i / N), j = int(i % N);
      // softplus' = sigmoid of the raw density output
      ws.dout(0, i) = ws.dtau(j, r) * sigmoid(ws.tape.output(0, i));
      for (int ch = 0; ch < 3; ++ch) {
        const S c = ws.color(ch, i);
        ws.dout(ch + 1, i) = ws.dpred(ch, r) * ws.weight(j, r) * c * (S(1) - c);
      }
    }
    backward_field(cfg, store, ws.tape, ws.dout, *grads, threads);
    if (weights.lambda_guide > 0.0 && ramp > 0.0)
      guidance_backward(cfg, store, sigmas, qb, guide, S(weights.lambda_guide * ramp), *grads);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Training loop.

struct FlatlandOptions {
  TrainOptions train;
  int cameras = 32;
  int pixels = 128;
  int rays_per_batch = 64;
  int samples_per_ray = 48;
  int gt_samples = 512;
  int eval_cameras = 4;
  double ring_radius = 0.42;
  double fov = std::numbers::pi / 3;
};

// Ground-truth 1D render of one camera (midpoint quadrature).
inline Eigen::MatrixXd render_camera(const FlatScene& scene, const Camera1D& cam, int samples) {
  Eigen::MatrixXd img(3, cam.pixels);
  for (int p = 0; p < cam.pixels; ++p) {
    const Ray2 ray = camera_ray(cam, p);
    const auto [t0, t1] = ray_unit_box(ray);
    if (!(t0 < t1)) {
      img.col(p).setZero();
      continue;
    }
    const auto rs = march_ray<double>(scene, ray, samples, t0, t1);
    img.col(p) = rs.rendered;
  }
  return img;
}

template <class S>
Eigen::MatrixXd render_camera(const FieldConfig& cfg, const ParameterStore<S>& store,
                              const std::vector<S>& sigmas, const Camera1D& cam, int samples) {
  Eigen::MatrixXd img(3, cam.pixels);
  for (int p = 0; p < cam.pixels; ++p) {
    const Ray2 ray = camera_ray(cam, p);
    const auto [t0, t1] = ray_unit_box(ray);
    if (!(t0 < t1)) {
      img.col(p).setZero();
      continue;
    }
    const auto rs = march_ray(cfg, store, sigmas, ray, samples, t0, t1);
    img.col(p) = rs.rendered.template cast<double>();
  }
  return img;
}

inline double psnr_1d(const std::vector<Eigen::MatrixXd>& pred,
                      const std::vector<Eigen::MatrixXd>& gt) {
  double acc = 0.0;
  std::int64_t n = 0;
  for (size_t i = 0; i < pred.size(); ++i) {
    acc += (pred[i] - gt[i]).squaredNorm();
    n += pred[i].size();
  }
  return psnr_from_mse(n > 0 ? acc / double(n) : 0.0);
}

template <class S>
struct FlatlandFitResult {
  FitResult<S> fit;
  double final_distortion = 0;  // mean distortion over held-out rays, trained field
};

// Trains against ground-truth renders from a ring of training cameras;
// held-out cameras sit between training ones and provide the PSNR metric.
template <class S>
FlatlandFitResult<S> fit_flatland(const FieldConfig& cfg, const FlatScene& scene,
                                  const FlatlandOptions& opt) {
  if (cfg.dim != 2) throw std::invalid_argument("fit_flatland: config dim must be 2");
  if (cfg.output_dim != 4)
    throw std::invalid_argument("fit_flatland: output_dim must be 4 (density + rgb)");

  const auto cams = camera_ring(opt.cameras, opt.ring_radius, opt.fov, opt.pixels);
  const auto eval_cams = camera_ring(opt.eval_cameras, opt.ring_radius, opt.fov, opt.pixels,
                                     std::numbers::pi / opt.cameras);
  for (const auto& c : cams) check_camera(c, scene);
  for (const auto& c : eval_cams) check_camera(c, scene);

  std::vector<Eigen::MatrixXd> gt(cams.size()), gt_eval(eval_cams.size());
  for (size_t i = 0; i < cams.size(); ++i) gt[i] = render_camera(scene, cams[i], opt.gt_samples);
  for (size_t i = 0; i < eval_cams.size(); ++i)
    gt_eval[i] = render_camera(scene, eval_cams[i], opt.gt_samples);

  FlatlandFitResult<S> res;
  res.fit.params = init_params<S>(cfg, opt.train.seed);
  res.fit.state = make_train_state<S>(res.fit.params.layout, opt.train);

  Rng sampler(opt.train.seed ^ 0x94d049bb133111ebull);
  const int R = opt.rays_per_batch, N = opt.samples_per_ray;
  RayBatch<S> batch;
  batch.rays = R;
  batch.samples = N;
  batch.positions.resize(2, Eigen::Index(R) * N);
  batch.s.resize(N, R);
  batch.ds.resize(N, R);
  batch.gt.resize(3, R);
  FlatlandLossWorkspace<S> ws;
  Eigen::VectorX<S> grads = Eigen::VectorX<S>::Zero(res.fit.params.layout.total);

  auto eval_psnr = [&](int samples) {
    const std::vector<S> sig = sigmas_at<S>(cfg, res.fit.state.step);
    std::vector<Eigen::MatrixXd> pred(eval_cams.size());
    for (size_t i = 0; i < eval_cams.size(); ++i)
      pred[i] = render_camera(cfg, res.fit.params, sig, eval_cams[i], samples);
    return psnr_1d(pred, gt_eval);
  };

  const auto t0 = std::chrono::steady_clock::now();
  for (std::int64_t s = 0; s < opt.train.steps; ++s) {
    for (int r = 0; r < R; ++r) {
      const int ci = int(sampler.below(cams.size()));
      const int px = int(sampler.below(opt.pixels));
      const Ray2 ray = camera_ray(cams[ci], px);
      auto [tn, tf] = ray_unit_box(ray);
      if (!(tn < tf)) tf = tn + 1e-3;  // degenerate rays see empty space
      const double dt = (tf - tn) / N;
      for (int i = 0; i < N; ++i) {
        const double t = tn + (i + sampler.uniform()) * dt;  // stratified
        batch.s(i, r) = S(t);
        batch.ds(i, r) = S(dt);
        const Eigen::Vector2d p = ray.origin + t * ray.dir;
        batch.positions(0, Eigen::Index(r) * N + i) = S(std::clamp(p.x(), 0.0, 1.0));
        batch.positions(1, Eigen::Index(r) * N + i) = S(std::clamp(p.y(), 0.0, 1.0));
      }
      batch.gt.col(r) = gt[ci].col(px).cast<S>();
    }
    const std::vector<S> sigmas = sigmas_at<S>(cfg, s);
    grads.setZero();
    const LossValue lv = flatland_loss<S>(cfg, res.fit.params, sigmas, batch, opt.train.losses,
                                          s, nullptr, &grads, ws, opt.train.threads);
    adam_step(res.fit.state, res.fit.params, grads);

    if ((s + 1) % opt.train.log_every == 0 || s + 1 == opt.train.steps)
      res.fit.metrics.push_back(
          {s + 1, lv.recon, lv.guide, lv.dist, eval_psnr(std::min(128, opt.gt_samples))});
  }
  res.fit.train_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  res.fit.final_psnr = eval_psnr(opt.gt_samples);

  // held-out distortion metric for the surface-compactness trend
  {
    const std::vector<S> sig = sigmas_at<S>(cfg, res.fit.state.step);
    double acc = 0.0;
    int count = 0;
    for (const auto& cam : eval_cams)
      for (int p = 0; p < cam.pixels; ++p) {
        const Ray2 ray = camera_ray(cam, p);
        const auto [t0r, t1r] = ray_unit_box(ray);
        if (!(t0r < t1r)) continue;
        const auto rs = march_ray(cfg, res.fit.params, sig, ray, opt.samples_per_ray, t0r, t1r);
        acc += double(distortion_loss<S>({rs.weight.data(), size_t(rs.weight.size())},
                                         {rs.s.data(), size_t(rs.s.size())},
                                         {rs.ds.data(), size_t(rs.ds.size())}));
        ++count;
      }
    res.final_distortion = count > 0 ? acc / count : 0.0;
  }
  return res;
}

}  // namespace hashfield
