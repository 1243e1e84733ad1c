// Copyright 2026 The hashfield Authors
// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "hashfield/losses.hpp"
#include "hashfield/optim.hpp"
#include "hashfield/synth_images.hpp"

using namespace hashfield;

namespace {

FieldConfig random_lag_config(Rng& rng) {
  for (;;) {
    FieldConfig cfg;
    cfg.dim = 2;
    cfg.levels = 1 + int(rng.below(3));
    cfg.lagrangian_levels = 1 + int(rng.below(cfg.levels));
    cfg.base_res = 1 + int(rng.below(4));
    cfg.growth = rng.uniform(1.5, 2.3);
    cfg.table_size = 1 << (2 + int(rng.below(4)));
    cfg.gaussians_per_bucket = 1 + int(rng.below(4));
    cfg.feature_dim = 1 + int(rng.below(2));
    cfg.mlp_layers = 0;
    cfg.output_dim = 1;
    try {
      cfg.validate();
      return cfg;
    } catch (const ConfigError&) {
    }
  }
}

// Exhaustive reimplementation of the per-point guidance term: its own
// multilinear weights, plain min over every (corner, gaussian) pair.
double guidance_brute_force(const FieldConfig& cfg, const ParameterStore<double>& store,
                            const std::vector<double>& sigmas,
                            const Eigen::MatrixXd& positions, const Eigen::VectorXd& weights) {
  const int K = cfg.gaussians_per_bucket;
  double total = 0.0;
  for (Eigen::Index i = 0; i < positions.cols(); ++i) {
    const double x = positions(0, i), y = positions(1, i);
    double point = 0.0;
    for (int l = 0; l < cfg.levels; ++l) {
      const LevelLayout& lvl = store.layout.levels[l];
      if (lvl.kind != LevelKind::Lagrangian) continue;
      const int res = lvl.res;
      int cx = std::min(int(std::floor(x * res)), res - 1);
      int cy = std::min(int(std::floor(y * res)), res - 1);
      const double fx = x * res - cx, fy = y * res - cy;
      const double alphas[4] = {(1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy, fx * fy};
      const int corners[4][2] = {{cx, cy}, {cx + 1, cy}, {cx, cy + 1}, {cx + 1, cy + 1}};
      double best = std::numeric_limits<double>::infinity();
      for (int v = 0; v < 4; ++v) {
        if (alphas[v] <= 0.0) continue;
        const std::uint32_t b = vertex_index(lvl, 2, {corners[v], 2});
        for (int k = 0; k < K; ++k) {
          const double* mu = store.values.data() + lvl.means + (std::int64_t(b) * K + k) * 2;
          const double d2 = (x - mu[0]) * (x - mu[0]) + (y - mu[1]) * (y - mu[1]);
          const double t = -std::log(alphas[v]) + d2 / (2 * sigmas[l] * sigmas[l]);
          best = std::min(best, t);
        }
      }
      point += best;
    }
    total += weights[i] * point;
  }
  return positions.cols() > 0 ? total / double(positions.cols()) : 0.0;
}

}  // namespace

TEST_CASE("huber_loss: zero, branch boundary, linear branch") {
  const double delta = 0.1;
  std::vector<double> p{0.5}, t{0.5};
  CHECK(huber_loss<double>(p, t, delta) == 0.0);

  p[0] = 0.5 + delta;  // e = delta, quadratic side of the boundary
  CHECK(huber_loss<double>(p, t, delta) == doctest::Approx(0.5 * delta * delta).epsilon(1e-12));

  p[0] = 0.5 + 2 * delta;  // e = 2 delta
  CHECK(huber_loss<double>(p, t, delta) == doctest::Approx(0.015).epsilon(1e-12));

  std::vector<double> bad{1.0, 2.0};
  CHECK_THROWS_AS((void)huber_loss<double>(bad, t, delta), std::invalid_argument);
}

TEST_CASE("huber_loss: continuous and C1 at the branch boundary") {
  const double delta = 0.1;
  const double eps = 1e-7;
  std::vector<double> t{0.0};
  for (const double side : {delta, -delta}) {
    std::vector<double> lo{side - eps}, hi{side + eps};
    const double l0 = huber_loss<double>(lo, t, delta);
    const double l1 = huber_loss<double>(hi, t, delta);
    CHECK(std::abs(l1 - l0) < 2 * delta * eps * 1.01);  // value continuous
    // derivative across the boundary via second differences
    std::vector<double> mid{side};
    const double dlo = (huber_loss<double>(mid, t, delta) - l0) / eps;
    const double dhi = (l1 - huber_loss<double>(mid, t, delta)) / eps;
    CHECK(std::abs(dhi - dlo) < 1e-6);
  }
}

TEST_CASE("huber_loss_grad matches finite differences") {
  Rng rng(5);
  std::vector<double> pred(16), target(16), grad(16);
  for (int i = 0; i < 16; ++i) {
    pred[i] = rng.uniform();
    target[i] = rng.uniform();
  }
  const double delta = 0.1;
  huber_loss_grad<double>(pred, target, delta, grad.data());
  for (int i = 0; i < 16; ++i) {
    const double saved = pred[i];
    pred[i] = saved + 1e-7;
    const double lp = huber_loss<double>(pred, target, delta);
    pred[i] = saved - 1e-7;
    const double lm = huber_loss<double>(pred, target, delta);
    pred[i] = saved;
    CHECK(grad[i] == doctest::Approx((lp - lm) / 2e-7).epsilon(1e-4));
  }
}

TEST_CASE("guidance_loss: closed-form identities") {
  FieldConfig cfg;
  cfg.dim = 2;
  cfg.levels = 1;
  cfg.lagrangian_levels = 1;
  cfg.base_res = 1;
  cfg.growth = 2.0;
  cfg.table_size = 8;
  cfg.gaussians_per_bucket = 1;
  cfg.feature_dim = 1;
  cfg.mlp_layers = 0;
  cfg.output_dim = 1;
  auto store = init_params<double>(cfg, 2);
  const LevelLayout lvl = store.layout.levels[0];
  const std::vector<double> sigmas{0.5};

  // place the gaussian of bucket(vertex 0,0) exactly on x = (0,0): alpha = 1
  store.values[lvl.means] = 0.0;
  store.values[lvl.means + 1] = 0.0;
  QueryBatch<double> qb;
  qb.positions = Eigen::MatrixXd::Zero(2, 1);
  qb.weights = Eigen::VectorXd::Ones(1);
  CHECK(guidance_loss(cfg, store, sigmas, qb).value == doctest::Approx(0.0).epsilon(1e-12));

  // alpha = 0.5 with mu on x: term = W log 2
  // x = (0.5, 0) on res-1 grid: corners (0,*) and (1,*) each with alpha 0.5
  qb.positions(0, 0) = 0.5;
  const int c0[2] = {0, 0}, c1[2] = {1, 0};
  const std::uint32_t b0 = vertex_index(lvl, 2, {c0, 2});
  const std::uint32_t b1 = vertex_index(lvl, 2, {c1, 2});
  store.values[lvl.means + std::int64_t(b0) * 2] = 0.5;
  store.values[lvl.means + std::int64_t(b0) * 2 + 1] = 0.0;
  // push the other bucket's gaussian far away
  store.values[lvl.means + std::int64_t(b1) * 2] = 42.0;
  store.values[lvl.means + std::int64_t(b1) * 2 + 1] = 42.0;
  qb.weights[0] = 3.0;
  CHECK(guidance_loss(cfg, store, sigmas, qb).value ==
        doctest::Approx(3.0 * std::log(2.0)).epsilon(1e-12));

  // missing weights is a contract error
  QueryBatch<double> noweights;
  noweights.positions = Eigen::MatrixXd::Zero(2, 1);
  CHECK_THROWS_AS((void)guidance_loss(cfg, store, sigmas, noweights), std::invalid_argument);
}

TEST_CASE("guidance_loss equals exhaustive brute force on random configs") {
  Rng rng(99);
  for (int trial = 0; trial < 300; ++trial) {
    const FieldConfig cfg = random_lag_config(rng);
    const auto store = init_params<double>(cfg, rng.next_u64());
    const std::vector<double> sigmas = sigmas_at<double>(cfg, int(rng.below(200)));
    const int m = 1 + int(rng.below(8));
    QueryBatch<double> qb;
    qb.positions.resize(2, m);
    qb.weights.resize(m);
    for (int i = 0; i < m; ++i) {
      qb.positions.col(i) << rng.uniform(), rng.uniform();
      qb.weights[i] = rng.uniform();
    }
    const double got = guidance_loss(cfg, store, sigmas, qb).value;
    const double want = guidance_brute_force(cfg, store, sigmas, qb.positions, qb.weights);
    CHECK(std::abs(got - want) <= 1e-12);
    CHECK(got >= 0.0);  // alphas <= 1 and W >= 0 keep every term non-negative
  }
}

TEST_CASE("guidance_loss: scaling W scales the value and keeps argmins") {
  Rng rng(123);
  const FieldConfig cfg = random_lag_config(rng);
  const auto store = init_params<double>(cfg, 7);
  const std::vector<double> sigmas = sigmas_at<double>(cfg, 10);
  QueryBatch<double> qb;
  qb.positions.resize(2, 16);
  qb.weights.resize(16);
  for (int i = 0; i < 16; ++i) {
    qb.positions.col(i) << rng.uniform(), rng.uniform();
    qb.weights[i] = rng.uniform(0.1, 1.0);
  }
  const auto base = guidance_loss(cfg, store, sigmas, qb);
  QueryBatch<double> scaled = qb;
  scaled.weights *= 3.5;
  const auto res = guidance_loss(cfg, store, sigmas, scaled);
  CHECK(res.value == doctest::Approx(3.5 * base.value).epsilon(1e-12));
  for (size_t i = 0; i < base.argmin.size(); ++i) {
    CHECK(res.argmin[i].corner == base.argmin[i].corner);
    CHECK(res.argmin[i].k == base.argmin[i].k);
  }
}

TEST_CASE("guidance_loss: moving the argmin mean onto x never increases the term") {
  Rng rng(321);
  for (int trial = 0; trial < 100; ++trial) {
    const FieldConfig cfg = random_lag_config(rng);
    auto store = init_params<double>(cfg, rng.next_u64());
    const std::vector<double> sigmas = sigmas_at<double>(cfg, 10);
    QueryBatch<double> qb;
    qb.positions.resize(2, 1);
    qb.positions << rng.uniform(), rng.uniform();
    qb.weights = Eigen::VectorXd::Ones(1);
    const auto before = guidance_loss(cfg, store, sigmas, qb);

    // move every level's argmin gaussian onto the query
    int lag = 0;
    for (int l = 0; l < cfg.levels; ++l) {
      const LevelLayout& lvl = store.layout.levels[l];
      if (lvl.kind != LevelKind::Lagrangian) continue;
      const GuidanceArgmin& arg = before.argmin[lag];
      const std::int64_t e = std::int64_t(arg.bucket) * cfg.gaussians_per_bucket + arg.k;
      store.values[lvl.means + e * 2] = qb.positions(0, 0);
      store.values[lvl.means + e * 2 + 1] = qb.positions(1, 0);
      ++lag;
    }
    const auto after = guidance_loss(cfg, store, sigmas, qb);
    CHECK(after.value <= before.value + 1e-12);
  }
}

TEST_CASE("guidance_loss: ties break to the lowest (corner, k)") {
  FieldConfig cfg;
  cfg.dim = 2;
  cfg.levels = 1;
  cfg.lagrangian_levels = 1;
  cfg.base_res = 1;
  cfg.growth = 2.0;
  cfg.table_size = 8;
  cfg.gaussians_per_bucket = 2;
  cfg.feature_dim = 1;
  cfg.mlp_layers = 0;
  cfg.output_dim = 1;
  auto store = init_params<double>(cfg, 3);
  const LevelLayout lvl = store.layout.levels[0];
  // make gaussians k=0 and k=1 of every bucket identical: exact tie
  for (std::int64_t b = 0; b < lvl.rows; ++b) {
    for (int d = 0; d < 2; ++d) {
      store.values[lvl.means + (b * 2 + 1) * 2 + d] = store.values[lvl.means + b * 2 * 2 + d];
    }
  }
  QueryBatch<double> qb;
  qb.positions.resize(2, 1);
  qb.positions << 0.25, 0.25;  // interior: all four corners have alpha > 0
  qb.weights = Eigen::VectorXd::Ones(1);
  const auto res = guidance_loss(cfg, store, {0.5}, qb);
  CHECK(res.argmin[0].k == 0);  // lowest k wins the tie
}

TEST_CASE("distortion_loss: zeros, single sample, contract") {
  std::vector<double> w{0.0, 0.0, 0.0}, s{0.1, 0.2, 0.3}, ds{0.1, 0.1, 0.1};
  CHECK(distortion_loss<double>(w, s, ds) == 0.0);

  std::vector<double> w1{1.0}, s1{0.5}, ds1{0.01};
  CHECK(distortion_loss<double>(w1, s1, ds1) == doctest::Approx(0.01 / 3.0).epsilon(1e-12));

  // two samples with positive weight: strictly positive
  std::vector<double> w2{0.4, 0.0, 0.3}, s2{0.1, 0.2, 0.3}, ds2{0.1, 0.1, 0.1};
  CHECK(distortion_loss<double>(w2, s2, ds2) > 0.0);

  std::vector<double> bad_s{0.3, 0.2, 0.1};
  CHECK_THROWS_AS((void)distortion_loss<double>(w, bad_s, ds), std::invalid_argument);
}

TEST_CASE("distortion_loss: O(S) prefix form equals the quadratic double loop") {
  Rng rng(17);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 1 + int(rng.below(128));
    std::vector<double> w(n), s(n), ds(n);
    double at = 0.0;
    for (int i = 0; i < n; ++i) {
      ds[i] = rng.uniform(0.001, 0.02);
      s[i] = at + 0.5 * ds[i];
      at += ds[i];
      w[i] = rng.uniform();
    }
    const double fast = distortion_loss<double>(w, s, ds);
    double pair = 0.0, intra = 0.0;
    for (int i = 0; i < n; ++i) {
      intra += w[i] * w[i] * ds[i] / 3.0;
      for (int j = 0; j < n; ++j) pair += w[i] * w[j] * std::abs(s[i] - s[j]);
    }
    CHECK(fast == doctest::Approx(pair + intra).epsilon(1e-10));
    CHECK(fast >= 0.0);
  }
}

TEST_CASE("distortion_backward matches finite differences") {
  Rng rng(23);
  const int n = 32;
  std::vector<double> w(n), s(n), ds(n);
  double at = 0.0;
  for (int i = 0; i < n; ++i) {
    ds[i] = rng.uniform(0.001, 0.02);
    s[i] = at + 0.5 * ds[i];
    at += ds[i];
    w[i] = rng.uniform();
  }
  std::vector<double> dw(n, 0.0);
  distortion_backward<double>(w, s, ds, 1.0, dw.data());
  for (int i = 0; i < n; ++i) {
    const double saved = w[i];
    w[i] = saved + 1e-7;
    const double lp = distortion_loss<double>(w, s, ds);
    w[i] = saved - 1e-7;
    const double lm = distortion_loss<double>(w, s, ds);
    w[i] = saved;
    CHECK(dw[i] == doctest::Approx((lp - lm) / 2e-7).epsilon(1e-5));
  }
}

TEST_CASE("image_weight_map: constant image, step edge, naive stencil oracle") {
  CHECK(image_weight_map(Image(8, 8, 1, 0.37f)).cwiseAbs().maxCoeff() == 0.0f);

  const Image edge = make_synthetic_image("edge", 16);
  const Eigen::MatrixXf map = image_weight_map(edge);
  for (int r = 0; r < 16; ++r) {
    for (int c = 0; c < 16; ++c) {
      if (c == 7 || c == 8)
        CHECK(map(r, c) == 1.0f);  // the two columns adjacent to the step
      else
        CHECK(map(r, c) == 0.0f);
    }
  }

  // random image vs an independent two-loop stencil
  Rng rng(31);
  Image img(9, 11, 3);
  for (auto& v : img.data) v = float(rng.uniform());
  const Eigen::MatrixXf got = image_weight_map(img);
  double maxv = 0.0;
  Eigen::MatrixXd raw(9, 11);
  for (int r = 0; r < 9; ++r)
    for (int c = 0; c < 11; ++c) {
      auto lum = [&](int rr, int cc) {
        return 0.299 * img.at(rr, cc, 0) + 0.587 * img.at(rr, cc, 1) + 0.114 * img.at(rr, cc, 2);
      };
      const double gx = c == 0    ? lum(r, 1) - lum(r, 0)
                        : c == 10 ? lum(r, 10) - lum(r, 9)
                                  : (lum(r, c + 1) - lum(r, c - 1)) / 2;
      const double gy = r == 0   ? lum(1, c) - lum(0, c)
                        : r == 8 ? lum(8, c) - lum(7, c)
                                 : (lum(r + 1, c) - lum(r - 1, c)) / 2;
      raw(r, c) = std::sqrt(gx * gx + gy * gy);
      maxv = std::max(maxv, raw(r, c));
    }
  for (int r = 0; r < 9; ++r)
    for (int c = 0; c < 11; ++c) {
      CHECK(got(r, c) == doctest::Approx(raw(r, c) / maxv).epsilon(1e-5));
      CHECK(got(r, c) >= 0.0f);
      CHECK(got(r, c) <= 1.0f);
    }
}

TEST_CASE("total_loss: weights and warm-up ramp") {
  LossWeights w;
  w.lambda_dist = 0.0;
  w.lambda_guide = 0.0;
  CHECK(total_loss(0.7, 123.0, 456.0, w, 0) == 0.7);

  w.lambda_dist = 1e-3;
  w.lambda_guide = 0.1;
  w.guide_warmup_steps = 100;
  CHECK(total_loss(1.0, 2.0, 3.0, w, 0) == doctest::Approx(1.0 + 1e-3 * 2.0).epsilon(1e-15));
  CHECK(total_loss(1.0, 2.0, 3.0, w, 50) ==
        doctest::Approx(1.0 + 2e-3 + 0.1 * 0.5 * 3.0).epsilon(1e-12));
  CHECK(total_loss(1.0, 2.0, 3.0, w, 100) == doctest::Approx(1.0 + 2e-3 + 0.3).epsilon(1e-12));
  CHECK(total_loss(1.0, 2.0, 3.0, w, 5000) == doctest::Approx(1.0 + 2e-3 + 0.3).epsilon(1e-12));
}
