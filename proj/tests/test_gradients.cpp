// Copyright 2026 The hashfield Authors
// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "hashfield/fixtures.hpp"
#include "hashfield/synth_images.hpp"

using namespace hashfield;

namespace {

ImageDataset checker_dataset() {
  return make_dataset(make_synthetic_image("checker", 8));
}

FieldConfig fd_field_config(int output_dim) {
  FieldConfig cfg;
  cfg.dim = 2;
  cfg.levels = 3;
  cfg.lagrangian_levels = 1;
  cfg.base_res = 2;
  cfg.growth = 2.0;
  cfg.table_size = 16;
  cfg.gaussians_per_bucket = 2;
  cfg.feature_dim = 2;
  cfg.mlp_hidden = 16;
  cfg.mlp_layers = 1;
  cfg.output_dim = output_dim;
  cfg.sigma_decay_steps = 100;
  return cfg;
}

LossWeights fd_weights(double dist = 0.0) {
  LossWeights w;
  w.lambda_dist = dist;
  w.lambda_guide = 0.1;
  w.guide_warmup_steps = 0;
  w.huber_delta = 0.1;
  return w;
}

FlatScene one_disk_scene() {
  FlatScene scene;
  scene.disks.push_back({0.5, 0.5, 0.22, 20.0, {0.9, 0.4, 0.2}});
  return scene;
}

}  // namespace

TEST_CASE("fd_check: quadratic loss matches 2*theta to machine-level error") {
  FdFixture fx;
  fx.name = "quadratic";
  fx.field = fd_field_config(1);
  fx.layout = make_layout(fx.field);
  fx.params0 = init_params<double>(fx.field, 3).values;
  // keep every |gradient| well above the relative/absolute threshold so the
  // check exercises the relative branch cleanly
  for (Eigen::Index i = 0; i < fx.params0.size(); ++i)
    fx.params0[i] = fx.params0[i] >= 0 ? std::max(fx.params0[i], 0.01) : std::min(fx.params0[i], -0.01);
  auto quad = []<class S>(const Eigen::VectorX<S>& p, Eigen::VectorX<S>* g) {
    if (g) *g += S(2) * p;
    return double(p.squaredNorm());
  };
  fx.loss_d = [quad](const Eigen::VectorXd& p) { return quad(p, (Eigen::VectorXd*)nullptr); };
  fx.grad_d = [quad](const Eigen::VectorXd& p, Eigen::VectorXd& g) { return quad(p, &g); };
  fx.loss_f = [quad](const Eigen::VectorXf& p) { return quad(p, (Eigen::VectorXf*)nullptr); };
  fx.grad_f = [quad](const Eigen::VectorXf& p, Eigen::VectorXf& g) { return quad(p, &g); };

  const FdReport rep = fd_check<double>(fx, 4e-6, 1e-7);
  CHECK(rep.pass);
  CHECK(rep.checked == fx.layout.total);
}

TEST_CASE("fd_check: rejects a non-deterministic loss") {
  FdFixture fx;
  fx.field = fd_field_config(1);
  fx.layout = make_layout(fx.field);
  fx.params0 = Eigen::VectorXd::Zero(fx.layout.total);
  auto counter = std::make_shared<int>(0);
  fx.loss_d = [counter](const Eigen::VectorXd&) { return double((*counter)++); };
  fx.grad_d = [](const Eigen::VectorXd&, Eigen::VectorXd&) { return 0.0; };
  CHECK_THROWS_AS((void)fd_check<double>(fx, 4e-6, 1e-5), InvalidFixtureError);
}

TEST_CASE("backward: zero output gradients produce zero parameter gradients") {
  const FieldConfig cfg = fd_field_config(3);
  const auto store = init_params<double>(cfg, 5);
  const std::vector<double> sigmas = sigmas_at<double>(cfg, 10);
  Eigen::MatrixXd pos(2, 9);
  Rng rng(1);
  for (int i = 0; i < 9; ++i) pos.col(i) << rng.uniform(), rng.uniform();
  Tape<double> tape;
  forward_record(cfg, store, sigmas, pos, tape);
  Eigen::VectorXd grads = Eigen::VectorXd::Zero(store.layout.total);
  backward_field(cfg, store, tape, Eigen::MatrixXd(Eigen::MatrixXd::Zero(3, 9)), grads);
  CHECK(grads.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("backward: single-Gaussian mean gradient equals pdf*(x-mu)/sigma^2") {
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
  store.slice("mlp_weights")[0] = 1.0;
  store.slice("mlp_biases")[0] = 0.0;
  store.values[lvl.feats] = 1.0;  // feature 1 => output is the pdf itself
  const double sigma = 0.4;

  // x exactly at vertex (0,0): that corner has alpha 1, bucket 0
  Eigen::MatrixXd pos = Eigen::MatrixXd::Zero(2, 1);
  Tape<double> tape;
  forward_record(cfg, store, {sigma}, pos, tape);
  Eigen::VectorXd grads = Eigen::VectorXd::Zero(store.layout.total);
  backward_field(cfg, store, tape, Eigen::MatrixXd(Eigen::MatrixXd::Ones(1, 1)), grads);

  const double mu0 = store.values[lvl.means];
  const double mu1 = store.values[lvl.means + 1];
  const double pdf = gaussian_pdf<double>(pos.col(0).data(), &store.values[lvl.means], 2, sigma);
  CHECK(grads[lvl.means] == doctest::Approx(pdf * (0.0 - mu0) / (sigma * sigma)).epsilon(1e-10));
  CHECK(grads[lvl.means + 1] ==
        doctest::Approx(pdf * (0.0 - mu1) / (sigma * sigma)).epsilon(1e-10));
}

TEST_CASE("fd: full image-fitting loss, double and single precision, 5 seeds") {
  const ImageDataset ds = checker_dataset();
  for (std::uint64_t seed = 11; seed < 16; ++seed) {
    const FdFixture fx = make_image_fd_fixture(fd_field_config(1), fd_weights(), ds, false, seed);
    const FdReport rd = fd_check<double>(fx, 4e-6, 1e-5);
    INFO("seed ", seed, " double max_rel=", rd.max_rel_error, " abs=", rd.max_abs_error,
         " worst=", rd.worst_slice);
    CHECK(rd.pass);
    const FdReport rf = fd_check<float>(fx, 4e-6, 1e-3);
    INFO("seed ", seed, " single max_rel=", rf.max_rel_error, " abs=", rf.max_abs_error,
         " worst=", rf.worst_slice);
    CHECK(rf.pass);
  }
}

TEST_CASE("fd: guidance-only fixture") {
  const ImageDataset ds = checker_dataset();
  const FdFixture fx = make_image_fd_fixture(fd_field_config(1), fd_weights(), ds, true, 17);
  const FdReport rd = fd_check<double>(fx, 4e-6, 1e-5);
  INFO("double max_rel=", rd.max_rel_error, " worst=", rd.worst_slice);
  CHECK(rd.pass);
  const FdReport rf = fd_check<float>(fx, 4e-6, 1e-3);
  CHECK(rf.pass);
}

TEST_CASE("fd: flatland 2-ray 8-sample fixture") {
  const FdFixture fx = make_flatland_fd_fixture(fd_field_config(4), fd_weights(1e-3),
                                                one_disk_scene(), 2, 8);
  const FdReport rd = fd_check<double>(fx, 4e-6, 1e-5);
  INFO("double max_rel=", rd.max_rel_error, " abs=", rd.max_abs_error, " worst=", rd.worst_slice);
  CHECK(rd.pass);
  const FdReport rf = fd_check<float>(fx, 4e-6, 1e-3);
  INFO("single max_rel=", rf.max_rel_error, " abs=", rf.max_abs_error, " worst=", rf.worst_slice);
  CHECK(rf.pass);
}

TEST_CASE("fd: an exact guidance tie is perturbed before checking") {
  // two identical gaussians make the argmin a subgradient point; nudging one
  // mean restores differentiability and the check passes
  const ImageDataset ds = checker_dataset();
  FieldConfig cfg = fd_field_config(1);
  FdFixture fx = make_image_fd_fixture(cfg, fd_weights(), ds, true, 23);
  const ParamLayout layout = fx.layout;
  const LevelLayout lvl = layout.levels[2];
  // force an exact tie in every bucket
  for (std::int64_t b = 0; b < lvl.rows; ++b)
    for (int d = 0; d < 2; ++d)
      fx.params0[lvl.means + (b * 2 + 1) * 2 + d] = fx.params0[lvl.means + b * 2 * 2 + d];
  // break the ties
  for (std::int64_t b = 0; b < lvl.rows; ++b)
    fx.params0[lvl.means + (b * 2 + 1) * 2] += 1e-3;
  const FdReport rep = fd_check<double>(fx, 4e-6, 1e-5);
  INFO("max_rel=", rep.max_rel_error, " abs=", rep.max_abs_error);
  CHECK(rep.pass);
}

TEST_CASE("fd_check: per-slice subsampling caps the work") {
  const ImageDataset ds = checker_dataset();
  const FdFixture fx = make_image_fd_fixture(fd_field_config(1), fd_weights(), ds, false, 21);
  const FdReport rep = fd_check<double>(fx, 4e-6, 1e-5, 8);
  CHECK(rep.pass);
  CHECK(rep.checked < fx.layout.total);
}

TEST_CASE("guidance gradient lands only on the argmin Gaussian's mean") {
  const FieldConfig cfg = fd_field_config(1);
  const auto store = init_params<double>(cfg, 31);
  const std::vector<double> sigmas = sigmas_at<double>(cfg, 10);

  QueryBatch<double> qb;
  qb.positions.resize(2, 1);
  qb.positions << 0.31, 0.57;
  qb.weights = Eigen::VectorXd::Ones(1);

  const GuidanceResult<double> res = guidance_loss(cfg, store, sigmas, qb);
  Eigen::VectorXd grads = Eigen::VectorXd::Zero(store.layout.total);
  guidance_backward(cfg, store, sigmas, qb, res, 1.0, grads);

  // gradient support: exactly one mean entry (D components) per Lagrangian level
  const LevelLayout lvl = store.layout.levels[2];
  const GuidanceArgmin arg = res.argmin[0];
  const std::int64_t base =
      lvl.means + (std::int64_t(arg.bucket) * cfg.gaussians_per_bucket + arg.k) * 2;
  int nonzero = 0;
  for (std::int64_t i = 0; i < grads.size(); ++i)
    if (grads[i] != 0.0) {
      ++nonzero;
      CHECK((i == base || i == base + 1));
    }
  CHECK(nonzero <= 2);
  CHECK(nonzero >= 1);
}

TEST_CASE("no NaN/Inf gradients when exponents clamp") {
  FieldConfig cfg = fd_field_config(3);
  auto store = init_params<double>(cfg, 41);
  // tiny sigma forces deep exponent clamping for most queries
  const std::vector<double> sigmas{0.5, 0.5, 1e-5};
  Eigen::MatrixXd pos(2, 32);
  Rng rng(5);
  for (int i = 0; i < 32; ++i) pos.col(i) << rng.uniform(), rng.uniform();
  Tape<double> tape;
  forward_record(cfg, store, sigmas, pos, tape);
  Eigen::MatrixXd dout = Eigen::MatrixXd::Ones(3, 32);
  Eigen::VectorXd grads = Eigen::VectorXd::Zero(store.layout.total);
  backward_field(cfg, store, tape, dout, grads);
  CHECK(grads.allFinite());
  CHECK(tape.output.allFinite());
}

TEST_CASE("backward linearity: grad of summed outputs equals summed grads") {
  const FieldConfig cfg = fd_field_config(3);
  const auto store = init_params<double>(cfg, 51);
  const std::vector<double> sigmas = sigmas_at<double>(cfg, 10);
  Eigen::MatrixXd pos(2, 6);
  Rng rng(9);
  for (int i = 0; i < 6; ++i) pos.col(i) << rng.uniform(), rng.uniform();
  Tape<double> tape;
  forward_record(cfg, store, sigmas, pos, tape);

  Eigen::MatrixXd d1(3, 6), d2(3, 6);
  for (int i = 0; i < d1.size(); ++i) {
    d1.data()[i] = rng.uniform(-1, 1);
    d2.data()[i] = rng.uniform(-1, 1);
  }
  Eigen::VectorXd g1 = Eigen::VectorXd::Zero(store.layout.total);
  Eigen::VectorXd g2 = Eigen::VectorXd::Zero(store.layout.total);
  Eigen::VectorXd gsum = Eigen::VectorXd::Zero(store.layout.total);
  backward_field(cfg, store, tape, d1, g1);
  backward_field(cfg, store, tape, d2, g2);
  backward_field(cfg, store, tape, Eigen::MatrixXd(2.0 * d1 + 3.0 * d2), gsum);
  CHECK((gsum - (2.0 * g1 + 3.0 * g2)).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("threaded backward reduces deterministically for a fixed worker count") {
  const FieldConfig cfg = fd_field_config(3);
  const auto store = init_params<float>(cfg, 61);
  const std::vector<float> sigmas = sigmas_at<float>(cfg, 10);
  Eigen::MatrixXf pos(2, 64);
  Rng rng(3);
  for (int i = 0; i < 64; ++i) pos.col(i) << float(rng.uniform()), float(rng.uniform());
  Tape<float> tape;
  forward_record(cfg, store, sigmas, pos, tape, 2);
  Tape<float> tape1;
  forward_record(cfg, store, sigmas, pos, tape1, 1);
  CHECK((tape.output - tape1.output).cwiseAbs().maxCoeff() == 0.0f);

  Eigen::MatrixXf dout(3, 64);
  for (int i = 0; i < dout.size(); ++i) dout.data()[i] = float(rng.uniform(-1, 1));
  Eigen::VectorXf ga = Eigen::VectorXf::Zero(store.layout.total);
  Eigen::VectorXf gb = Eigen::VectorXf::Zero(store.layout.total);
  backward_field(cfg, store, tape, dout, ga, 2);
  backward_field(cfg, store, tape, dout, gb, 2);
  CHECK((ga - gb).cwiseAbs().maxCoeff() == 0.0f);
}
