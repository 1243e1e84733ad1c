// Copyright 2026 The hashfield Authors
// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "hashfield/io.hpp"

namespace hashfield {

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

}  // namespace

std::string metrics_csv(const std::vector<MetricsRow>& rows) {
  std::string out = "step,recon,guide,dist,psnr\n";
  for (const MetricsRow& r : rows)
    out += std::to_string(r.step) + "," + fmt(r.recon) + "," + fmt(r.guide) + "," + fmt(r.dist) +
           "," + fmt(r.psnr) + "\n";
  return out;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::string out = "variant,params,psnr,seconds\n";
  for (const SweepRow& r : rows)
    out += r.variant + "," + std::to_string(r.params) + "," + fmt(r.psnr) + "," + fmt(r.seconds) +
           "\n";
  return out;
}

std::string points_csv(const std::vector<GaussianPoint>& points) {
  std::string out = "level,bucket,k,mu_x,mu_y,sigma\n";
  for (const GaussianPoint& p : points)
    out += std::to_string(p.level) + "," + std::to_string(p.bucket) + "," + std::to_string(p.k) +
           "," + fmt(p.mu[0]) + "," + fmt(p.mu[1]) + "," + fmt(p.sigma) + "\n";
  return out;
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << text;
  if (!out) throw std::runtime_error("short write: " + path);
}

namespace {

void set_axis(RunConfig& cfg, const std::string& axis, std::int64_t value) {
  if (axis == "field.table_size")
    cfg.field.table_size = int(value);
  else if (axis == "field.gaussians_per_bucket")
    cfg.field.gaussians_per_bucket = int(value);
  else if (axis == "field.lagrangian_levels")
    cfg.field.lagrangian_levels = int(value);
  else
    throw ConfigError("sweep axis must be one of field.table_size, "
                      "field.gaussians_per_bucket, field.lagrangian_levels");
}

// Eulerian-only counterpart at the closest parameter count: scans power-of-two
// table sizes and keeps the one whose total is nearest the hybrid's.
RunConfig matched_baseline(const RunConfig& hybrid) {
  const std::int64_t target = count_params(hybrid.field).total;
  RunConfig base = hybrid;
  base.field.lagrangian_levels = 0;
  std::int64_t best_diff = std::numeric_limits<std::int64_t>::max();
  int best_table = hybrid.field.table_size;
  for (int table = 2; table <= (1 << 24); table <<= 1) {
    base.field.table_size = table;
    const std::int64_t diff = std::abs(count_params(base.field).total - target);
    if (diff < best_diff) {
      best_diff = diff;
      best_table = table;
    }
    // row counts saturate once every level is injective
    if (diff > best_diff) break;
  }
  base.field.table_size = best_table;
  return base;
}

SweepRow run_one(const RunConfig& cfg, const ImageDataset& ds, const std::string& variant) {
  cfg.validate();
  const FitResult<float> fit = fit_image<float>(cfg.field, ds, train_options_from(cfg));
  if (!cfg.io.out_dir.empty()) {
    std::filesystem::create_directories(cfg.io.out_dir);
    save_checkpoint(cfg.io.out_dir + "/" + variant + ".lagh", cfg, fit.params, fit.state);
  }
  return {variant, count_params(cfg.field).total, fit.final_psnr, fit.train_seconds};
}

}  // namespace

std::vector<SweepRow> run_sweep(const RunConfig& base, const std::string& axis,
                                const std::vector<std::int64_t>& values, bool baseline_eulerian) {
  if (base.task != "image") throw ConfigError("sweep runs on the image task");
  if (values.empty()) throw ConfigError("sweep needs at least one axis value");

  const ImageDataset ds = make_dataset(load_image_source(base.io.image));
  std::vector<SweepRow> rows;
  for (const std::int64_t v : values) {
    RunConfig cfg = base;
    set_axis(cfg, axis, v);
    rows.push_back(run_one(cfg, ds, "hybrid_" + axis.substr(6) + "=" + std::to_string(v)));
    if (baseline_eulerian && cfg.field.lagrangian_levels > 0) {
      const RunConfig b = matched_baseline(cfg);
      rows.push_back(run_one(b, ds, "eulerian_" + axis.substr(6) + "=" + std::to_string(v)));
    }
  }
  std::stable_sort(rows.begin(), rows.end(),
                   [](const SweepRow& a, const SweepRow& b) { return a.params < b.params; });
  return rows;
}

}  // namespace hashfield
