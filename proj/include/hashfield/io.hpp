// Copyright 2026 The hashfield Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "hashfield/fixtures.hpp"
#include "hashfield/flatland.hpp"
#include "hashfield/image_task.hpp"
#include "hashfield/synth_images.hpp"

namespace hashfield {

// ---------------------------------------------------------------------------
// Run configuration, mirrored 1:1 by the JSON schema (see README).

struct OptimConfig {
  double lr = 1e-2;
  double lr_gaussian = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double epsilon = 1e-15;
  std::int64_t steps = 2000;
  int batch = 4096;
  int threads = 1;
  int log_every = 100;
  int val_subsample = 4096;

  bool operator==(const OptimConfig&) const = default;
};

struct IoConfig {
  std::string image;       // path to a PNG, or "proc:<name>:<size>"
  std::string scene;       // flatland scene fixture
  std::string out_dir;
  std::string checkpoint;  // input for eval / export-points

  bool operator==(const IoConfig&) const = default;
};

struct FlatlandRunConfig {
  int cameras = 32;
  int pixels = 128;
  int rays_per_batch = 64;
  int samples_per_ray = 48;
  int gt_samples = 512;
  int eval_cameras = 4;
  double ring_radius = 0.42;
  double fov_deg = 60.0;

  bool operator==(const FlatlandRunConfig&) const = default;
};

struct RunConfig {
  std::string task = "image";  // "image" or "flatland"
  std::uint64_t seed = 1;
  std::string fd_loss = "full";  // fd-check: "full" or "guidance"
  FieldConfig field;
  LossWeights losses;
  OptimConfig optim;
  FlatlandRunConfig flatland;
  IoConfig io;

  bool operator==(const RunConfig&) const = default;
  void validate() const;
};

RunConfig run_config_from_json_text(const std::string& text);
std::string run_config_to_json_text(const RunConfig& cfg);

// Loads, applies --set style "dotted.path=value" overrides, validates.
RunConfig load_run_config(const std::string& path, const std::vector<std::string>& overrides = {});
std::vector<std::string> valid_override_keys();

TrainOptions train_options_from(const RunConfig& cfg);
FlatlandOptions flatland_options_from(const RunConfig& cfg);

// ---------------------------------------------------------------------------
// PNG and data sources.

Image read_png(const std::string& path);
void write_png(const std::string& path, const Image& img);

// Resolves "proc:<name>:<size>" to a synthetic image, anything else to a PNG.
Image load_image_source(const std::string& spec);
FlatScene load_scene_file(const std::string& path);

// ---------------------------------------------------------------------------
// Checkpoints: magic "LAGH", u16 version, embedded config JSON, parameters
// and Adam moments as little-endian f32, crc32 trailer.

struct Checkpoint {
  RunConfig config;
  ParameterStore<float> params;
  TrainState<float> state;
};

void save_checkpoint(const std::string& path, const RunConfig& cfg,
                     const ParameterStore<float>& params, const TrainState<float>& state);
Checkpoint load_checkpoint(const std::string& path);

// ---------------------------------------------------------------------------
// CSV emitters (deterministic %.9g formatting).

std::string metrics_csv(const std::vector<MetricsRow>& rows);

struct SweepRow {
  std::string variant;
  std::int64_t params = 0;
  double psnr = 0;
  double seconds = 0;
};
std::string sweep_csv(const std::vector<SweepRow>& rows);

std::string points_csv(const std::vector<GaussianPoint>& points);

void write_text_file(const std::string& path, const std::string& text);

// ---------------------------------------------------------------------------
// Pareto sweep over one capacity axis; optionally pairs every point with a
// parameter-matched Eulerian-only baseline. Saves per-run checkpoints under
// io.out_dir when set.

std::vector<SweepRow> run_sweep(const RunConfig& base, const std::string& axis,
                                const std::vector<std::int64_t>& values, bool baseline_eulerian);

// Builds the gradient-check fixture a config describes (task + fd_loss,
// image/scene sources from io).
FdFixture make_fd_fixture(const RunConfig& cfg);

int cli_main(int argc, const char* const* argv);

}  // namespace hashfield
