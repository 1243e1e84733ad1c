// Copyright 2026 The hashfield Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace hashfield {

// Invalid user-facing configuration. The CLI maps this to exit code 1;
// everything else that escapes is a runtime failure (exit code 2).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class LevelKind { Eulerian, Lagrangian };

// Hyperparameters of the multi-level field. Levels run coarse to fine and the
// finest `lagrangian_levels` store per-bucket Gaussian mixtures; the rest are
// plain feature tables.
struct FieldConfig {
  int dim = 2;
  int levels = 6;
  int lagrangian_levels = 2;
  int base_res = 16;
  double growth = 0.0;  // geometric growth factor; 0 means derive from max_res
  int max_res = 128;
  int table_size = 1 << 12;  // rows per hashed level, power of two
  int gaussians_per_bucket = 4;
  int feature_dim = 2;
  int mlp_hidden = 64;
  int mlp_layers = 1;  // number of hidden layers
  int output_dim = 3;
  double sigma_start_mult = 50.0;  // in units of the grid cell size
  double sigma_end_mult = 5.0;
  std::int64_t sigma_decay_steps = 1000;

  double growth_factor() const {
    if (growth > 1.0) return growth;
    if (levels <= 1) return 2.0;  // unused with a single level
    return std::pow(double(max_res) / double(base_res), 1.0 / double(levels - 1));
  }

  int level_resolution(int level) const {
    return int(std::lround(double(base_res) * std::pow(growth_factor(), level)));
  }

  bool level_is_lagrangian(int level) const { return level >= levels - lagrangian_levels; }

  int corner_count() const { return 1 << dim; }

  bool operator==(const FieldConfig&) const = default;

  int code_dim() const { return levels * feature_dim; }

  void validate() const {
    auto fail = [](const std::string& msg) { throw ConfigError("field config: " + msg); };
    if (dim < 1 || dim > 3) fail("dim must be 1, 2 or 3");
    if (levels < 1) fail("levels must be >= 1");
    if (lagrangian_levels < 0 || lagrangian_levels > levels)
      fail("lagrangian_levels must be in [0, levels]");
    if (base_res < 1) fail("base_res must be >= 1");
    if (levels > 1 && growth <= 1.0 && max_res <= base_res)
      fail("need growth > 1 or max_res > base_res");
    if (table_size < 1 || (table_size & (table_size - 1)) != 0)
      fail("table_size must be a power of two");
    if (gaussians_per_bucket < 1) fail("gaussians_per_bucket must be >= 1");
    if (feature_dim < 1) fail("feature_dim must be >= 1");
    if (mlp_layers < 0) fail("mlp_layers must be >= 0");
    if (mlp_layers > 0 && mlp_hidden < 1) fail("mlp_hidden must be >= 1");
    if (output_dim < 1) fail("output_dim must be >= 1");
    if (!(sigma_start_mult > 0.0) || !(sigma_end_mult > 0.0))
      fail("sigma multipliers must be positive");
    if (sigma_end_mult > sigma_start_mult) fail("sigma_end_mult must be <= sigma_start_mult");
    if (sigma_decay_steps < 1) fail("sigma_decay_steps must be >= 1");
    for (int l = 1; l < levels; ++l)
      if (level_resolution(l) <= level_resolution(l - 1))
        fail("level resolutions must be strictly increasing");
  }
};

// Loss term weights for the total training loss
//   recon + lambda_dist * dist + lambda_guide * ramp(step) * guide.
struct LossWeights {
  double lambda_dist = 0.0;
  double lambda_guide = 0.1;
  std::int64_t guide_warmup_steps = 0;
  double huber_delta = 0.1;

  bool operator==(const LossWeights&) const = default;

  void validate() const {
    if (!(lambda_dist >= 0.0) || !(lambda_guide >= 0.0))
      throw ConfigError("loss weights must be non-negative and finite");
    if (guide_warmup_steps < 0) throw ConfigError("guide_warmup_steps must be >= 0");
    if (!(huber_delta > 0.0)) throw ConfigError("huber_delta must be positive");
  }
};

}  // namespace hashfield
