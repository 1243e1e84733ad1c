// Copyright 2026 The hashfield Authors
// SPDX-License-Identifier: Apache-2.0
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "hashfield/io.hpp"

namespace hashfield {

using nlohmann::json;

namespace {

json to_json(const RunConfig& c) {
  json j;
  j["task"] = c.task;
  j["seed"] = c.seed;
  j["fd_loss"] = c.fd_loss;
  json& f = j["field"];
  f["dim"] = c.field.dim;
  f["levels"] = c.field.levels;
  f["lagrangian_levels"] = c.field.lagrangian_levels;
  f["base_res"] = c.field.base_res;
  f["growth"] = c.field.growth;
  f["max_res"] = c.field.max_res;
  f["table_size"] = c.field.table_size;
  f["gaussians_per_bucket"] = c.field.gaussians_per_bucket;
  f["feature_dim"] = c.field.feature_dim;
  f["mlp_hidden"] = c.field.mlp_hidden;
  f["mlp_layers"] = c.field.mlp_layers;
  f["output_dim"] = c.field.output_dim;
  f["sigma_start_mult"] = c.field.sigma_start_mult;
  f["sigma_end_mult"] = c.field.sigma_end_mult;
  f["sigma_decay_steps"] = c.field.sigma_decay_steps;
  json& l = j["losses"];
  l["lambda_dist"] = c.losses.lambda_dist;
  l["lambda_guide"] = c.losses.lambda_guide;
  l["guide_warmup_steps"] = c.losses.guide_warmup_steps;
  l["huber_delta"] = c.losses.huber_delta;
  json& o = j["optim"];
  o["lr"] = c.optim.lr;
  o["lr_gaussian"] = c.optim.lr_gaussian;
  o["beta1"] = c.optim.beta1;
  o["beta2"] = c.optim.beta2;
  o["epsilon"] = c.optim.epsilon;
  o["steps"] = c.optim.steps;
  o["batch"] = c.optim.batch;
  o["threads"] = c.optim.threads;
  o["log_every"] = c.optim.log_every;
  o["val_subsample"] = c.optim.val_subsample;
  json& fl = j["flatland"];
  fl["cameras"] = c.flatland.cameras;
  fl["pixels"] = c.flatland.pixels;
  fl["rays_per_batch"] = c.flatland.rays_per_batch;
  fl["samples_per_ray"] = c.flatland.samples_per_ray;
  fl["gt_samples"] = c.flatland.gt_samples;
  fl["eval_cameras"] = c.flatland.eval_cameras;
  fl["ring_radius"] = c.flatland.ring_radius;
  fl["fov_deg"] = c.flatland.fov_deg;
  json& io = j["io"];
  io["image"] = c.io.image;
  io["scene"] = c.io.scene;
  io["out_dir"] = c.io.out_dir;
  io["checkpoint"] = c.io.checkpoint;
  return j;
}

template <class T>
void read_to(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("config field '") + key + "' has the wrong type");
  }
}

RunConfig from_json(const json& j) {
  RunConfig c;
  read_to(j, "task", c.task);
  read_to(j, "seed", c.seed);
  read_to(j, "fd_loss", c.fd_loss);
  if (j.contains("optim")) {
    const json& o = j.at("optim");
    read_to(o, "lr", c.optim.lr);
    read_to(o, "lr_gaussian", c.optim.lr_gaussian);
    read_to(o, "beta1", c.optim.beta1);
    read_to(o, "beta2", c.optim.beta2);
    read_to(o, "epsilon", c.optim.epsilon);
    read_to(o, "steps", c.optim.steps);
    read_to(o, "batch", c.optim.batch);
    read_to(o, "threads", c.optim.threads);
    read_to(o, "log_every", c.optim.log_every);
    read_to(o, "val_subsample", c.optim.val_subsample);
  }
  // schedule horizons default to fractions of the training run
  c.field.sigma_decay_steps = std::max<std::int64_t>(1, c.optim.steps / 2);
  c.losses.guide_warmup_steps = c.optim.steps / 10;
  if (j.contains("field")) {
    const json& f = j.at("field");
    read_to(f, "dim", c.field.dim);
    read_to(f, "levels", c.field.levels);
    read_to(f, "lagrangian_levels", c.field.lagrangian_levels);
    read_to(f, "base_res", c.field.base_res);
    read_to(f, "growth", c.field.growth);
    read_to(f, "max_res", c.field.max_res);
    read_to(f, "table_size", c.field.table_size);
    read_to(f, "gaussians_per_bucket", c.field.gaussians_per_bucket);
    read_to(f, "feature_dim", c.field.feature_dim);
    read_to(f, "mlp_hidden", c.field.mlp_hidden);
    read_to(f, "mlp_layers", c.field.mlp_layers);
    read_to(f, "output_dim", c.field.output_dim);
    read_to(f, "sigma_start_mult", c.field.sigma_start_mult);
    read_to(f, "sigma_end_mult", c.field.sigma_end_mult);
    read_to(f, "sigma_decay_steps", c.field.sigma_decay_steps);
  }
  if (j.contains("losses")) {
    const json& l = j.at("losses");
    read_to(l, "lambda_dist", c.losses.lambda_dist);
    read_to(l, "lambda_guide", c.losses.lambda_guide);
    read_to(l, "guide_warmup_steps", c.losses.guide_warmup_steps);
    read_to(l, "huber_delta", c.losses.huber_delta);
  }
  if (j.contains("flatland")) {
    const json& fl = j.at("flatland");
    read_to(fl, "cameras", c.flatland.cameras);
    read_to(fl, "pixels", c.flatland.pixels);
    read_to(fl, "rays_per_batch", c.flatland.rays_per_batch);
    read_to(fl, "samples_per_ray", c.flatland.samples_per_ray);
    read_to(fl, "gt_samples", c.flatland.gt_samples);
    read_to(fl, "eval_cameras", c.flatland.eval_cameras);
    read_to(fl, "ring_radius", c.flatland.ring_radius);
    read_to(fl, "fov_deg", c.flatland.fov_deg);
  }
  if (j.contains("io")) {
    const json& io = j.at("io");
    read_to(io, "image", c.io.image);
    read_to(io, "scene", c.io.scene);
    read_to(io, "out_dir", c.io.out_dir);
    read_to(io, "checkpoint", c.io.checkpoint);
  }
  return c;
}

void collect_keys(const json& j, const std::string& prefix, std::vector<std::string>& out) {
  for (const auto& [key, value] : j.items()) {
    const std::string path = prefix.empty() ? key : prefix + "." + key;
    if (value.is_object())
      collect_keys(value, path, out);
    else
      out.push_back(path);
  }
}

void apply_override(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos)
    throw ConfigError("override '" + assignment + "' must look like key=value");
  const std::string key = assignment.substr(0, eq);
  const std::string value = assignment.substr(eq + 1);

  const std::vector<std::string> valid = valid_override_keys();
  if (std::find(valid.begin(), valid.end(), key) == valid.end()) {
    std::string msg = "unknown config key '" + key + "'; valid keys:";
    for (const auto& k : valid) msg += " " + k;
    throw ConfigError(msg);
  }

  json parsed;
  try {
    parsed = json::parse(value);
  } catch (const json::exception&) {
    parsed = value;  // bare strings are fine
  }

  json* node = &doc;
  std::stringstream ss(key);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ss, part, '.')) parts.push_back(part);
  for (size_t i = 0; i + 1 < parts.size(); ++i) node = &(*node)[parts[i]];
  (*node)[parts.back()] = parsed;
}

}  // namespace

void RunConfig::validate() const {
  if (task != "image" && task != "flatland")
    throw ConfigError("task must be \"image\" or \"flatland\"");
  if (fd_loss != "full" && fd_loss != "guidance")
    throw ConfigError("fd_loss must be \"full\" or \"guidance\"");
  field.validate();
  losses.validate();
  if (optim.steps < 1 || optim.batch < 1) throw ConfigError("optim.steps and optim.batch must be >= 1");
  if (optim.threads < 1) throw ConfigError("optim.threads must be >= 1");
  if (optim.log_every < 1) throw ConfigError("optim.log_every must be >= 1");
  if (!(optim.lr > 0.0) || !(optim.lr_gaussian > 0.0)) throw ConfigError("learning rates must be positive");
  if (task == "flatland") {
    if (field.output_dim != 4) throw ConfigError("flatland needs field.output_dim = 4 (density + rgb)");
    if (flatland.cameras < 1 || flatland.pixels < 1 || flatland.rays_per_batch < 1 ||
        flatland.samples_per_ray < 1 || flatland.gt_samples < 1 || flatland.eval_cameras < 1)
      throw ConfigError("flatland counts must be >= 1");
    if (!(flatland.ring_radius > 0.0) || flatland.ring_radius >= 0.5)
      throw ConfigError("flatland.ring_radius must be in (0, 0.5)");
    if (!(flatland.fov_deg > 0.0) || flatland.fov_deg >= 180.0)
      throw ConfigError("flatland.fov_deg must be in (0, 180)");
  }
}

RunConfig run_config_from_json_text(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return from_json(doc);
}

std::string run_config_to_json_text(const RunConfig& cfg) { return to_json(cfg).dump(2); }

std::vector<std::string> valid_override_keys() {
  std::vector<std::string> keys;
  collect_keys(to_json(RunConfig{}), "", keys);
  return keys;
}

RunConfig load_run_config(const std::string& path, const std::vector<std::string>& overrides) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  json doc;
  try {
    doc = json::parse(buf.str());
  } catch (const json::exception& e) {
    throw ConfigError("config " + path + " is not valid JSON: " + e.what());
  }
  for (const std::string& o : overrides) apply_override(doc, o);
  RunConfig cfg = from_json(doc);
  cfg.validate();

  // input paths resolve against the config file's directory; out_dir stays
  // relative to the working directory
  const std::filesystem::path base = std::filesystem::path(path).parent_path();
  auto resolve = [&base](std::string& p) {
    if (p.empty() || p.rfind("proc:", 0) == 0) return;
    const std::filesystem::path fp(p);
    if (fp.is_absolute()) return;
    if (std::filesystem::exists(fp)) return;  // already reachable from the cwd
    const std::filesystem::path joined = base / fp;
    if (std::filesystem::exists(joined)) p = joined.string();
  };
  resolve(cfg.io.image);
  resolve(cfg.io.scene);
  resolve(cfg.io.checkpoint);
  return cfg;
}

TrainOptions train_options_from(const RunConfig& cfg) {
  TrainOptions opt;
  opt.steps = cfg.optim.steps;
  opt.batch = cfg.optim.batch;
  opt.log_every = cfg.optim.log_every;
  opt.seed = cfg.seed;
  opt.threads = cfg.optim.threads;
  opt.lr = cfg.optim.lr;
  opt.lr_gaussian = cfg.optim.lr_gaussian;
  opt.beta1 = cfg.optim.beta1;
  opt.beta2 = cfg.optim.beta2;
  opt.epsilon = cfg.optim.epsilon;
  opt.val_subsample = cfg.optim.val_subsample;
  opt.losses = cfg.losses;
  return opt;
}

FlatlandOptions flatland_options_from(const RunConfig& cfg) {
  FlatlandOptions opt;
  opt.train = train_options_from(cfg);
  opt.cameras = cfg.flatland.cameras;
  opt.pixels = cfg.flatland.pixels;
  opt.rays_per_batch = cfg.flatland.rays_per_batch;
  opt.samples_per_ray = cfg.flatland.samples_per_ray;
  opt.gt_samples = cfg.flatland.gt_samples;
  opt.eval_cameras = cfg.flatland.eval_cameras;
  opt.ring_radius = cfg.flatland.ring_radius;
  opt.fov = cfg.flatland.fov_deg * std::numbers::pi / 180.0;
  return opt;
}

}  // namespace hashfield
