// Copyright 2026 The hashfield Authors
// SPDX-License-Identifier: Apache-2.0
#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <iostream>

#include "hashfield/io.hpp"

namespace hashfield {

namespace {

namespace fs = std::filesystem;

std::string json_line(std::initializer_list<std::pair<std::string, std::string>> kv) {
  std::string out = "{";
  bool first = true;
  for (const auto& [k, v] : kv) {
    if (!first) out += ",";
    first = false;
    out += "\"" + k + "\":" + v;
  }
  return out + "}";
}

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

void require_out_dir(const RunConfig& cfg) {
  if (cfg.io.out_dir.empty())
    throw ConfigError("io.out_dir must be set (use --set io.out_dir=<dir>)");
  fs::create_directories(cfg.io.out_dir);
}

int cmd_fit_image(const RunConfig& cfg) {
  if (cfg.task != "image") throw ConfigError("fit-image needs task = \"image\"");
  if (cfg.io.image.empty()) throw ConfigError("io.image must be set");
  require_out_dir(cfg);
  const ImageDataset ds = make_dataset(load_image_source(cfg.io.image));
  if (ds.pixels.channels != cfg.field.output_dim)
    throw ConfigError("field.output_dim must match the image channel count (" +
                      std::to_string(ds.pixels.channels) + ")");

  const FitResult<float> fit = fit_image<float>(cfg.field, ds, train_options_from(cfg));

  const std::string dir = cfg.io.out_dir;
  write_text_file(dir + "/metrics.csv", metrics_csv(fit.metrics));
  const std::vector<float> sig = sigmas_at<float>(cfg.field, fit.state.step);
  write_png(dir + "/recon.png",
            render_full(cfg.field, fit.params, sig, ds.pixels.height, ds.pixels.width));
  save_checkpoint(dir + "/checkpoint.lagh", cfg, fit.params, fit.state);
  write_text_file(dir + "/points.csv", points_csv(export_points(cfg.field, fit.params, sig)));

  std::cout << json_line({{"task", "\"image\""},
                          {"psnr", num(fit.final_psnr)},
                          {"params", std::to_string(count_params(cfg.field).total)},
                          {"seconds", num(fit.train_seconds)}})
            << "\n";
  return 0;
}

int cmd_fit_flatland(const RunConfig& cfg) {
  if (cfg.task != "flatland") throw ConfigError("fit-flatland needs task = \"flatland\"");
  if (cfg.io.scene.empty()) throw ConfigError("io.scene must be set");
  require_out_dir(cfg);
  const FlatScene scene = load_scene_file(cfg.io.scene);
  const FlatlandOptions opt = flatland_options_from(cfg);

  const FlatlandFitResult<float> res = fit_flatland<float>(cfg.field, scene, opt);

  const std::string dir = cfg.io.out_dir;
  write_text_file(dir + "/metrics.csv", metrics_csv(res.fit.metrics));
  save_checkpoint(dir + "/checkpoint.lagh", cfg, res.fit.params, res.fit.state);
  const std::vector<float> sig = sigmas_at<float>(cfg.field, res.fit.state.step);
  write_text_file(dir + "/points.csv",
                  points_csv(export_points(cfg.field, res.fit.params, sig)));

  // held-out renders next to their references, for plotting
  {
    const auto eval_cams = camera_ring(opt.eval_cameras, opt.ring_radius, opt.fov, opt.pixels,
                                       std::numbers::pi / opt.cameras);
    std::string csv = "camera,pixel,pred_r,pred_g,pred_b,gt_r,gt_g,gt_b\n";
    for (size_t ci = 0; ci < eval_cams.size(); ++ci) {
      const Eigen::MatrixXd pred =
          render_camera(cfg.field, res.fit.params, sig, eval_cams[ci], opt.gt_samples);
      const Eigen::MatrixXd gt = render_camera(scene, eval_cams[ci], opt.gt_samples);
      for (int p = 0; p < opt.pixels; ++p) {
        csv += std::to_string(ci) + "," + std::to_string(p);
        for (int ch = 0; ch < 3; ++ch) csv += "," + num(pred(ch, p));
        for (int ch = 0; ch < 3; ++ch) csv += "," + num(gt(ch, p));
        csv += "\n";
      }
    }
    write_text_file(dir + "/eval_render.csv", csv);
  }

  std::cout << json_line({{"task", "\"flatland\""},
                          {"psnr", num(res.fit.final_psnr)},
                          {"distortion", num(res.final_distortion)},
                          {"params", std::to_string(count_params(cfg.field).total)},
                          {"seconds", num(res.fit.train_seconds)}})
            << "\n";
  return 0;
}

// The checkpoint's embedded config defines the model; io paths given on the
// command line win over the embedded ones.
Checkpoint load_checkpoint_for(const RunConfig& cli_cfg) {
  if (cli_cfg.io.checkpoint.empty()) throw ConfigError("io.checkpoint must be set");
  Checkpoint ck = load_checkpoint(cli_cfg.io.checkpoint);
  if (!cli_cfg.io.image.empty()) ck.config.io.image = cli_cfg.io.image;
  if (!cli_cfg.io.scene.empty()) ck.config.io.scene = cli_cfg.io.scene;
  if (!cli_cfg.io.out_dir.empty()) ck.config.io.out_dir = cli_cfg.io.out_dir;
  return ck;
}

int cmd_eval(const RunConfig& cli_cfg) {
  const Checkpoint ck = load_checkpoint_for(cli_cfg);
  const RunConfig& cfg = ck.config;
  const std::vector<float> sig = sigmas_at<float>(cfg.field, ck.state.step);
  double psnr_db = 0;
  if (cfg.task == "image") {
    const Image target = load_image_source(cfg.io.image);
    psnr_db = psnr(render_full(cfg.field, ck.params, sig, target.height, target.width), target);
  } else {
    const FlatScene scene = load_scene_file(cfg.io.scene);
    const FlatlandOptions opt = flatland_options_from(cfg);
    const auto eval_cams = camera_ring(opt.eval_cameras, opt.ring_radius, opt.fov, opt.pixels,
                                       std::numbers::pi / opt.cameras);
    std::vector<Eigen::MatrixXd> pred(eval_cams.size()), gt(eval_cams.size());
    for (size_t i = 0; i < eval_cams.size(); ++i) {
      pred[i] = render_camera(cfg.field, ck.params, sig, eval_cams[i], opt.gt_samples);
      gt[i] = render_camera(scene, eval_cams[i], opt.gt_samples);
    }
    psnr_db = psnr_1d(pred, gt);
  }
  std::cout << json_line({{"task", "\"" + cfg.task + "\""},
                          {"psnr", num(psnr_db)},
                          {"params", std::to_string(count_params(cfg.field).total)}})
            << "\n";
  return 0;
}

int cmd_export_points(const RunConfig& cli_cfg) {
  const Checkpoint ck = load_checkpoint_for(cli_cfg);
  const std::vector<float> sig = sigmas_at<float>(ck.config.field, ck.state.step);
  const std::string csv = points_csv(export_points(ck.config.field, ck.params, sig));
  if (!ck.config.io.out_dir.empty()) {
    fs::create_directories(ck.config.io.out_dir);
    write_text_file(ck.config.io.out_dir + "/points.csv", csv);
    std::cout << ck.config.io.out_dir + "/points.csv" << "\n";
  } else {
    std::cout << csv;
  }
  return 0;
}

int cmd_sweep(const RunConfig& cfg, const std::string& axis,
              const std::vector<std::int64_t>& values, const std::string& baseline) {
  if (!baseline.empty() && baseline != "eulerian")
    throw ConfigError("--baseline supports only 'eulerian'");
  const auto rows = run_sweep(cfg, axis, values, baseline == "eulerian");
  const std::string csv = sweep_csv(rows);
  if (!cfg.io.out_dir.empty()) {
    fs::create_directories(cfg.io.out_dir);
    write_text_file(cfg.io.out_dir + "/pareto.csv", csv);
  }
  std::cout << csv;
  return 0;
}

int cmd_fd_check(const RunConfig& cfg, double epsilon) {
  const FdFixture fx = make_fd_fixture(cfg);
  std::printf("fixture=%s params=%lld\n", fx.name.c_str(),
              static_cast<long long>(fx.layout.total));
  const FdReport rd = fd_check<double>(fx, epsilon, 1e-5);
  std::printf("double: max_rel_error=%.3e max_abs_error=%.3e worst_slice=%s checked=%lld %s\n",
              rd.max_rel_error, rd.max_abs_error, rd.worst_slice.c_str(),
              static_cast<long long>(rd.checked), rd.pass ? "pass" : "FAIL");
  const FdReport rf = fd_check<float>(fx, epsilon, 1e-3);
  std::printf("single: max_rel_error=%.3e max_abs_error=%.3e worst_slice=%s checked=%lld %s\n",
              rf.max_rel_error, rf.max_abs_error, rf.worst_slice.c_str(),
              static_cast<long long>(rf.checked), rf.pass ? "pass" : "FAIL");
  if (!rd.pass || !rf.pass) {
    std::cerr << "error: gradient check failed\n";
    return 2;
  }
  return 0;
}

}  // namespace

FdFixture make_fd_fixture(const RunConfig& cfg) {
  if (cfg.task == "image") {
    if (cfg.io.image.empty()) throw ConfigError("fd-check: io.image must be set");
    const ImageDataset ds = make_dataset(load_image_source(cfg.io.image));
    if (ds.pixels.channels != cfg.field.output_dim)
      throw ConfigError("fd-check: field.output_dim must match the image channels");
    return make_image_fd_fixture(cfg.field, cfg.losses, ds, cfg.fd_loss == "guidance",
                                 cfg.seed + 10);
  }
  if (cfg.io.scene.empty()) throw ConfigError("fd-check: io.scene must be set");
  const FlatScene scene = load_scene_file(cfg.io.scene);
  return make_flatland_fd_fixture(cfg.field, cfg.losses, scene, cfg.flatland.rays_per_batch,
                                  cfg.flatland.samples_per_ray, cfg.flatland.ring_radius,
                                  cfg.flatland.fov_deg * std::numbers::pi / 180.0,
                                  cfg.seed + 10);
}

int cli_main(int argc, const char* const* argv) {
  CLI::App app{"compressed neural field trainer (hash grid + Gaussian mixture levels)"};
  app.require_subcommand(1);

  struct Common {
    std::string config;
    std::vector<std::string> sets;
  };
  auto add_common = [](CLI::App* sub, Common& c) {
    sub->add_option("--config", c.config, "JSON run configuration")->required();
    sub->add_option("--set", c.sets, "override config values, dotted.path=value");
  };

  Common fit_img, fit_flat, eval_c, export_c, sweep_c, fd_c;
  CLI::App* s_fit_img = app.add_subcommand("fit-image", "train on a 2D image");
  add_common(s_fit_img, fit_img);
  CLI::App* s_fit_flat = app.add_subcommand("fit-flatland", "train on a 2D volumetric scene");
  add_common(s_fit_flat, fit_flat);
  CLI::App* s_eval = app.add_subcommand("eval", "PSNR + parameter count of a checkpoint");
  add_common(s_eval, eval_c);
  CLI::App* s_export = app.add_subcommand("export-points", "dump Gaussian means as CSV");
  add_common(s_export, export_c);

  CLI::App* s_sweep = app.add_subcommand("sweep", "quality-vs-parameters sweep");
  add_common(s_sweep, sweep_c);
  std::string axis = "field.table_size";
  std::vector<std::int64_t> values;
  std::string baseline;
  s_sweep->add_option("--axis", axis, "field.table_size | field.gaussians_per_bucket | "
                                      "field.lagrangian_levels");
  s_sweep->add_option("--values", values, "axis values")->required()->delimiter(',');
  s_sweep->add_option("--baseline", baseline, "add matched 'eulerian' runs");

  CLI::App* s_fd = app.add_subcommand("fd-check", "finite-difference gradient validation");
  add_common(s_fd, fd_c);
  double epsilon = 4e-6;
  s_fd->add_option("--epsilon", epsilon, "central difference step");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }

  try {
    if (s_fit_img->parsed()) return cmd_fit_image(load_run_config(fit_img.config, fit_img.sets));
    if (s_fit_flat->parsed())
      return cmd_fit_flatland(load_run_config(fit_flat.config, fit_flat.sets));
    if (s_eval->parsed()) return cmd_eval(load_run_config(eval_c.config, eval_c.sets));
    if (s_export->parsed()) return cmd_export_points(load_run_config(export_c.config, export_c.sets));
    if (s_sweep->parsed())
      return cmd_sweep(load_run_config(sweep_c.config, sweep_c.sets), axis, values, baseline);
    if (s_fd->parsed()) return cmd_fd_check(load_run_config(fd_c.config, fd_c.sets), epsilon);
    std::cerr << "error: no subcommand\n";
    return 1;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace hashfield
