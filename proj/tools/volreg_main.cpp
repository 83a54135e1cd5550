// Copyright (c) 2026 volreg contributors
// SPDX-License-Identifier: Apache-2.0
//
// volreg: register two partially overlapping 3D density volumes.
//
// Subcommands:
//   synth     render an overlapping grid pair + ground truth from a pair spec
//   detect    corner detection -> PLY + JSONL exports
//   train     contrastive training of the descriptor network
//   register  full registration pipeline -> result JSON
//   eval      compare result JSONs against ground-truth JSONs

#include <CLI11.hpp>
#include <fstream>
#include <iostream>

#include <nlohmann/json.hpp>

#include "volreg/descriptor_net.hpp"
#include "volreg/errors.hpp"
#include "volreg/pipeline.hpp"

namespace {

using namespace volreg;

PipelineConfig load_config_or_default(const std::string& path) {
  if (path.empty()) return PipelineConfig{};
  return PipelineConfig::load(path);
}

void write_json_file(const nlohmann::json& j, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write: " + path.string());
  out << j.dump(2) << "\n";
}

int cmd_synth(const std::string& spec_path, const std::string& out_dir,
              const std::string& emit_room, std::uint64_t room_seed) {
  if (!emit_room.empty()) {
    const PairSpec spec = make_room_pair_spec(room_seed);
    write_json_file(spec.to_json(), emit_room);
    std::cout << "wrote pair spec " << emit_room << "\n";
    if (spec_path.empty()) return 0;
  }
  std::ifstream in(spec_path);
  if (!in) throw IoError("cannot open pair spec: " + spec_path);
  const PairSpec spec = PairSpec::from_json(nlohmann::json::parse(in));

  std::filesystem::create_directories(out_dir);
  const OverlapPair pair =
      make_overlap_pair(spec.scene, spec.crop_a, spec.crop_b, spec.transform, spec.spacing);

  GridMeta meta_a{"grid_a", "volreg synth", ""};
  GridMeta meta_b{"grid_b", "volreg synth", ""};
  save_grid(pair.grid_a, std::filesystem::path(out_dir) / "grid_a.vgrd", &meta_a);
  save_grid(pair.grid_b, std::filesystem::path(out_dir) / "grid_b.vgrd", &meta_b);

  nlohmann::json truth = transform_to_json(pair.true_transform);
  truth["overlap_fraction"] = pair.overlap_fraction;
  truth["spacing"] = spec.spacing;
  write_json_file(truth, std::filesystem::path(out_dir) / "truth.json");

  std::cout << "grids " << pair.grid_a.dims[0] << "x" << pair.grid_a.dims[1] << "x"
            << pair.grid_a.dims[2] << " and " << pair.grid_b.dims[0] << "x"
            << pair.grid_b.dims[1] << "x" << pair.grid_b.dims[2] << ", overlap "
            << pair.overlap_fraction << "\n";
  return 0;
}

int cmd_detect(const std::string& grid_path, const PipelineConfig& cfg,
               const std::string& out_prefix) {
  const DensityGrid grid = load_grid(grid_path);
  DensityGrid work = cfg.diffusion.enabled
                         ? anisotropic_diffusion(grid, cfg.diffusion.iters, cfg.diffusion.dt,
                                                 cfg.diffusion.sensitivity)
                         : grid;
  const GridPyramid pyr = build_pyramid(work, cfg.pyramid.levels, cfg.pyramid.blur_sigma);
  const std::vector<Corner> corners = detect_corners(pyr, cfg.detect);
  write_corners_ply(corners, out_prefix + ".ply");
  write_corners_jsonl(corners, out_prefix + ".jsonl");
  std::cout << corners.size() << " corners -> " << out_prefix << ".ply, " << out_prefix
            << ".jsonl\n";
  return 0;
}

int cmd_train(const std::vector<std::string>& scene_paths, const PipelineConfig& cfg,
              const std::string& out_weights, const std::string& loss_csv,
              const std::string& dataset_in, const std::string& dataset_out) {
  TrainingSet dataset;
  if (!dataset_in.empty()) {
    dataset = load_training_set(dataset_in);
  } else {
    if (scene_paths.empty()) throw ArgumentError("train needs scene grids or --dataset");
    std::vector<DensityGrid> scenes;
    for (const auto& path : scene_paths) scenes.push_back(load_grid(path));
    dataset = synthesize_training_set(scenes, cfg.detect, cfg.pyramid.levels,
                                      cfg.pyramid.blur_sigma, cfg.descriptor.radius,
                                      cfg.descriptor.angle_step);
  }
  if (!dataset_out.empty()) save_training_set(dataset, dataset_out);

  NetShape shape;
  shape.in_edge = 2 * cfg.descriptor.radius + 1;
  const TrainOutcome<float> outcome = train_descriptor_net<float>(dataset, shape, cfg.train);
  save_weights(outcome.net, out_weights);

  if (!loss_csv.empty()) {
    std::ofstream out(loss_csv, std::ios::trunc);
    if (!out) throw IoError("cannot write loss csv: " + loss_csv);
    out << "iteration,loss\n";
    for (std::size_t i = 0; i < outcome.loss_history.size(); ++i)
      out << i << "," << outcome.loss_history[i] << "\n";
  }
  std::cout << "trained on " << dataset.num_corners << " corners, "
            << dataset.items.size() << " neighborhoods -> " << out_weights << "\n";
  return 0;
}

int cmd_register(const std::string& grid_a_path, const std::string& grid_b_path,
                 const PipelineConfig& cfg, const std::string& out_path) {
  const DensityGrid grid_a = load_grid(grid_a_path);
  const DensityGrid grid_b = load_grid(grid_b_path);
  const RegisterReport report = register_grids(grid_a, grid_b, cfg);
  const nlohmann::json j = report.to_json();
  if (out_path.empty()) {
    std::cout << j.dump(2) << "\n";
  } else {
    write_json_file(j, out_path);
    std::cout << (report.result.success ? "success" : "failure") << ", "
              << report.result.inliers.size() << " inliers -> " << out_path << "\n";
  }
  return 0;
}

int cmd_eval(const std::string& results_dir, const std::string& truths_dir,
             const std::string& out_path) {
  const EvalReport report = evaluate_results(results_dir, truths_dir);
  const nlohmann::json j = report.to_json();
  if (!out_path.empty()) write_json_file(j, out_path);
  std::cout << report.num_success << "/" << report.num_cases << " successful";
  if (report.num_success > 0)
    std::cout << ", mean eq7 error " << report.mean_avg_error_on_success
              << ", mean rotation error " << report.mean_rotation_error_deg
              << " deg, mean translation error " << report.mean_translation_error;
  std::cout << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"volumetric density-grid registration"};
  app.require_subcommand(1);

  std::string config_path;
  app.add_option("--config", config_path, "pipeline config JSON")->capture_default_str();

  auto* synth = app.add_subcommand("synth", "render an overlapping grid pair");
  std::string spec_path, out_dir, emit_room;
  std::uint64_t room_seed = 0;
  synth->add_option("spec", spec_path, "pair spec JSON");
  synth->add_option("out_dir", out_dir, "output directory");
  synth->add_option("--emit-room-spec", emit_room, "write a random room pair spec here");
  synth->add_option("--seed", room_seed, "seed for --emit-room-spec");

  auto* detect = app.add_subcommand("detect", "detect corners in a grid");
  std::string grid_path, out_prefix = "corners";
  detect->add_option("grid", grid_path, "VGRD grid file")->required();
  detect->add_option("--out-prefix", out_prefix, "output prefix")->capture_default_str();

  auto* train = app.add_subcommand("train", "train the descriptor network");
  std::vector<std::string> scene_paths;
  std::string out_weights = "weights.vdsc", loss_csv, dataset_in, dataset_out;
  std::uint64_t train_seed = 0;
  bool train_seed_set = false;
  train->add_option("scenes", scene_paths, "scene VGRD files");
  train->add_option("--out", out_weights, "weights output path")->capture_default_str();
  train->add_option("--loss-csv", loss_csv, "per-iteration loss CSV");
  train->add_option("--dataset", dataset_in, "load a saved dataset directory");
  train->add_option("--dump-dataset", dataset_out, "save the synthesized dataset here");
  train->add_option("--seed", train_seed, "training seed override")
      ->each([&](const std::string&) { train_seed_set = true; });

  auto* reg = app.add_subcommand("register", "register grid_b onto grid_a");
  std::string grid_a_path, grid_b_path, result_out, backend, weights;
  std::uint64_t reg_seed = 0;
  bool reg_seed_set = false;
  reg->add_option("grid_a", grid_a_path, "target VGRD grid")->required();
  reg->add_option("grid_b", grid_b_path, "source VGRD grid")->required();
  reg->add_option("--out", result_out, "result JSON path");
  reg->add_option("--backend", backend, "descriptor backend: network | sift3d");
  reg->add_option("--weights", weights, "VDSC weights for the network backend");
  reg->add_option("--seed", reg_seed, "RANSAC seed override")
      ->each([&](const std::string&) { reg_seed_set = true; });

  auto* eval = app.add_subcommand("eval", "evaluate results against ground truth");
  std::string results_dir, truths_dir, eval_out;
  eval->add_option("--results", results_dir, "directory of result JSONs")->required();
  eval->add_option("--truths", truths_dir, "directory of truth JSONs")->required();
  eval->add_option("--out", eval_out, "report JSON path");

  CLI11_PARSE(app, argc, argv);

  try {
    PipelineConfig cfg = load_config_or_default(config_path);
    if (*synth) return cmd_synth(spec_path, out_dir, emit_room, room_seed);
    if (*detect) return cmd_detect(grid_path, cfg, out_prefix);
    if (*train) {
      if (train_seed_set) cfg.train.seed = train_seed;
      return cmd_train(scene_paths, cfg, out_weights, loss_csv, dataset_in, dataset_out);
    }
    if (*reg) {
      if (!backend.empty()) cfg.descriptor.backend = backend_from_string(backend);
      if (!weights.empty()) cfg.descriptor.weights = weights;
      if (reg_seed_set) cfg.ransac.seed = reg_seed;
      return cmd_register(grid_a_path, grid_b_path, cfg, result_out);
    }
    if (*eval) return cmd_eval(results_dir, truths_dir, eval_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
