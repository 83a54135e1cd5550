// Copyright (c) 2026 volreg contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "volreg/descriptor_net.hpp"
#include "volreg/detect.hpp"
#include "volreg/match.hpp"
#include "volreg/registration.hpp"
#include "volreg/sift3d.hpp"
#include "volreg/synth.hpp"

namespace volreg {

enum class DescriptorBackend { network, sift3d };

std::string to_string(DescriptorBackend backend);
DescriptorBackend backend_from_string(const std::string& name);

/// Everything one registration run needs; mirrors the JSON config document.
/// Field defaults are the documented pipeline defaults, so an empty JSON
/// object is a valid config.
struct PipelineConfig {
  struct Diffusion {
    bool enabled = true;
    int iters = 5;
    double dt = 0.01;
    double sensitivity = 5.0;  // K
  } diffusion;

  struct Pyramid {
    int levels = 3;
    double blur_sigma = 1.0;
  } pyramid;

  HarrisConfig detect;

  struct DescriptorCfg {
    DescriptorBackend backend = DescriptorBackend::sift3d;
    int radius = 3;            // network neighborhood radius (7^3 input)
    double angle_step = M_PI / 3.0;  // training orientation lattice
    std::string weights;       // VDSC file, required for the network backend
    bool sift_context = true;  // append a coarser-level window to sift3d
    double sift_context_sigma = 1.2;
  } descriptor;

  struct MatchCfg {
    SimilarityMetric metric = SimilarityMetric::inverse_angular;
    double max_angular_distance = 0.65;     // radians; defines the threshold
    std::optional<double> score_threshold;  // overrides the angular knob
    double threshold() const;
  } match;

  TrainConfig train;
  double train_holdout_fraction = 0.25;

  struct Ransac {
    int iterations = 50000;
    double inlier_threshold_cells = 3.0;  // converted by finest grid spacing
    double refine_threshold_cells = 1.5;  // tighter radius for the refit stage
    int min_inliers = 6;
    int sample_size = 3;
    std::uint64_t seed = 7;
    bool refine = true;
    double min_spread = 2.0;  // consensus degeneracy guard (see RansacConfig)
  } ransac;

  void validate() const;

  static PipelineConfig from_json(const nlohmann::json& j);
  static PipelineConfig load(const std::filesystem::path& path);
  nlohmann::json to_json() const;  // fully populated ("effective") config
};

struct SceneFeatures {
  std::vector<Corner> corners;
  std::vector<Descriptor> descriptors;
  // Registration points: the descriptor anchor per corner (sub-cell, stable
  // across differently oriented lattices); the raw cell center for backends
  // without an anchor.
  std::vector<Vec3> match_points;
};

/// Diffusion (optional) -> pyramid -> corners -> one descriptor per corner
/// from its own pyramid level. `net` may be null for the sift3d backend.
SceneFeatures detect_and_describe(const DensityGrid& grid, const PipelineConfig& cfg,
                                  const DescriptorNet* net);

struct RegisterReport {
  RegistrationResult result;
  int corners_a = 0;
  int corners_b = 0;
  std::vector<MatchCandidate> candidates;
  double inlier_threshold_world = 0.0;
  PipelineConfig config;

  nlohmann::json to_json() const;
};

/// The full pipeline of the library: detect, describe, match, RANSAC,
/// optional inlier refinement. The reported transform maps grid_b world
/// coordinates into grid_a's frame.
RegisterReport register_grids(const DensityGrid& grid_a, const DensityGrid& grid_b,
                              const PipelineConfig& cfg);

// --- corner list exports -----------------------------------------------------

/// Binary little-endian PLY with float x, y, z, response and uchar level.
void write_corners_ply(const std::vector<Corner>& corners,
                       const std::filesystem::path& path);

/// One JSON object per line: {i, j, k, level, position, response}.
void write_corners_jsonl(const std::vector<Corner>& corners,
                         const std::filesystem::path& path);

// --- evaluation against ground truth ----------------------------------------

nlohmann::json transform_to_json(const SimilarityTransform& t);
SimilarityTransform transform_from_json(const nlohmann::json& j);

struct EvalCase {
  std::string name;
  bool success = false;
  bool has_truth = false;
  double rotation_error_deg = 0.0;
  double translation_error = 0.0;  // world units
  double scale_rel_error = 0.0;
  double avg_error = 0.0;  // mean squared inlier residual from the result
};

struct EvalReport {
  std::vector<EvalCase> cases;
  int num_cases = 0;
  int num_success = 0;
  double mean_avg_error_on_success = 0.0;
  double mean_rotation_error_deg = 0.0;
  double mean_translation_error = 0.0;
  double mean_scale_rel_error = 0.0;

  nlohmann::json to_json() const;
};

/// Pairs result JSONs with truth JSONs by file stem and aggregates error
/// statistics over the successful cases.
EvalReport evaluate_results(const std::filesystem::path& results_dir,
                            const std::filesystem::path& truths_dir);

// --- synth pair specs (CLI input) --------------------------------------------

struct PairSpec {
  SceneSpec scene;
  Aabb crop_a, crop_b;
  SimilarityTransform transform;
  double spacing = 1.0;

  static PairSpec from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

/// A random room pair spec: crops cover complementary portions of the room
/// with substantial overlap, and the true transform is a lattice-inexact
/// similarity. Deterministic in `seed`.
PairSpec make_room_pair_spec(std::uint64_t seed);

}  // namespace volreg
