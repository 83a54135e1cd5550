// Copyright (c) 2026 volreg contributors
// SPDX-License-Identifier: Apache-2.0
#include "volreg/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "volreg/errors.hpp"

namespace volreg {

std::string to_string(DescriptorBackend backend) {
  return backend == DescriptorBackend::network ? "network" : "sift3d";
}

DescriptorBackend backend_from_string(const std::string& name) {
  if (name == "network") return DescriptorBackend::network;
  if (name == "sift3d") return DescriptorBackend::sift3d;
  throw ArgumentError("unknown descriptor backend: " + name);
}

double PipelineConfig::MatchCfg::threshold() const {
  if (score_threshold) return *score_threshold;
  return score_for_angular_distance(max_angular_distance, metric);
}

void PipelineConfig::validate() const {
  if (diffusion.iters < 0) throw ArgumentError("diffusion iters must be >= 0");
  if (!(diffusion.dt > 0.0)) throw ArgumentError("diffusion dt must be > 0");
  if (!(diffusion.sensitivity > 0.0)) throw ArgumentError("diffusion K must be > 0");
  if (pyramid.levels < 1) throw ArgumentError("pyramid levels must be >= 1");
  if (pyramid.blur_sigma < 0.0) throw ArgumentError("pyramid blur sigma must be >= 0");
  detect.validate();
  if (descriptor.radius < 1) throw ArgumentError("descriptor radius must be >= 1");
  if (!(descriptor.angle_step > 0.0)) throw ArgumentError("angle step must be > 0");
  if (!(ransac.refine_threshold_cells > 0.0))
    throw ArgumentError("refine_threshold_cells must be > 0");
  if (!(match.max_angular_distance > 0.0))
    throw ArgumentError("match.max_angular_distance must be > 0");
  if (match.score_threshold && !(*match.score_threshold > 0.0))
    throw ArgumentError("match.score_threshold must be > 0");
  train.validate();
  if (!(train_holdout_fraction >= 0.0 && train_holdout_fraction < 1.0))
    throw ArgumentError("train holdout fraction must be in [0, 1)");
  RansacConfig rc{ransac.iterations, ransac.inlier_threshold_cells, ransac.min_inliers,
                  ransac.sample_size, ransac.seed};
  rc.validate();
}

PipelineConfig PipelineConfig::from_json(const nlohmann::json& j) {
  PipelineConfig c;
  if (j.contains("diffusion")) {
    const auto& d = j.at("diffusion");
    c.diffusion.enabled = d.value("enabled", c.diffusion.enabled);
    c.diffusion.iters = d.value("iters", c.diffusion.iters);
    c.diffusion.dt = d.value("dt", c.diffusion.dt);
    c.diffusion.sensitivity = d.value("K", c.diffusion.sensitivity);
  }
  if (j.contains("pyramid")) {
    const auto& p = j.at("pyramid");
    c.pyramid.levels = p.value("levels", c.pyramid.levels);
    c.pyramid.blur_sigma = p.value("blur_sigma", c.pyramid.blur_sigma);
  }
  if (j.contains("detect")) {
    const auto& d = j.at("detect");
    c.detect.k = d.value("k", c.detect.k);
    c.detect.window_radius = d.value("window_radius", c.detect.window_radius);
    c.detect.nms_radius = d.value("nms_radius", c.detect.nms_radius);
    c.detect.response_floor = d.value("response_floor", c.detect.response_floor);
    c.detect.border_margin = d.value("border_margin", c.detect.border_margin);
  }
  if (j.contains("descriptor")) {
    const auto& d = j.at("descriptor");
    if (d.contains("backend")) c.descriptor.backend = backend_from_string(d.at("backend"));
    c.descriptor.radius = d.value("radius", c.descriptor.radius);
    c.descriptor.angle_step = d.value("angle_step", c.descriptor.angle_step);
    c.descriptor.weights = d.value("weights", c.descriptor.weights);
    c.descriptor.sift_context = d.value("sift_context", c.descriptor.sift_context);
    c.descriptor.sift_context_sigma =
        d.value("sift_context_sigma", c.descriptor.sift_context_sigma);
  }
  if (j.contains("match")) {
    const auto& m = j.at("match");
    if (m.contains("metric")) {
      const std::string name = m.at("metric");
      if (name == "inverse_angular")
        c.match.metric = SimilarityMetric::inverse_angular;
      else if (name == "inverse_euclidean")
        c.match.metric = SimilarityMetric::inverse_euclidean;
      else
        throw ArgumentError("unknown similarity metric: " + name);
    }
    c.match.max_angular_distance =
        m.value("max_angular_distance", c.match.max_angular_distance);
    if (m.contains("score_threshold") && !m.at("score_threshold").is_null())
      c.match.score_threshold = m.at("score_threshold").get<double>();
  }
  if (j.contains("train")) {
    const auto& t = j.at("train");
    c.train.iterations = t.value("iterations", c.train.iterations);
    c.train.batch_size = t.value("batch_size", c.train.batch_size);
    c.train.margin = t.value("margin", c.train.margin);
    c.train.lr = t.value("lr", c.train.lr);
    c.train.seed = t.value("seed", c.train.seed);
    c.train_holdout_fraction = t.value("holdout_fraction", c.train_holdout_fraction);
  }
  if (j.contains("ransac")) {
    const auto& r = j.at("ransac");
    c.ransac.iterations = r.value("iterations", c.ransac.iterations);
    c.ransac.inlier_threshold_cells =
        r.value("inlier_threshold_cells", c.ransac.inlier_threshold_cells);
    c.ransac.refine_threshold_cells =
        r.value("refine_threshold_cells", c.ransac.refine_threshold_cells);
    c.ransac.min_inliers = r.value("min_inliers", c.ransac.min_inliers);
    c.ransac.sample_size = r.value("sample_size", c.ransac.sample_size);
    c.ransac.seed = r.value("seed", c.ransac.seed);
    c.ransac.refine = r.value("refine", c.ransac.refine);
    c.ransac.min_spread = r.value("min_spread", c.ransac.min_spread);
  }
  c.validate();
  return c;
}

PipelineConfig PipelineConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file: " + path.string());
  return from_json(nlohmann::json::parse(in));
}

nlohmann::json PipelineConfig::to_json() const {
  nlohmann::json j;
  j["diffusion"] = {{"enabled", diffusion.enabled},
                    {"iters", diffusion.iters},
                    {"dt", diffusion.dt},
                    {"K", diffusion.sensitivity}};
  j["pyramid"] = {{"levels", pyramid.levels}, {"blur_sigma", pyramid.blur_sigma}};
  j["detect"] = {{"k", detect.k},
                 {"window_radius", detect.window_radius},
                 {"nms_radius", detect.nms_radius},
                 {"response_floor", detect.response_floor},
                 {"border_margin", detect.border_margin}};
  j["descriptor"] = {{"backend", to_string(descriptor.backend)},
                     {"radius", descriptor.radius},
                     {"angle_step", descriptor.angle_step},
                     {"weights", descriptor.weights},
                     {"sift_context", descriptor.sift_context},
                     {"sift_context_sigma", descriptor.sift_context_sigma}};
  j["match"] = {{"metric", match.metric == SimilarityMetric::inverse_angular
                               ? "inverse_angular"
                               : "inverse_euclidean"},
                {"max_angular_distance", match.max_angular_distance}};
  if (match.score_threshold) j["match"]["score_threshold"] = *match.score_threshold;
  j["train"] = {{"iterations", train.iterations}, {"batch_size", train.batch_size},
                {"margin", train.margin},         {"lr", train.lr},
                {"seed", train.seed},             {"holdout_fraction", train_holdout_fraction}};
  j["ransac"] = {{"iterations", ransac.iterations},
                 {"inlier_threshold_cells", ransac.inlier_threshold_cells},
                 {"refine_threshold_cells", ransac.refine_threshold_cells},
                 {"min_inliers", ransac.min_inliers},
                 {"sample_size", ransac.sample_size},
                 {"seed", ransac.seed},
                 {"refine", ransac.refine},
                 {"min_spread", ransac.min_spread}};
  return j;
}

namespace {

// sift3d backend descriptor: the corner's own window concatenated with a
// window from the next coarser level at the same world position. The coarse
// half sees whole objects and nearby structure, which is what tells apart
// the otherwise identical corners of rectangular solids.
Descriptor sift3d_context_descriptor(const GridPyramid& pyr, const Corner& corner,
                                     double context_sigma, Vec3* anchor) {
  const Descriptor fine = sift3d_descriptor(pyr.levels[corner.level], corner, anchor);
  const int next = std::min(corner.level + 1, pyr.num_levels() - 1);
  Descriptor coarse = fine;
  Corner coarse_center = corner;
  coarse_center.grid_index = pyr.levels[next].nearest_index(corner.position);
  try {
    Eigen::VectorXd hist = sift3d_histogram_at(
        sift3d_window(pyr.levels[next], coarse_center), context_sigma);
    const double norm = hist.norm();
    if (norm > 1e-12)
      coarse = hist / norm;
    else
      coarse = Descriptor::Constant(hist.size(), 1.0 / std::sqrt(double(hist.size())));
  } catch (const ExcludedCornerError&) {
    // fall back to the fine window when the coarse one leaves its level
  }
  Descriptor d(fine.size() + coarse.size());
  d << fine, coarse;
  return d / d.norm();
}

}  // namespace

SceneFeatures detect_and_describe(const DensityGrid& grid, const PipelineConfig& cfg,
                                  const DescriptorNet* net) {
  cfg.validate();
  if (cfg.descriptor.backend == DescriptorBackend::network && net == nullptr)
    throw ArgumentError("network backend requires loaded weights");

  DensityGrid work = cfg.diffusion.enabled
                         ? anisotropic_diffusion(grid, cfg.diffusion.iters,
                                                 cfg.diffusion.dt, cfg.diffusion.sensitivity)
                         : grid;
  const GridPyramid pyr = build_pyramid(work, cfg.pyramid.levels, cfg.pyramid.blur_sigma);
  const std::vector<Corner> corners = detect_corners(pyr, cfg.detect);

  SceneFeatures features;
  for (const auto& corner : corners) {
    const DensityGrid& level = pyr.levels[corner.level];
    const Vec3 match_point = corner.position;
    try {
      if (cfg.descriptor.backend == DescriptorBackend::network) {
        const Neighborhood n =
            extract_neighborhood(level, corner, cfg.descriptor.radius, {0.0, 0.0, 0.0});
        features.descriptors.push_back(net_forward(*net, n));
      } else if (cfg.descriptor.sift_context) {
        features.descriptors.push_back(sift3d_context_descriptor(
            pyr, corner, cfg.descriptor.sift_context_sigma, nullptr));
      } else {
        features.descriptors.push_back(sift3d_descriptor(level, corner, nullptr));
      }
    } catch (const ExcludedCornerError&) {
      continue;  // too close to a face for this backend's window
    }
    features.corners.push_back(corner);
    features.match_points.push_back(match_point);
  }

  // Distinct corners whose windows walked to the same physical anchor are one
  // feature; keeping duplicates hands RANSAC clusters of coincident points
  // that degenerate consensus sets love.
  std::vector<bool> drop(features.corners.size(), false);
  for (std::size_t i = 0; i < features.corners.size(); ++i) {
    if (drop[i]) continue;
    for (std::size_t j = i + 1; j < features.corners.size(); ++j) {
      if (drop[j]) continue;
      if ((features.match_points[i] - features.match_points[j]).norm() <
          0.75 * grid.spacing) {
        if (features.corners[j].response > features.corners[i].response)
          std::swap(features.corners[i], features.corners[j]),
              std::swap(features.descriptors[i], features.descriptors[j]),
              std::swap(features.match_points[i], features.match_points[j]);
        drop[j] = true;
      }
    }
  }
  SceneFeatures dedup;
  for (std::size_t i = 0; i < features.corners.size(); ++i) {
    if (drop[i]) continue;
    dedup.corners.push_back(features.corners[i]);
    dedup.descriptors.push_back(features.descriptors[i]);
    dedup.match_points.push_back(features.match_points[i]);
  }
  return dedup;
}

RegisterReport register_grids(const DensityGrid& grid_a, const DensityGrid& grid_b,
                              const PipelineConfig& cfg) {
  cfg.validate();
  DescriptorNet net;
  const DescriptorNet* net_ptr = nullptr;
  if (cfg.descriptor.backend == DescriptorBackend::network) {
    if (cfg.descriptor.weights.empty())
      throw ArgumentError("network backend requires a weights file");
    net = load_weights<float>(cfg.descriptor.weights);
    net_ptr = &net;
  }

  const SceneFeatures fa = detect_and_describe(grid_a, cfg, net_ptr);
  const SceneFeatures fb = detect_and_describe(grid_b, cfg, net_ptr);

  RegisterReport report;
  report.config = cfg;
  report.corners_a = static_cast<int>(fa.corners.size());
  report.corners_b = static_cast<int>(fb.corners.size());
  report.candidates = match_descriptors(fa.descriptors, fb.descriptors,
                                        cfg.match.threshold(), cfg.match.metric);

  // The paper expresses the inlier threshold in grid cells; residuals live in
  // scene-a world units, so convert with grid_a's (finest level) spacing.
  report.inlier_threshold_world = cfg.ransac.inlier_threshold_cells * grid_a.spacing;

  std::vector<PointPair> pairs;
  pairs.reserve(report.candidates.size());
  for (const auto& cand : report.candidates)
    pairs.push_back({fa.match_points[cand.index_1], fb.match_points[cand.index_2]});

  RansacConfig rc;
  rc.iterations = cfg.ransac.iterations;
  rc.inlier_threshold = report.inlier_threshold_world;
  rc.min_inliers = cfg.ransac.min_inliers;
  rc.sample_size = cfg.ransac.sample_size;
  rc.seed = cfg.ransac.seed;
  rc.min_spread = cfg.ransac.min_spread;

  if (static_cast<int>(pairs.size()) < rc.sample_size) {
    report.result.success = false;
    return report;
  }
  report.result = ransac_register(pairs, rc);
  if (report.result.success && cfg.ransac.refine) {
    // one refit at the consensus radius, then iterate at a tighter radius
    // until the inlier set stabilizes
    report.result = refine_on_inliers(report.result, pairs, rc);
    RansacConfig tight = rc;
    tight.inlier_threshold =
        std::min(rc.inlier_threshold,
                 cfg.ransac.refine_threshold_cells * grid_a.spacing);
    // success is already established at the consensus radius; the tight
    // passes only sharpen the fit, so they may keep fewer points
    tight.min_inliers = std::max(rc.sample_size, 4);
    for (int pass = 0; pass < 4; ++pass) {
      RegistrationResult next = refine_on_inliers(report.result, pairs, tight);
      const bool settled = next.inliers == report.result.inliers;
      report.result = next;
      if (settled) break;
    }

    // robust polish: iteratively reweighted fit over the consensus-radius
    // inlier set (Cauchy weights) damps the influence of consistently
    // mismatched pairs that sit just inside the inlier radius
    std::vector<int> support;
    for (std::size_t i = 0; i < pairs.size(); ++i)
      if (pair_error(pairs[i].x1, pairs[i].x2, report.result.transform) <
          rc.inlier_threshold)
        support.push_back(static_cast<int>(i));
    if (support.size() >= 4) {
      std::vector<Vec3> p1, p2;
      for (int i : support) {
        p1.push_back(pairs[i].x1);
        p2.push_back(pairs[i].x2);
      }
      SimilarityTransform polished = report.result.transform;
      const double scale_cells = grid_a.spacing;
      for (int pass = 0; pass < 6; ++pass) {
        std::vector<double> w(support.size());
        for (std::size_t i = 0; i < support.size(); ++i) {
          const double r = pair_error(p1[i], p2[i], polished) / scale_cells;
          w[i] = 1.0 / (1.0 + r * r);
        }
        const auto next = try_fit_similarity(p1, p2, w);
        if (!next || next->scale < rc.min_scale || next->scale > rc.max_scale) break;
        polished = *next;
      }
      std::vector<int> polished_inliers;
      for (std::size_t i = 0; i < pairs.size(); ++i)
        if (pair_error(pairs[i].x1, pairs[i].x2, polished) < rc.inlier_threshold)
          polished_inliers.push_back(static_cast<int>(i));
      if (static_cast<int>(polished_inliers.size()) > rc.min_inliers) {
        report.result.transform = polished;
        report.result.inliers = polished_inliers;
        double ss = 0.0;
        for (int i : polished_inliers) {
          const double e = pair_error(pairs[i].x1, pairs[i].x2, polished);
          ss += e * e;
        }
        report.result.avg_error = ss / static_cast<double>(polished_inliers.size());
      }
    }
  }
  return report;
}

nlohmann::json RegisterReport::to_json() const {
  nlohmann::json j;
  j["success"] = result.success;
  j["scale"] = result.transform.scale;
  std::vector<double> rot(9);
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) rot[3 * r + c] = result.transform.rotation(r, c);
  j["rotation_row_major"] = rot;
  j["translation"] = {result.transform.translation.x(), result.transform.translation.y(),
                      result.transform.translation.z()};
  j["num_inliers"] = static_cast<int>(result.inliers.size());
  j["avg_error_eq7"] = result.avg_error;
  nlohmann::json inlier_pairs = nlohmann::json::array();
  for (int idx : result.inliers)
    inlier_pairs.push_back({candidates[idx].index_1, candidates[idx].index_2});
  j["inlier_pairs"] = std::move(inlier_pairs);
  j["seed"] = config.ransac.seed;
  j["iterations"] = config.ransac.iterations;
  j["corners_a"] = corners_a;
  j["corners_b"] = corners_b;
  j["num_candidates"] = static_cast<int>(candidates.size());
  j["inlier_threshold_world"] = inlier_threshold_world;
  j["config"] = config.to_json();
  return j;
}

void write_corners_ply(const std::vector<Corner>& corners,
                       const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write ply file: " + path.string());
  out << "ply\nformat binary_little_endian 1.0\n"
      << "element vertex " << corners.size() << "\n"
      << "property float x\nproperty float y\nproperty float z\n"
      << "property float response\nproperty uchar level\nend_header\n";
  for (const auto& c : corners) {
    const float rec[4] = {static_cast<float>(c.position.x()),
                          static_cast<float>(c.position.y()),
                          static_cast<float>(c.position.z()),
                          static_cast<float>(c.response)};
    out.write(reinterpret_cast<const char*>(rec), sizeof rec);
    const unsigned char level = static_cast<unsigned char>(std::clamp(c.level, 0, 255));
    out.write(reinterpret_cast<const char*>(&level), 1);
  }
  if (!out) throw IoError("short write to ply file: " + path.string());
}

void write_corners_jsonl(const std::vector<Corner>& corners,
                         const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write jsonl file: " + path.string());
  for (const auto& c : corners) {
    nlohmann::json j{{"i", c.grid_index[0]},
                     {"j", c.grid_index[1]},
                     {"k", c.grid_index[2]},
                     {"level", c.level},
                     {"position", {c.position.x(), c.position.y(), c.position.z()}},
                     {"response", c.response}};
    out << j.dump() << "\n";
  }
}

nlohmann::json transform_to_json(const SimilarityTransform& t) {
  std::vector<double> rot(9);
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) rot[3 * r + c] = t.rotation(r, c);
  return nlohmann::json{{"scale", t.scale},
                        {"rotation_row_major", rot},
                        {"translation", {t.translation.x(), t.translation.y(),
                                         t.translation.z()}}};
}

SimilarityTransform transform_from_json(const nlohmann::json& j) {
  SimilarityTransform t;
  t.scale = j.at("scale").get<double>();
  const auto& rot = j.at("rotation_row_major");
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) t.rotation(r, c) = rot.at(3 * r + c).get<double>();
  const auto& trans = j.at("translation");
  for (int a = 0; a < 3; ++a) t.translation[a] = trans.at(a).get<double>();
  return t;
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json cases_json = nlohmann::json::array();
  for (const auto& c : cases) {
    nlohmann::json entry{{"name", c.name},
                         {"success", c.success},
                         {"has_truth", c.has_truth},
                         {"avg_error_eq7", c.avg_error}};
    if (c.success && c.has_truth) {
      entry["rotation_error_deg"] = c.rotation_error_deg;
      entry["translation_error"] = c.translation_error;
      entry["scale_rel_error"] = c.scale_rel_error;
    }
    cases_json.push_back(std::move(entry));
  }
  return nlohmann::json{{"cases", std::move(cases_json)},
                        {"num_cases", num_cases},
                        {"num_success", num_success},
                        {"mean_avg_error_on_success", mean_avg_error_on_success},
                        {"mean_rotation_error_deg", mean_rotation_error_deg},
                        {"mean_translation_error", mean_translation_error},
                        {"mean_scale_rel_error", mean_scale_rel_error}};
}

EvalReport evaluate_results(const std::filesystem::path& results_dir,
                            const std::filesystem::path& truths_dir) {
  EvalReport report;
  std::vector<std::filesystem::path> files;
  if (std::filesystem::exists(results_dir))
    for (const auto& entry : std::filesystem::directory_iterator(results_dir))
      if (entry.path().extension() == ".json") files.push_back(entry.path());
  std::sort(files.begin(), files.end());

  double sum_err = 0.0, sum_rot = 0.0, sum_trans = 0.0, sum_scale = 0.0;
  int evaluated = 0;
  for (const auto& file : files) {
    std::ifstream in(file);
    if (!in) throw IoError("cannot open result file: " + file.string());
    const nlohmann::json r = nlohmann::json::parse(in);

    EvalCase c;
    c.name = file.stem().string();
    c.success = r.value("success", false);
    c.avg_error = r.value("avg_error_eq7", 0.0);

    const auto truth_path = truths_dir / file.filename();
    if (std::filesystem::exists(truth_path)) {
      c.has_truth = true;
      std::ifstream tin(truth_path);
      const nlohmann::json tj = nlohmann::json::parse(tin);
      const SimilarityTransform truth = transform_from_json(tj);
      if (c.success) {
        const SimilarityTransform est = transform_from_json(r);
        c.rotation_error_deg =
            rotation_angle_between(est.rotation, truth.rotation) * 180.0 / M_PI;
        c.translation_error = (est.translation - truth.translation).norm();
        c.scale_rel_error = std::abs(est.scale - truth.scale) / truth.scale;
      }
    }
    if (c.success) {
      ++report.num_success;
      sum_err += c.avg_error;
      if (c.has_truth) {
        ++evaluated;
        sum_rot += c.rotation_error_deg;
        sum_trans += c.translation_error;
        sum_scale += c.scale_rel_error;
      }
    }
    report.cases.push_back(std::move(c));
  }
  report.num_cases = static_cast<int>(report.cases.size());
  if (report.num_success > 0)
    report.mean_avg_error_on_success = sum_err / report.num_success;
  if (evaluated > 0) {
    report.mean_rotation_error_deg = sum_rot / evaluated;
    report.mean_translation_error = sum_trans / evaluated;
    report.mean_scale_rel_error = sum_scale / evaluated;
  }
  return report;
}

namespace {

nlohmann::json aabb_to_json(const Aabb& box) {
  return {{"min", {box.min.x(), box.min.y(), box.min.z()}},
          {"max", {box.max.x(), box.max.y(), box.max.z()}}};
}

Aabb aabb_from_json(const nlohmann::json& j) {
  Aabb box;
  for (int a = 0; a < 3; ++a) {
    box.min[a] = j.at("min").at(a).get<double>();
    box.max[a] = j.at("max").at(a).get<double>();
  }
  return box;
}

nlohmann::json primitive_to_json(const Primitive& p) {
  nlohmann::json j;
  j["type"] = p.kind == Primitive::Kind::box ? "box" : "cylinder";
  j["center"] = {p.center.x(), p.center.y(), p.center.z()};
  j["half_size"] = {p.half_size.x(), p.half_size.y(), p.half_size.z()};
  j["amplitude"] = p.amplitude;
  std::vector<double> rot(9);
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) rot[3 * r + c] = p.rotation(r, c);
  j["rotation_row_major"] = rot;
  return j;
}

Primitive primitive_from_json(const nlohmann::json& j) {
  Primitive p;
  const std::string type = j.value("type", "box");
  if (type == "box")
    p.kind = Primitive::Kind::box;
  else if (type == "cylinder")
    p.kind = Primitive::Kind::cylinder;
  else
    throw ArgumentError("unknown primitive type: " + type);
  for (int a = 0; a < 3; ++a) {
    p.center[a] = j.at("center").at(a).get<double>();
    p.half_size[a] = j.at("half_size").at(a).get<double>();
  }
  p.amplitude = j.value("amplitude", 1.0);
  if (j.contains("rotation_row_major")) {
    const auto& rot = j.at("rotation_row_major");
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) p.rotation(r, c) = rot.at(3 * r + c).get<double>();
  } else if (j.contains("rotation_euler")) {
    const auto& e = j.at("rotation_euler");
    p.rotation = euler_rotation(e.at(0).get<double>(), e.at(1).get<double>(),
                                e.at(2).get<double>());
  }
  return p;
}

}  // namespace

PairSpec PairSpec::from_json(const nlohmann::json& j) {
  PairSpec spec;
  const auto& s = j.at("scene");
  spec.scene.extent = aabb_from_json(s.at("extent"));
  for (const auto& p : s.at("primitives")) spec.scene.primitives.push_back(primitive_from_json(p));
  spec.scene.noise_sigma = s.value("noise_sigma", 0.0);
  spec.scene.edge_width = s.value("edge_width", 0.0);
  spec.scene.seed = s.value("seed", std::uint64_t{0});
  spec.scene.validate();

  spec.crop_a = aabb_from_json(j.at("crop_a"));
  spec.crop_b = aabb_from_json(j.at("crop_b"));
  const auto& t = j.at("transform");
  if (t.contains("rotation_row_major")) {
    spec.transform = transform_from_json(t);
  } else {
    spec.transform.scale = t.value("scale", 1.0);
    const auto& e = t.at("rotation_euler");
    spec.transform.rotation = euler_rotation(e.at(0).get<double>(), e.at(1).get<double>(),
                                             e.at(2).get<double>());
    const auto& tr = t.at("translation");
    for (int a = 0; a < 3; ++a) spec.transform.translation[a] = tr.at(a).get<double>();
  }
  spec.spacing = j.value("spacing", 1.0);
  if (!(spec.spacing > 0.0)) throw ArgumentError("pair spec spacing must be > 0");
  return spec;
}

nlohmann::json PairSpec::to_json() const {
  nlohmann::json prims = nlohmann::json::array();
  for (const auto& p : scene.primitives) prims.push_back(primitive_to_json(p));
  return nlohmann::json{{"scene",
                         {{"extent", aabb_to_json(scene.extent)},
                          {"primitives", std::move(prims)},
                          {"noise_sigma", scene.noise_sigma},
                          {"edge_width", scene.edge_width},
                          {"seed", scene.seed}}},
                        {"crop_a", aabb_to_json(crop_a)},
                        {"crop_b", aabb_to_json(crop_b)},
                        {"transform", transform_to_json(transform)},
                        {"spacing", spacing}};
}

PairSpec make_room_pair_spec(std::uint64_t seed) {
  PairSpec spec;
  const double extent = 96.0;
  Aabb room{Vec3::Zero(), Vec3::Constant(extent)};
  spec.scene = make_room_scene(seed, room, 30, 38, 0.02);
  spec.spacing = 1.0;

  Rng rng = Rng::derive(seed, 0xC40Full);
  const int axis = static_cast<int>(rng.uniform_int(0, 2));

  // Place each cut plane through as few boxes as possible: a cut through a
  // box leaves truncated blobs whose cut-face corners pollute both scenes.
  auto pick_cut = [&](double lo, double hi) {
    double best_pos = 0.5 * (lo + hi) * extent;
    int best_sliced = std::numeric_limits<int>::max();
    for (int step = 0; step <= 24; ++step) {
      const double pos = std::round((lo + (hi - lo) * step / 24.0) * extent);
      int sliced = 0;
      for (std::size_t p = 6; p < spec.scene.primitives.size(); ++p) {
        const auto& prim = spec.scene.primitives[p];
        // conservative reach covers rotated primitives
        if (std::abs(prim.center[axis] - pos) < prim.half_size.norm() + 1.0) ++sliced;
      }
      if (sliced < best_sliced) {
        best_sliced = sliced;
        best_pos = pos;
      }
    }
    return best_pos;
  };
  const double cut_a = pick_cut(0.60, 0.72);
  const double cut_b = cut_a - std::round(rng.uniform(0.40, 0.52) * extent);

  spec.crop_a = room;
  spec.crop_a.max[axis] = cut_a;
  spec.crop_b = room;
  spec.crop_b.min[axis] = pick_cut(cut_b / extent - 0.03, cut_b / extent + 0.03);

  // Lattice-inexact ground truth: a free rotation about z plus mild tilts.
  const double tz = rng.uniform(-M_PI, M_PI);
  const double ty = rng.uniform(-0.25, 0.25);
  const double tx = rng.uniform(-0.25, 0.25);
  spec.transform.scale = 1.0;
  spec.transform.rotation = euler_rotation(tx, ty, tz);
  spec.transform.translation =
      Vec3(rng.uniform(-8.0, 8.0), rng.uniform(-8.0, 8.0), rng.uniform(-8.0, 8.0));
  return spec;
}

}  // namespace volreg
