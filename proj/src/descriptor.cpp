// Copyright (c) 2026 volreg contributors
// SPDX-License-Identifier: Apache-2.0
#include "volreg/descriptor.hpp"

#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "volreg/errors.hpp"
#include "volreg/registration.hpp"
#include "volreg/rng.hpp"

namespace volreg {

bool is_unit_norm(const Descriptor& d, double tol) {
  return d.allFinite() && std::abs(d.norm() - 1.0) <= tol;
}

bool neighborhood_fits(const DensityGrid& g, const std::array<int, 3>& index, int radius) {
  const double r = radius * std::sqrt(3.0);
  for (int a = 0; a < 3; ++a) {
    if (index[a] - r < 0.0) return false;
    if (index[a] + r > static_cast<double>(g.dims[a] - 1)) return false;
  }
  return true;
}

Neighborhood extract_neighborhood(const DensityGrid& g, const Corner& c, int radius,
                                  const std::array<double, 3>& orientation) {
  if (radius < 1) throw ArgumentError("neighborhood radius must be >= 1");
  const auto& idx = c.grid_index;
  if (!g.in_bounds(idx[0], idx[1], idx[2]))
    throw ArgumentError("corner index outside its grid");

  Neighborhood n;
  n.radius = radius;
  n.orientation = orientation;
  n.values.resize(static_cast<std::size_t>(n.edge()) * n.edge() * n.edge());

  const bool identity =
      orientation[0] == 0.0 && orientation[1] == 0.0 && orientation[2] == 0.0;
  if (identity) {
    for (int a = 0; a < 3; ++a)
      if (idx[a] - radius < 0 || idx[a] + radius > g.dims[a] - 1)
        throw ExcludedCornerError("neighborhood leaves the grid");
    std::size_t w = 0;
    for (int dz = -radius; dz <= radius; ++dz)
      for (int dy = -radius; dy <= radius; ++dy)
        for (int dx = -radius; dx <= radius; ++dx)
          n.values[w++] = g.at(idx[0] + dx, idx[1] + dy, idx[2] + dz);
    return n;
  }

  if (!neighborhood_fits(g, idx, radius))
    throw ExcludedCornerError("rotated sampling sphere leaves the grid");
  const Mat3 rot = euler_rotation(orientation[0], orientation[1], orientation[2]);
  const Vec3 center = g.world(idx[0], idx[1], idx[2]);
  std::size_t w = 0;
  for (int dz = -radius; dz <= radius; ++dz)
    for (int dy = -radius; dy <= radius; ++dy)
      for (int dx = -radius; dx <= radius; ++dx) {
        const Vec3 offset(g.spacing * dx, g.spacing * dy, g.spacing * dz);
        n.values[w++] = sample_trilinear(g, center + rot * offset);
      }
  return n;
}

void TrainingSet::rebuild_index() {
  by_corner.assign(num_corners, {});
  for (std::size_t i = 0; i < items.size(); ++i) {
    const int c = items[i].corner_id;
    if (c < 0 || c >= num_corners) throw ArgumentError("item corner id out of range");
    by_corner[c].push_back(static_cast<int>(i));
  }
}

void TrainingSet::validate() const {
  if (radius < 1) throw ArgumentError("training set radius must be >= 1");
  if (num_corners < 0) throw ArgumentError("negative corner count");
  if (by_corner.size() != static_cast<std::size_t>(num_corners))
    throw ArgumentError("corner index not rebuilt");
  const std::size_t expect =
      static_cast<std::size_t>(2 * radius + 1) * (2 * radius + 1) * (2 * radius + 1);
  for (const auto& item : items)
    if (item.values.size() != expect)
      throw ArgumentError("item neighborhood size mismatch");
}

std::vector<double> angle_lattice(double step) {
  if (!(step > 0.0)) throw ArgumentError("angle step must be > 0");
  std::vector<double> angles;
  // multiples k*step in (-pi, pi]
  const int k_min = static_cast<int>(std::ceil(-M_PI / step + 1e-12));
  const int k_max = static_cast<int>(std::floor(M_PI / step + 1e-12));
  for (int k = k_min; k <= k_max; ++k) {
    const double a = k * step;
    if (a > -M_PI - 1e-12 && a <= M_PI + 1e-12) angles.push_back(a);
  }
  if (angles.empty()) angles.push_back(0.0);
  return angles;
}

TrainingSet synthesize_training_set(const std::vector<DensityGrid>& scenes,
                                    const HarrisConfig& harris, int levels,
                                    double blur_sigma, int radius, double angle_step) {
  if (scenes.empty()) throw DatasetError("no scenes given");
  const std::vector<double> angles = angle_lattice(angle_step);

  TrainingSet ts;
  ts.radius = radius;
  int next_corner = 0;
  for (const auto& scene : scenes) {
    const GridPyramid pyr = build_pyramid(scene, levels, blur_sigma);
    const std::vector<Corner> corners = detect_corners(pyr, harris);
    for (const auto& corner : corners) {
      const DensityGrid& level = pyr.levels[corner.level];
      if (!neighborhood_fits(level, corner.grid_index, radius)) continue;
      const int id = next_corner++;
      for (double tz : angles)
        for (double ty : angles)
          for (double tx : angles) {
            Neighborhood n = extract_neighborhood(level, corner, radius, {tx, ty, tz});
            n.corner_id = id;
            ts.items.push_back(std::move(n));
          }
    }
  }
  ts.num_corners = next_corner;
  if (ts.num_corners < 2)
    throw DatasetError("training set needs at least 2 corners to form triplets");
  ts.rebuild_index();
  return ts;
}

std::pair<TrainingSet, TrainingSet> split_training_set(const TrainingSet& ts,
                                                       double holdout_fraction,
                                                       std::uint64_t seed) {
  ts.validate();
  if (!(holdout_fraction >= 0.0 && holdout_fraction < 1.0))
    throw ArgumentError("holdout fraction must be in [0, 1)");
  int holdout_count = static_cast<int>(std::round(holdout_fraction * ts.num_corners));
  holdout_count = std::min(holdout_count, ts.num_corners - 2);
  holdout_count = std::max(holdout_count, 0);

  // Seeded partial Fisher-Yates over corner ids.
  std::vector<int> order(ts.num_corners);
  for (int i = 0; i < ts.num_corners; ++i) order[i] = i;
  Rng rng = Rng::derive(seed, 0x5917ull);
  for (int i = 0; i < holdout_count; ++i) {
    const int j = static_cast<int>(rng.uniform_int(i, ts.num_corners - 1));
    std::swap(order[i], order[j]);
  }
  std::vector<bool> held(ts.num_corners, false);
  for (int i = 0; i < holdout_count; ++i) held[order[i]] = true;

  TrainingSet train, holdout;
  train.radius = holdout.radius = ts.radius;
  std::vector<int> remap(ts.num_corners, -1);
  int train_corners = 0, holdout_corners = 0;
  for (int c = 0; c < ts.num_corners; ++c)
    remap[c] = held[c] ? holdout_corners++ : train_corners++;
  train.num_corners = train_corners;
  holdout.num_corners = holdout_corners;
  for (const auto& item : ts.items) {
    Neighborhood n = item;
    n.corner_id = remap[item.corner_id];
    (held[item.corner_id] ? holdout : train).items.push_back(std::move(n));
  }
  train.rebuild_index();
  holdout.rebuild_index();
  return {std::move(train), std::move(holdout)};
}

void save_training_set(const TrainingSet& ts, const std::filesystem::path& dir) {
  ts.validate();
  std::filesystem::create_directories(dir);
  const int edge = 2 * ts.radius + 1;
  DensityGrid stack({edge, edge, edge * static_cast<int>(ts.items.size())}, 1.0,
                    Vec3::Zero());
  nlohmann::json index = nlohmann::json::array();
  for (std::size_t i = 0; i < ts.items.size(); ++i) {
    const auto& item = ts.items[i];
    std::copy(item.values.begin(), item.values.end(),
              stack.values.begin() + static_cast<std::ptrdiff_t>(i) * item.values.size());
    index.push_back({{"corner_id", item.corner_id},
                     {"orientation", item.orientation},
                     {"offset", i}});
  }
  save_grid(stack, dir / "data.vgrd");
  nlohmann::json root{{"radius", ts.radius}, {"num_corners", ts.num_corners},
                      {"items", std::move(index)}};
  std::ofstream out(dir / "index.json", std::ios::trunc);
  if (!out) throw IoError("cannot write dataset index");
  out << root.dump(2) << "\n";
}

TrainingSet load_training_set(const std::filesystem::path& dir) {
  std::ifstream in(dir / "index.json");
  if (!in) throw IoError("cannot open dataset index: " + (dir / "index.json").string());
  const nlohmann::json root = nlohmann::json::parse(in);
  const DensityGrid stack = load_grid(dir / "data.vgrd");

  TrainingSet ts;
  ts.radius = root.at("radius").get<int>();
  ts.num_corners = root.at("num_corners").get<int>();
  const int edge = 2 * ts.radius + 1;
  const std::size_t cells = static_cast<std::size_t>(edge) * edge * edge;
  if (stack.dims[0] != edge || stack.dims[1] != edge)
    throw DecodeError(DecodeError::Kind::bad_header, "dataset grid edge mismatch");
  for (const auto& entry : root.at("items")) {
    Neighborhood n;
    n.radius = ts.radius;
    n.corner_id = entry.at("corner_id").get<int>();
    const auto orient = entry.at("orientation");
    n.orientation = {orient.at(0).get<double>(), orient.at(1).get<double>(),
                     orient.at(2).get<double>()};
    const std::size_t offset = entry.at("offset").get<std::size_t>();
    if ((offset + 1) * cells > stack.values.size())
      throw DecodeError(DecodeError::Kind::truncated, "dataset offset out of range");
    n.values.assign(stack.values.begin() + static_cast<std::ptrdiff_t>(offset * cells),
                    stack.values.begin() + static_cast<std::ptrdiff_t>((offset + 1) * cells));
    ts.items.push_back(std::move(n));
  }
  ts.rebuild_index();
  ts.validate();
  return ts;
}

}  // namespace volreg
