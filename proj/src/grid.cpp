// Copyright (c) 2026 volreg contributors
// SPDX-License-Identifier: Apache-2.0
#include "volreg/grid.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "volreg/errors.hpp"

namespace volreg {

namespace {

int clampi(int v, int lo, int hi) { return v < lo ? lo : (v > hi ? hi : v); }

void append_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xFF));
  out.push_back(static_cast<std::uint8_t>((v >> 8) & 0xFF));
  out.push_back(static_cast<std::uint8_t>((v >> 16) & 0xFF));
  out.push_back(static_cast<std::uint8_t>((v >> 24) & 0xFF));
}

void append_f32(std::vector<std::uint8_t>& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, sizeof bits);
  append_u32(out, bits);
}

std::uint32_t read_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

float read_f32(const std::uint8_t* p) {
  const std::uint32_t bits = read_u32(p);
  float v;
  std::memcpy(&v, &bits, sizeof v);
  return v;
}

constexpr std::size_t kHeaderSize = 4 + 4 + 12 + 4 + 12;

}  // namespace

double DensityGrid::at_clamped(int i, int j, int k) const {
  return values[index(clampi(i, 0, dims[0] - 1), clampi(j, 0, dims[1] - 1),
                      clampi(k, 0, dims[2] - 1))];
}

std::array<int, 3> DensityGrid::nearest_index(const Vec3& p) const {
  std::array<int, 3> idx;
  for (int a = 0; a < 3; ++a)
    idx[a] = static_cast<int>(std::llround((p[a] - origin[a]) / spacing));
  return idx;
}

void DensityGrid::validate() const {
  if (dims[0] < 1 || dims[1] < 1 || dims[2] < 1)
    throw ArgumentError("grid dims must all be >= 1");
  if (!(spacing > 0.0)) throw ArgumentError("grid spacing must be > 0");
  if (values.size() != cell_count())
    throw ArgumentError("grid value count does not match dims");
  for (double v : values)
    if (!std::isfinite(v)) throw ArgumentError("grid contains non-finite values");
}

std::vector<std::uint8_t> encode_grid(const DensityGrid& grid) {
  grid.validate();
  std::vector<std::uint8_t> out;
  out.reserve(kHeaderSize + 4 * grid.cell_count());
  for (char m : {'V', 'G', 'R', 'D'}) out.push_back(static_cast<std::uint8_t>(m));
  append_u32(out, 1u);
  for (int a = 0; a < 3; ++a) append_u32(out, static_cast<std::uint32_t>(grid.dims[a]));
  append_f32(out, static_cast<float>(grid.spacing));
  for (int a = 0; a < 3; ++a) append_f32(out, static_cast<float>(grid.origin[a]));
  for (double v : grid.values) append_f32(out, static_cast<float>(v));
  return out;
}

DensityGrid decode_grid(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < kHeaderSize)
    throw DecodeError(DecodeError::Kind::truncated, "grid file shorter than header");
  if (std::memcmp(bytes.data(), "VGRD", 4) != 0)
    throw DecodeError(DecodeError::Kind::bad_magic, "bad magic bytes, expected VGRD");
  const std::uint32_t version = read_u32(bytes.data() + 4);
  if (version != 1u)
    throw DecodeError(DecodeError::Kind::bad_version,
                      "unsupported VGRD version " + std::to_string(version));
  DensityGrid g;
  for (int a = 0; a < 3; ++a) {
    const std::uint32_t n = read_u32(bytes.data() + 8 + 4 * a);
    if (n == 0 || n > (1u << 24))
      throw DecodeError(DecodeError::Kind::bad_header,
                        "grid dimension out of range: " + std::to_string(n));
    g.dims[a] = static_cast<int>(n);
  }
  g.spacing = read_f32(bytes.data() + 20);
  if (!(g.spacing > 0.0f) || !std::isfinite(g.spacing))
    throw DecodeError(DecodeError::Kind::bad_header, "grid spacing must be positive");
  for (int a = 0; a < 3; ++a) g.origin[a] = read_f32(bytes.data() + 24 + 4 * a);
  if (!g.origin.allFinite())
    throw DecodeError(DecodeError::Kind::bad_header, "grid origin must be finite");

  const std::size_t count = g.cell_count();
  if (bytes.size() != kHeaderSize + 4 * count) {
    if (bytes.size() < kHeaderSize + 4 * count)
      throw DecodeError(DecodeError::Kind::truncated, "grid payload truncated");
    throw DecodeError(DecodeError::Kind::bad_header, "grid payload has trailing bytes");
  }
  g.values.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    const float v = read_f32(bytes.data() + kHeaderSize + 4 * i);
    if (!std::isfinite(v))
      throw DecodeError(DecodeError::Kind::non_finite, "grid contains non-finite values");
    g.values[i] = v;
  }
  return g;
}

DensityGrid load_grid(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open grid file: " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return decode_grid(bytes);
}

void save_grid(const DensityGrid& grid, const std::filesystem::path& path,
               const GridMeta* meta) {
  const auto bytes = encode_grid(grid);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write grid file: " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to grid file: " + path.string());
  if (meta != nullptr) {
    nlohmann::json j{{"name", meta->name}, {"source", meta->source}, {"notes", meta->notes}};
    std::ofstream m(path.string() + ".meta.json", std::ios::trunc);
    if (!m) throw IoError("cannot write grid sidecar for: " + path.string());
    m << j.dump(2) << "\n";
  }
}

std::optional<GridMeta> load_grid_meta(const std::filesystem::path& grid_path) {
  std::ifstream in(grid_path.string() + ".meta.json");
  if (!in) return std::nullopt;
  nlohmann::json j = nlohmann::json::parse(in);
  GridMeta meta;
  meta.name = j.value("name", "");
  meta.source = j.value("source", "");
  meta.notes = j.value("notes", "");
  return meta;
}

DensityGrid average_pool(const DensityGrid& g, const std::array<int, 3>& pool) {
  g.validate();
  for (int a = 0; a < 3; ++a)
    if (pool[a] < 1) throw ArgumentError("pool size must be >= 1 on every axis");
  if (pool[0] != pool[1] || pool[1] != pool[2])
    throw ArgumentError("pool sizes must be equal on all axes (uniform spacing)");
  const int p = pool[0];
  std::array<int, 3> od{g.dims[0] / p, g.dims[1] / p, g.dims[2] / p};
  for (int a = 0; a < 3; ++a)
    if (od[a] < 1) throw ArgumentError("pool size larger than grid extent");

  DensityGrid out(od, g.spacing * p, g.origin + g.spacing * (p - 1) * 0.5 * Vec3::Ones());
  const double inv = 1.0 / (static_cast<double>(p) * p * p);
  for (int k = 0; k < od[2]; ++k)
    for (int j = 0; j < od[1]; ++j)
      for (int i = 0; i < od[0]; ++i) {
        double sum = 0.0;
        for (int c = 0; c < p; ++c)
          for (int b = 0; b < p; ++b)
            for (int a = 0; a < p; ++a) sum += g.at(i * p + a, j * p + b, k * p + c);
        out.at(i, j, k) = sum * inv;
      }
  return out;
}

DensityGrid average_pool(const DensityGrid& g, int pool) {
  return average_pool(g, {pool, pool, pool});
}

DensityGrid anisotropic_diffusion(const DensityGrid& g, int iters, double dt, double K) {
  g.validate();
  if (iters < 0) throw ArgumentError("diffusion iteration count must be >= 0");
  if (!(dt > 0.0)) throw ArgumentError("diffusion timestep must be > 0");
  if (!(K > 0.0)) throw ArgumentError("diffusion sensitivity K must be > 0");

  DensityGrid out = g;
  if (iters == 0) return out;

  const int nx = g.dims[0], ny = g.dims[1], nz = g.dims[2];
  std::vector<double> cur = g.values;
  std::vector<double> coeff(cur.size());
  std::vector<double> next(cur.size());
  const double invK2 = 1.0 / (K * K);

  auto at = [&](const std::vector<double>& v, int i, int j, int k) {
    return v[static_cast<std::size_t>(clampi(i, 0, nx - 1)) +
             static_cast<std::size_t>(nx) *
                 (static_cast<std::size_t>(clampi(j, 0, ny - 1)) +
                  static_cast<std::size_t>(ny) * clampi(k, 0, nz - 1))];
  };

  for (int it = 0; it < iters; ++it) {
    std::size_t idx = 0;
    for (int k = 0; k < nz; ++k)
      for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i, ++idx) {
          const double gx = 0.5 * (at(cur, i + 1, j, k) - at(cur, i - 1, j, k));
          const double gy = 0.5 * (at(cur, i, j + 1, k) - at(cur, i, j - 1, k));
          const double gz = 0.5 * (at(cur, i, j, k + 1) - at(cur, i, j, k - 1));
          coeff[idx] = std::exp(-(gx * gx + gy * gy + gz * gz) * invK2);
        }
    idx = 0;
    for (int k = 0; k < nz; ++k)
      for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i, ++idx) {
          const double v = cur[idx];
          const double c = coeff[idx];
          double div = 0.0;
          div += 0.5 * (c + at(coeff, i + 1, j, k)) * (at(cur, i + 1, j, k) - v);
          div -= 0.5 * (c + at(coeff, i - 1, j, k)) * (v - at(cur, i - 1, j, k));
          div += 0.5 * (c + at(coeff, i, j + 1, k)) * (at(cur, i, j + 1, k) - v);
          div -= 0.5 * (c + at(coeff, i, j - 1, k)) * (v - at(cur, i, j - 1, k));
          div += 0.5 * (c + at(coeff, i, j, k + 1)) * (at(cur, i, j, k + 1) - v);
          div -= 0.5 * (c + at(coeff, i, j, k - 1)) * (v - at(cur, i, j, k - 1));
          next[idx] = v + dt * div;
        }
    cur.swap(next);
  }
  out.values = std::move(cur);
  return out;
}

DensityGrid gaussian_blur(const DensityGrid& g, double sigma) {
  g.validate();
  if (sigma < 0.0) throw ArgumentError("blur sigma must be >= 0");
  if (sigma == 0.0) return g;

  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> kernel(2 * radius + 1);
  double wsum = 0.0;
  for (int t = -radius; t <= radius; ++t) {
    kernel[t + radius] = std::exp(-0.5 * t * t / (sigma * sigma));
    wsum += kernel[t + radius];
  }
  for (double& w : kernel) w /= wsum;

  DensityGrid out = g;
  DensityGrid tmp = g;
  const int nx = g.dims[0], ny = g.dims[1], nz = g.dims[2];

  // Three replicate-boundary 1D passes.
  for (int k = 0; k < nz; ++k)
    for (int j = 0; j < ny; ++j)
      for (int i = 0; i < nx; ++i) {
        double s = 0.0;
        for (int t = -radius; t <= radius; ++t)
          s += kernel[t + radius] * out.at_clamped(i + t, j, k);
        tmp.at(i, j, k) = s;
      }
  for (int k = 0; k < nz; ++k)
    for (int j = 0; j < ny; ++j)
      for (int i = 0; i < nx; ++i) {
        double s = 0.0;
        for (int t = -radius; t <= radius; ++t)
          s += kernel[t + radius] * tmp.at_clamped(i, j + t, k);
        out.at(i, j, k) = s;
      }
  for (int k = 0; k < nz; ++k)
    for (int j = 0; j < ny; ++j)
      for (int i = 0; i < nx; ++i) {
        double s = 0.0;
        for (int t = -radius; t <= radius; ++t)
          s += kernel[t + radius] * out.at_clamped(i, j, k + t);
        tmp.at(i, j, k) = s;
      }
  return tmp;
}

GridPyramid build_pyramid(const DensityGrid& g, int num_levels, double blur_sigma) {
  g.validate();
  if (num_levels < 1) throw ArgumentError("pyramid must have at least one level");
  for (int a = 0; a < 3; ++a)
    if (g.dims[a] >> (num_levels - 1) < 1)
      throw ArgumentError("pyramid depth makes a level dimension zero");

  GridPyramid pyr;
  pyr.levels.push_back(g);
  for (int level = 1; level < num_levels; ++level) {
    const DensityGrid& prev = pyr.levels.back();
    DensityGrid blurred = gaussian_blur(prev, blur_sigma);
    DensityGrid down({prev.dims[0] / 2, prev.dims[1] / 2, prev.dims[2] / 2},
                     prev.spacing * 2.0, prev.origin);
    for (int k = 0; k < down.dims[2]; ++k)
      for (int j = 0; j < down.dims[1]; ++j)
        for (int i = 0; i < down.dims[0]; ++i)
          down.at(i, j, k) = blurred.at(2 * i, 2 * j, 2 * k);
    pyr.levels.push_back(std::move(down));
  }
  return pyr;
}

double sample_trilinear(const DensityGrid& g, const Vec3& p, double fill) {
  double u[3];
  for (int a = 0; a < 3; ++a) {
    u[a] = (p[a] - g.origin[a]) / g.spacing;
    if (u[a] < 0.0 || u[a] > static_cast<double>(g.dims[a] - 1)) return fill;
  }
  int i0[3];
  double f[3];
  for (int a = 0; a < 3; ++a) {
    i0[a] = static_cast<int>(std::floor(u[a]));
    if (i0[a] > g.dims[a] - 1) i0[a] = g.dims[a] - 1;
    f[a] = u[a] - i0[a];
  }
  const int i1 = std::min(i0[0] + 1, g.dims[0] - 1);
  const int j1 = std::min(i0[1] + 1, g.dims[1] - 1);
  const int k1 = std::min(i0[2] + 1, g.dims[2] - 1);
  const double fx = f[0], fy = f[1], fz = f[2];

  const double c000 = g.at(i0[0], i0[1], i0[2]);
  const double c100 = g.at(i1, i0[1], i0[2]);
  const double c010 = g.at(i0[0], j1, i0[2]);
  const double c110 = g.at(i1, j1, i0[2]);
  const double c001 = g.at(i0[0], i0[1], k1);
  const double c101 = g.at(i1, i0[1], k1);
  const double c011 = g.at(i0[0], j1, k1);
  const double c111 = g.at(i1, j1, k1);

  const double c00 = c000 * (1.0 - fx) + c100 * fx;
  const double c10 = c010 * (1.0 - fx) + c110 * fx;
  const double c01 = c001 * (1.0 - fx) + c101 * fx;
  const double c11 = c011 * (1.0 - fx) + c111 * fx;
  const double c0 = c00 * (1.0 - fy) + c10 * fy;
  const double c1 = c01 * (1.0 - fy) + c11 * fy;
  return c0 * (1.0 - fz) + c1 * fz;
}

}  // namespace volreg
