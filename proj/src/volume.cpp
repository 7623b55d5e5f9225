#include "synthmr/volume.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "synthmr/error.hpp"
#include "synthmr/kernels.hpp"

namespace synthmr {

std::string to_string(const Dims& d) {
  return std::to_string(d.nx) + "x" + std::to_string(d.ny) + "x" + std::to_string(d.nz);
}

Volume::Volume(Dims dims, float fill, Spacing spacing) : dims_(dims), spacing_(spacing), data_(dims.count(), fill) {
  if (!dims.valid()) throw ParameterError("volume dims must be positive, got " + to_string(dims));
}

Volume::Volume(Dims dims, std::vector<float> data, Spacing spacing)
    : dims_(dims), spacing_(spacing), data_(std::move(data)) {
  if (!dims.valid()) throw ParameterError("volume dims must be positive, got " + to_string(dims));
  if (data_.size() != dims.count())
    throw ParameterError("volume data length " + std::to_string(data_.size()) + " does not match dims " +
                         to_string(dims));
}

bool Volume::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](float v) { return std::isfinite(v); });
}

LabelMap::LabelMap(Dims dims, Label fill, Spacing spacing)
    : dims_(dims), spacing_(spacing), labels_(dims.count(), fill) {
  if (!dims.valid()) throw ParameterError("label map dims must be positive, got " + to_string(dims));
}

LabelMap::LabelMap(Dims dims, std::vector<Label> labels, Spacing spacing)
    : dims_(dims), spacing_(spacing), labels_(std::move(labels)) {
  if (!dims.valid()) throw ParameterError("label map dims must be positive, got " + to_string(dims));
  if (labels_.size() != dims.count())
    throw ParameterError("label data length " + std::to_string(labels_.size()) + " does not match dims " +
                         to_string(dims));
}

std::vector<Label> LabelMap::label_set() const {
  std::vector<bool> seen(65536, false);
  for (Label l : labels_) seen[l] = true;
  std::vector<Label> out;
  for (std::size_t l = 0; l < seen.size(); ++l)
    if (seen[l]) out.push_back(static_cast<Label>(l));
  return out;
}

float trilinear_sample(const Volume& v, Point3 p) {
  const kernels::GridView g{v.data().data(), v.dims().nx, v.dims().ny, v.dims().nz};
  const float x = static_cast<float>(p.x), y = static_cast<float>(p.y), z = static_cast<float>(p.z);
  float out = 0.f;
  kernels::active().trilinear(g, &x, &y, &z, 1, &out);
  return out;
}

Label nearest_sample(const LabelMap& m, Point3 p) {
  const double fx = std::floor(p.x + 0.5), fy = std::floor(p.y + 0.5), fz = std::floor(p.z + 0.5);
  const Dims& d = m.dims();
  if (!(fx >= 0 && fy >= 0 && fz >= 0 && fx < d.nx && fy < d.ny && fz < d.nz)) return 0;
  return m.at(static_cast<int>(fx), static_cast<int>(fy), static_cast<int>(fz));
}

namespace {

struct AxisMap {
  std::vector<int> i0;
  std::vector<int> i1;
  std::vector<float> f;
};

// Align-corners mapping of `fine` samples onto `coarse` nodes.
AxisMap align_corners(int coarse, int fine) {
  AxisMap m;
  m.i0.resize(fine);
  m.i1.resize(fine);
  m.f.resize(fine);
  for (int i = 0; i < fine; ++i) {
    if (coarse == 1 || fine == 1) {
      m.i0[i] = m.i1[i] = 0;
      m.f[i] = 0.f;
      continue;
    }
    // Rational position i*(c-1)/(f-1); exact at coarse nodes.
    const long num = static_cast<long>(i) * (coarse - 1);
    const int k = static_cast<int>(num / (fine - 1));
    m.i0[i] = k;
    m.i1[i] = std::min(k + 1, coarse - 1);
    m.f[i] = static_cast<float>(static_cast<double>(num - static_cast<long>(k) * (fine - 1)) / (fine - 1));
  }
  return m;
}

}  // namespace

Volume upscale_trilinear(const Volume& coarse, Dims target) {
  if (target.nx < 2 || target.ny < 2 || target.nz < 2)
    throw ParameterError("upscale target dims must be >= 2 per axis, got " + to_string(target));
  const Dims& c = coarse.dims();
  const AxisMap mx = align_corners(c.nx, target.nx);
  const AxisMap my = align_corners(c.ny, target.ny);
  const AxisMap mz = align_corners(c.nz, target.nz);

  // Separable: x pass into (tx, cy, cz), then y, then z.
  auto lerp = [](float a, float b, float t) { return a + t * (b - a); };
  std::vector<float> sx(static_cast<std::size_t>(target.nx) * c.ny * c.nz);
  for (int z = 0; z < c.nz; ++z)
    for (int y = 0; y < c.ny; ++y)
      for (int x = 0; x < target.nx; ++x)
        sx[x + static_cast<std::size_t>(target.nx) * (y + static_cast<std::size_t>(c.ny) * z)] =
            lerp(coarse.at(mx.i0[x], y, z), coarse.at(mx.i1[x], y, z), mx.f[x]);

  std::vector<float> sy(static_cast<std::size_t>(target.nx) * target.ny * c.nz);
  const std::size_t tx = target.nx;
  for (int z = 0; z < c.nz; ++z)
    for (int y = 0; y < target.ny; ++y) {
      const float* r0 = &sx[tx * (my.i0[y] + static_cast<std::size_t>(c.ny) * z)];
      const float* r1 = &sx[tx * (my.i1[y] + static_cast<std::size_t>(c.ny) * z)];
      float* o = &sy[tx * (y + static_cast<std::size_t>(target.ny) * z)];
      for (std::size_t x = 0; x < tx; ++x) o[x] = lerp(r0[x], r1[x], my.f[y]);
    }

  Volume out(target, 0.f, coarse.spacing());
  const std::size_t plane = tx * target.ny;
  for (int z = 0; z < target.nz; ++z) {
    const float* p0 = &sy[plane * mz.i0[z]];
    const float* p1 = &sy[plane * mz.i1[z]];
    float* o = &out.data()[plane * z];
    for (std::size_t i = 0; i < plane; ++i) o[i] = lerp(p0[i], p1[i], mz.f[z]);
  }
  return out;
}

VectorField upscale_trilinear(const VectorField& coarse, Dims target) {
  VectorField out;
  for (int a = 0; a < 3; ++a) out.comp[a] = upscale_trilinear(coarse.comp[a], target);
  return out;
}

std::vector<Volume> one_hot(const LabelMap& m, std::span<const Label> ordering) {
  std::unordered_map<Label, std::size_t> channel;
  for (std::size_t k = 0; k < ordering.size(); ++k) channel.emplace(ordering[k], k);
  std::vector<Volume> out(ordering.size(), Volume(m.dims(), 0.f, m.spacing()));
  for (std::size_t j = 0; j < m.size(); ++j) {
    const auto it = channel.find(m[j]);
    if (it == channel.end())
      throw DataError("label " + std::to_string(m[j]) + " present in map but absent from channel ordering");
    out[it->second][j] = 1.f;
  }
  return out;
}

}  // namespace synthmr
