#pragma once

// Random spatial transforms: affine sampling, stationary velocity fields and
// their exponentiation by scaling and squaring, composition and warping.
//
// All warps use the pull-back convention: output(x) = input(phi(x)), where
// phi(x) is a source coordinate in voxel units.

#include <array>
#include <optional>

#include "synthmr/gen_config.hpp"
#include "synthmr/rng.hpp"
#include "synthmr/volume.hpp"

namespace synthmr {

struct AffineParams {
  std::array<double, 3> rotations_deg{0, 0, 0};
  std::array<double, 3> scalings{1, 1, 1};
  std::array<double, 3> shears{0, 0, 0};
  std::array<double, 3> translations{0, 0, 0};
  friend bool operator==(const AffineParams&, const AffineParams&) = default;
};

// Row-major 4x4 homogeneous matrix acting on voxel coordinates.
struct Matrix4 {
  std::array<double, 16> m{1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1};

  static Matrix4 identity() { return {}; }
  static Matrix4 translation(double tx, double ty, double tz);
  double operator()(int r, int c) const { return m[4 * r + c]; }
  double& operator()(int r, int c) { return m[4 * r + c]; }
  Point3 apply(Point3 p) const;
  double det3() const;

  friend Matrix4 operator*(const Matrix4& a, const Matrix4& b);
  friend bool operator==(const Matrix4&, const Matrix4&) = default;
};

// Dense pull-back map: per voxel, the source coordinate it reads from.
struct DeformField {
  VectorField coord;

  const Dims& dims() const { return coord.dims(); }
  static DeformField identity(Dims d);
};

// Draws the 12 affine parameters, each uniform in its configured range, in
// the order rotations, scalings, shears, translations.
AffineParams sample_affine(const GenConfig& cfg, Rng& rng);

// Center^-1 * T * Rz * Ry * Rx * Shear * Scale * Center, with Center moving
// the volume center ((n-1)/2 per axis) to the origin. Shear is upper
// triangular: x += s0*y + s1*z, y += s2*z.
Matrix4 affine_matrix(const AffineParams& p, Dims dims);

// c_v^3 x 3 i.i.d. N(0, sigma_svf^2) velocities (voxel units).
VectorField sample_svf_grid(const GenConfig& cfg, Rng& rng);

// Coarse grid trilinearly upscaled to dims.
VectorField sample_svf(const GenConfig& cfg, Dims dims, Rng& rng);

// Number of squarings used for a field: clamp(ceil(log2(max|v|_inf / 0.5)), 4, 8).
int squaring_steps(const VectorField& svf);

// exp(svf) as a pull-back map by scaling and squaring. `steps` overrides the
// adaptive step count.
DeformField integrate_svf(const VectorField& svf, std::optional<int> steps = std::nullopt);

// result(x) = aff * phi_v(x).
DeformField compose(const Matrix4& aff, const DeformField& phi_v);

// Nearest-neighbour pull-back; out-of-field reads give background 0.
LabelMap warp_labels(const LabelMap& s, const DeformField& phi);

// Trilinear pull-back with edge clamping.
Volume warp_volume(const Volume& v, const DeformField& phi);

}  // namespace synthmr
