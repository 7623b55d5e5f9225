#include "synthmr/deform.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "synthmr/kernels.hpp"

namespace synthmr {

Matrix4 Matrix4::translation(double tx, double ty, double tz) {
  Matrix4 t;
  t(0, 3) = tx;
  t(1, 3) = ty;
  t(2, 3) = tz;
  return t;
}

Point3 Matrix4::apply(Point3 p) const {
  return {m[0] * p.x + m[1] * p.y + m[2] * p.z + m[3], m[4] * p.x + m[5] * p.y + m[6] * p.z + m[7],
          m[8] * p.x + m[9] * p.y + m[10] * p.z + m[11]};
}

double Matrix4::det3() const {
  const auto& a = *this;
  return a(0, 0) * (a(1, 1) * a(2, 2) - a(1, 2) * a(2, 1)) - a(0, 1) * (a(1, 0) * a(2, 2) - a(1, 2) * a(2, 0)) +
         a(0, 2) * (a(1, 0) * a(2, 1) - a(1, 1) * a(2, 0));
}

Matrix4 operator*(const Matrix4& a, const Matrix4& b) {
  Matrix4 r;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) {
      double s = 0;
      for (int k = 0; k < 4; ++k) s += a(i, k) * b(k, j);
      r(i, j) = s;
    }
  return r;
}

DeformField DeformField::identity(Dims d) {
  DeformField f{VectorField(d)};
  for (int z = 0; z < d.nz; ++z)
    for (int y = 0; y < d.ny; ++y)
      for (int x = 0; x < d.nx; ++x) {
        const std::size_t i = d.index(x, y, z);
        f.coord.comp[0][i] = static_cast<float>(x);
        f.coord.comp[1][i] = static_cast<float>(y);
        f.coord.comp[2][i] = static_cast<float>(z);
      }
  return f;
}

namespace {

void require_range(const char* name, const Range& r) {
  if (!(r.lo <= r.hi)) throw ParameterError(std::string("inverted range for ") + name);
}

void require_same_dims(const Dims& a, const Dims& b, const char* what) {
  if (!(a == b))
    throw DataError(std::string(what) + ": dims mismatch " + to_string(a) + " vs " + to_string(b));
}

kernels::GridView view(const Volume& v) { return {v.data().data(), v.dims().nx, v.dims().ny, v.dims().nz}; }

}  // namespace

AffineParams sample_affine(const GenConfig& cfg, Rng& rng) {
  require_range("rotation", cfg.rotation);
  require_range("scaling", cfg.scaling);
  require_range("shearing", cfg.shearing);
  require_range("translation", cfg.translation);
  AffineParams p;
  for (auto& v : p.rotations_deg) v = uniform(rng, cfg.rotation.lo, cfg.rotation.hi);
  for (auto& v : p.scalings) v = uniform(rng, cfg.scaling.lo, cfg.scaling.hi);
  for (auto& v : p.shears) v = uniform(rng, cfg.shearing.lo, cfg.shearing.hi);
  for (auto& v : p.translations) v = uniform(rng, cfg.translation.lo, cfg.translation.hi);
  return p;
}

Matrix4 affine_matrix(const AffineParams& p, Dims dims) {
  if (p == AffineParams{}) return Matrix4::identity();

  const double cx = 0.5 * (dims.nx - 1), cy = 0.5 * (dims.ny - 1), cz = 0.5 * (dims.nz - 1);
  const double deg = std::numbers::pi / 180.0;
  const double ax = p.rotations_deg[0] * deg, ay = p.rotations_deg[1] * deg, az = p.rotations_deg[2] * deg;

  Matrix4 rx, ry, rz, shear, scale;
  rx(1, 1) = std::cos(ax);
  rx(1, 2) = -std::sin(ax);
  rx(2, 1) = std::sin(ax);
  rx(2, 2) = std::cos(ax);
  ry(0, 0) = std::cos(ay);
  ry(0, 2) = std::sin(ay);
  ry(2, 0) = -std::sin(ay);
  ry(2, 2) = std::cos(ay);
  rz(0, 0) = std::cos(az);
  rz(0, 1) = -std::sin(az);
  rz(1, 0) = std::sin(az);
  rz(1, 1) = std::cos(az);
  shear(0, 1) = p.shears[0];
  shear(0, 2) = p.shears[1];
  shear(1, 2) = p.shears[2];
  scale(0, 0) = p.scalings[0];
  scale(1, 1) = p.scalings[1];
  scale(2, 2) = p.scalings[2];

  const Matrix4 t = Matrix4::translation(p.translations[0], p.translations[1], p.translations[2]);
  return Matrix4::translation(cx, cy, cz) * t * rz * ry * rx * shear * scale * Matrix4::translation(-cx, -cy, -cz);
}

VectorField sample_svf_grid(const GenConfig& cfg, Rng& rng) {
  if (cfg.svf_grid < 2) throw ParameterError("svf grid size must be >= 2");
  const Dims d{cfg.svf_grid, cfg.svf_grid, cfg.svf_grid};
  VectorField g(d);
  for (auto& c : g.comp)
    for (float& v : c.data()) v = static_cast<float>(normal(rng, 0.0, cfg.sigma_svf));
  return g;
}

VectorField sample_svf(const GenConfig& cfg, Dims dims, Rng& rng) {
  return upscale_trilinear(sample_svf_grid(cfg, rng), dims);
}

int squaring_steps(const VectorField& svf) {
  double vmax = 0;
  for (const auto& c : svf.comp)
    for (float v : c.data()) vmax = std::max(vmax, static_cast<double>(std::fabs(v)));
  if (vmax <= 0) return 4;
  const int n = static_cast<int>(std::ceil(std::log2(vmax / 0.5)));
  return std::clamp(n, 4, 8);
}

DeformField integrate_svf(const VectorField& svf, std::optional<int> steps) {
  const Dims d = svf.dims();
  const int n = steps.value_or(squaring_steps(svf));
  const float scale = std::ldexp(1.f, -n);

  VectorField u(d), next(d);
  for (int a = 0; a < 3; ++a) {
    auto src = svf.comp[a].data();
    auto dst = u.comp[a].data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = src[i] * scale;
  }

  const auto& k = kernels::active();
  const std::size_t nx = d.nx;
  std::vector<float> px(nx), py(nx), pz(nx), sx(nx), sy(nx), sz(nx);
  for (int s = 0; s < n; ++s) {
    const auto g0 = view(u.comp[0]), g1 = view(u.comp[1]), g2 = view(u.comp[2]);
    for (int z = 0; z < d.nz; ++z)
      for (int y = 0; y < d.ny; ++y) {
        const std::size_t row = d.index(0, y, z);
        const float* ux = g0.data + row;
        const float* uy = g1.data + row;
        const float* uz = g2.data + row;
        for (std::size_t x = 0; x < nx; ++x) {
          px[x] = static_cast<float>(x) + ux[x];
          py[x] = static_cast<float>(y) + uy[x];
          pz[x] = static_cast<float>(z) + uz[x];
        }
        k.trilinear3(g0, g1, g2, px.data(), py.data(), pz.data(), nx, sx.data(), sy.data(), sz.data());
        float* ox = next.comp[0].data().data() + row;
        float* oy = next.comp[1].data().data() + row;
        float* oz = next.comp[2].data().data() + row;
        for (std::size_t x = 0; x < nx; ++x) {
          ox[x] = ux[x] + sx[x];
          oy[x] = uy[x] + sy[x];
          oz[x] = uz[x] + sz[x];
        }
      }
    std::swap(u, next);
  }

  DeformField phi = DeformField::identity(d);
  for (int a = 0; a < 3; ++a) {
    auto c = phi.coord.comp[a].data();
    auto disp = u.comp[a].data();
    for (std::size_t i = 0; i < c.size(); ++i) c[i] += disp[i];
  }
  return phi;
}

DeformField compose(const Matrix4& aff, const DeformField& phi_v) {
  if (aff == Matrix4::identity()) return phi_v;
  DeformField out{VectorField(phi_v.dims())};
  const auto cx = phi_v.coord.comp[0].data(), cy = phi_v.coord.comp[1].data(), cz = phi_v.coord.comp[2].data();
  auto ox = out.coord.comp[0].data(), oy = out.coord.comp[1].data(), oz = out.coord.comp[2].data();
  for (std::size_t i = 0; i < cx.size(); ++i) {
    const Point3 p = aff.apply({cx[i], cy[i], cz[i]});
    ox[i] = static_cast<float>(p.x);
    oy[i] = static_cast<float>(p.y);
    oz[i] = static_cast<float>(p.z);
  }
  return out;
}

LabelMap warp_labels(const LabelMap& s, const DeformField& phi) {
  require_same_dims(s.dims(), phi.dims(), "warp_labels");
  const Dims& d = phi.dims();
  LabelMap out(d, 0, s.spacing());
  const auto cx = phi.coord.comp[0].data(), cy = phi.coord.comp[1].data(), cz = phi.coord.comp[2].data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = nearest_sample(s, {cx[i], cy[i], cz[i]});
  return out;
}

Volume warp_volume(const Volume& v, const DeformField& phi) {
  require_same_dims(v.dims(), phi.dims(), "warp_volume");
  Volume out(phi.dims(), 0.f, v.spacing());
  kernels::active().trilinear(view(v), phi.coord.comp[0].data().data(), phi.coord.comp[1].data().data(),
                              phi.coord.comp[2].data().data(), out.size(), out.data().data());
  return out;
}

}  // namespace synthmr
