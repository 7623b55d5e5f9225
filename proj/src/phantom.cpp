#include "synthmr/phantom.hpp"

#include <cmath>
#include <numbers>

#include "synthmr/error.hpp"
#include "synthmr/rng.hpp"

namespace synthmr {

std::vector<Label> phantom_extracerebral() { return {kPhantomScalp, kPhantomSkull, kPhantomCsf}; }

LabelMap make_phantom(Dims dims, std::uint64_t seed, const PhantomOptions& opts) {
  if (!dims.valid()) throw ParameterError("phantom dims must be positive");
  Rng rng(splitmix64(seed ^ 0x70686e74ull));
  std::uniform_real_distribution<double> phase(0, 2 * std::numbers::pi), amp(-1, 1);

  // Low-order angular perturbation of the shell radii.
  struct Wave {
    int fa, fb;
    double pa, pb, a;
  };
  std::vector<Wave> waves;
  for (int i = 0; i < 4; ++i) waves.push_back({1 + i % 3, 1 + (i + 1) % 3, phase(rng), phase(rng), amp(rng)});
  const double axes[3] = {0.80 + 0.05 * amp(rng), 0.92 + 0.04 * amp(rng), 0.85 + 0.05 * amp(rng)};
  const double shift = 0.04 * amp(rng);

  LabelMap m(dims);
  const double c[3] = {0.5 * (dims.nx - 1), 0.5 * (dims.ny - 1), 0.5 * (dims.nz - 1)};
  const double h[3] = {0.5 * dims.nx, 0.5 * dims.ny, 0.5 * dims.nz};

  auto ellipsoid = [](double x, double y, double z, double cx, double cy, double cz, double rx, double ry, double rz) {
    const double a = (x - cx) / rx, b = (y - cy) / ry, d = (z - cz) / rz;
    return a * a + b * b + d * d < 1.0;
  };

  for (int z = 0; z < dims.nz; ++z)
    for (int y = 0; y < dims.ny; ++y)
      for (int x = 0; x < dims.nx; ++x) {
        const double u = (x - c[0]) / h[0], v = (y - c[1]) / h[1], w = (z - c[2]) / h[2];
        const double r = std::sqrt(u * u / (axes[0] * axes[0]) + v * v / (axes[1] * axes[1]) + w * w / (axes[2] * axes[2]));
        const double theta = std::atan2(v, u), psi = std::atan2(w, std::hypot(u, v));
        double pert = 0;
        for (const auto& wv : waves) pert += wv.a * std::sin(wv.fa * theta + wv.pa) * std::cos(wv.fb * psi + wv.pb);
        const double rr = r * (1 + opts.jitter * pert / 2);

        Label l = 0;
        if (opts.simple) {
          if (rr < 0.95) l = kPhantomCsf;
          if (rr < 0.85) l = kPhantomGray;
          if (rr < 0.62) l = kPhantomWhite;
        } else {
          if (rr < 1.0) l = kPhantomScalp;
          if (rr < 0.92) l = kPhantomSkull;
          if (rr < 0.84) l = kPhantomCsf;
          if (rr < 0.78) l = kPhantomGray;
          if (rr < 0.58) l = kPhantomWhite;
          const double au = std::fabs(u);
          if (ellipsoid(au, v, w, 0.10, shift, 0.05, 0.07, 0.22, 0.10)) l = kPhantomVentricle;
          else if (ellipsoid(au, v, w, 0.14, shift - 0.12, -0.05, 0.08, 0.10, 0.08)) l = kPhantomThalamus;
          else if (ellipsoid(au, v, w, 0.30, shift + 0.08, 0.0, 0.06, 0.14, 0.10)) l = kPhantomPutamen;
        }
        m.at(x, y, z) = l;
      }
  return m;
}

}  // namespace synthmr
