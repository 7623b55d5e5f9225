// Reference kernels. These define the semantics; the SIMD variants are
// checked against them.

#include <algorithm>
#include <cmath>
#include <limits>

#include "impl.hpp"

namespace synthmr::kernels::detail {
namespace {

struct Corner {
  int i0, i1;
  float f;
};

inline Corner axis_corner(float p, int n) {
  p = std::fmax(0.f, std::fmin(p, static_cast<float>(n - 1)));
  // At p == n - 1 both corners are the last node, so t == 0 and the node
  // value comes back exactly.
  const int i0 = static_cast<int>(std::floor(p));
  return {i0, std::min(i0 + 1, n - 1), p - static_cast<float>(i0)};
}

inline float lerp(float a, float b, float t) { return a + t * (b - a); }

struct Stencil {
  std::size_t o[8];
  float fx, fy, fz;
};

inline Stencil stencil(const GridView& g, float x, float y, float z) {
  const Corner cx = axis_corner(x, g.nx);
  const Corner cy = axis_corner(y, g.ny);
  const Corner cz = axis_corner(z, g.nz);
  const std::size_t sx = static_cast<std::size_t>(g.nx);
  const std::size_t sxy = sx * static_cast<std::size_t>(g.ny);
  const std::size_t y0 = cy.i0 * sx, y1 = cy.i1 * sx, z0 = cz.i0 * sxy, z1 = cz.i1 * sxy;
  return {{cx.i0 + y0 + z0, cx.i1 + y0 + z0, cx.i0 + y1 + z0, cx.i1 + y1 + z0, cx.i0 + y0 + z1, cx.i1 + y0 + z1,
           cx.i0 + y1 + z1, cx.i1 + y1 + z1},
          cx.f,
          cy.f,
          cz.f};
}

inline float blend(const float* d, const Stencil& s) {
  const float c00 = lerp(d[s.o[0]], d[s.o[1]], s.fx);
  const float c10 = lerp(d[s.o[2]], d[s.o[3]], s.fx);
  const float c01 = lerp(d[s.o[4]], d[s.o[5]], s.fx);
  const float c11 = lerp(d[s.o[6]], d[s.o[7]], s.fx);
  return lerp(lerp(c00, c10, s.fy), lerp(c01, c11, s.fy), s.fz);
}

void trilinear(const GridView& g, const float* px, const float* py, const float* pz, std::size_t n, float* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = blend(g.data, stencil(g, px[i], py[i], pz[i]));
}

void trilinear3(const GridView& g0, const GridView& g1, const GridView& g2, const float* px, const float* py,
                const float* pz, std::size_t n, float* out0, float* out1, float* out2) {
  for (std::size_t i = 0; i < n; ++i) {
    const Stencil s = stencil(g0, px[i], py[i], pz[i]);
    out0[i] = blend(g0.data, s);
    out1[i] = blend(g1.data, s);
    out2[i] = blend(g2.data, s);
  }
}

void convolve_line(const float* in, std::size_t n, const float* taps, int radius, float* out) {
  const long len = static_cast<long>(n);
  for (long i = 0; i < len; ++i) {
    const float c = in[i];
    float acc = 0.f;
    for (int t = 1; t <= radius; ++t) {
      const float l = in[reflect_index(i - t, len)];
      const float r = in[reflect_index(i + t, len)];
      acc += taps[t - 1] * ((l - c) + (r - c));
    }
    out[i] = c + acc;
  }
}

void convolve_rows(const float* const* rows, std::size_t n, const float* taps, int radius, float* out) {
  const float* center = rows[radius];
  for (std::size_t i = 0; i < n; ++i) {
    const float c = center[i];
    float acc = 0.f;
    for (int t = 1; t <= radius; ++t) acc += taps[t - 1] * ((rows[radius - t][i] - c) + (rows[radius + t][i] - c));
    out[i] = c + acc;
  }
}

void multiply(const float* a, const float* b, std::size_t n, float* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

void exp_inplace(float* v, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) v[i] = std::exp(v[i]);
}

void minmax(const float* v, std::size_t n, float* lo, float* hi) {
  float a = std::numeric_limits<float>::infinity();
  float b = -a;
  for (std::size_t i = 0; i < n; ++i) {
    a = std::min(a, v[i]);
    b = std::max(b, v[i]);
  }
  *lo = a;
  *hi = b;
}

void normalize_pow(const float* in, std::size_t n, float lo, float inv_range, float exponent, float* out) {
  const bool linear = exponent == 1.f;
  for (std::size_t i = 0; i < n; ++i) {
    float t = std::fmin(1.f, std::fmax(0.f, (in[i] - lo) * inv_range));
    if (!linear) t = t > 0.f ? std::fmin(1.f, std::pow(t, exponent)) : 0.f;
    out[i] = t;
  }
}

double gmm_estep(const double* y, const double* log_prior, std::size_t n, int k, const double* mean,
                 const double* inv_sigma, const double* log_norm, double* post) {
  double ll = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    double m = -std::numeric_limits<double>::infinity();
    for (int c = 0; c < k; ++c) {
      const double z = (y[j] - mean[c]) * inv_sigma[c];
      const double a = log_prior[c * n + j] + log_norm[c] - 0.5 * z * z;
      post[c * n + j] = a;
      m = std::max(m, a);
    }
    double s = 0.0;
    for (int c = 0; c < k; ++c) {
      const double e = std::exp(post[c * n + j] - m);
      post[c * n + j] = e;
      s += e;
    }
    const double inv = 1.0 / s;
    for (int c = 0; c < k; ++c) post[c * n + j] *= inv;
    ll += m + std::log(s);
  }
  return ll;
}

}  // namespace

const KernelTable& scalar_table() {
  static const KernelTable t{trilinear, trilinear3, convolve_line, convolve_rows, multiply,
                             exp_inplace, minmax,     normalize_pow, gmm_estep};
  return t;
}

}  // namespace synthmr::kernels::detail
