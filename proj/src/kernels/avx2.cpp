// AVX2 + FMA kernels. Compiled with -mavx2 -mfma; only reached after the
// dispatcher has confirmed CPU support.

#include <immintrin.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "impl.hpp"

namespace synthmr::kernels::detail {
namespace {

// ---------------------------------------------------------------------------
// Elementary functions. Cephes-style range reduction with polynomial cores.

// expf: |rel err| ~ 1 ulp on [-87, 88].
inline __m256 exp_ps(__m256 x) {
  const __m256 hi = _mm256_set1_ps(88.3762626647949f);
  const __m256 lo = _mm256_set1_ps(-87.3365447504019f);
  const __m256 underflow = _mm256_cmp_ps(x, lo, _CMP_LT_OQ);
  x = _mm256_max_ps(_mm256_min_ps(x, hi), lo);

  __m256 n = _mm256_round_ps(_mm256_mul_ps(x, _mm256_set1_ps(1.44269504088896341f)),
                             _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
  __m256 r = _mm256_fnmadd_ps(n, _mm256_set1_ps(0.693359375f), x);
  r = _mm256_fnmadd_ps(n, _mm256_set1_ps(-2.12194440e-4f), r);

  __m256 p = _mm256_set1_ps(1.9875691500E-4f);
  p = _mm256_fmadd_ps(p, r, _mm256_set1_ps(1.3981999507E-3f));
  p = _mm256_fmadd_ps(p, r, _mm256_set1_ps(8.3334519073E-3f));
  p = _mm256_fmadd_ps(p, r, _mm256_set1_ps(4.1665795894E-2f));
  p = _mm256_fmadd_ps(p, r, _mm256_set1_ps(1.6666665459E-1f));
  p = _mm256_fmadd_ps(p, r, _mm256_set1_ps(5.0000001201E-1f));
  const __m256 r2 = _mm256_mul_ps(r, r);
  p = _mm256_fmadd_ps(p, r2, _mm256_add_ps(r, _mm256_set1_ps(1.f)));

  __m256i e = _mm256_add_epi32(_mm256_cvtps_epi32(n), _mm256_set1_epi32(127));
  e = _mm256_slli_epi32(e, 23);
  const __m256 res = _mm256_mul_ps(p, _mm256_castsi256_ps(e));
  return _mm256_andnot_ps(underflow, res);
}

// logf for positive normal inputs.
inline __m256 log_ps(__m256 x) {
  x = _mm256_max_ps(x, _mm256_castsi256_ps(_mm256_set1_epi32(0x00800000)));
  __m256i bits = _mm256_castps_si256(x);
  __m256i ei = _mm256_sub_epi32(_mm256_srli_epi32(bits, 23), _mm256_set1_epi32(126));
  x = _mm256_castsi256_ps(
      _mm256_or_si256(_mm256_and_si256(bits, _mm256_set1_epi32(0x007fffff)), _mm256_set1_epi32(0x3f000000)));
  __m256 e = _mm256_cvtepi32_ps(ei);

  const __m256 small = _mm256_cmp_ps(x, _mm256_set1_ps(0.707106781186547524f), _CMP_LT_OQ);
  const __m256 one = _mm256_set1_ps(1.f);
  e = _mm256_sub_ps(e, _mm256_and_ps(one, small));
  x = _mm256_sub_ps(_mm256_add_ps(x, _mm256_and_ps(x, small)), one);

  __m256 p = _mm256_set1_ps(7.0376836292E-2f);
  p = _mm256_fmadd_ps(p, x, _mm256_set1_ps(-1.1514610310E-1f));
  p = _mm256_fmadd_ps(p, x, _mm256_set1_ps(1.1676998740E-1f));
  p = _mm256_fmadd_ps(p, x, _mm256_set1_ps(-1.2420140846E-1f));
  p = _mm256_fmadd_ps(p, x, _mm256_set1_ps(1.4249322787E-1f));
  p = _mm256_fmadd_ps(p, x, _mm256_set1_ps(-1.6668057665E-1f));
  p = _mm256_fmadd_ps(p, x, _mm256_set1_ps(2.0000714765E-1f));
  p = _mm256_fmadd_ps(p, x, _mm256_set1_ps(-2.4999993993E-1f));
  p = _mm256_fmadd_ps(p, x, _mm256_set1_ps(3.3333331174E-1f));
  const __m256 z = _mm256_mul_ps(x, x);
  __m256 y = _mm256_mul_ps(_mm256_mul_ps(p, x), z);
  y = _mm256_fmadd_ps(e, _mm256_set1_ps(-2.12194440e-4f), y);
  y = _mm256_fnmadd_ps(z, _mm256_set1_ps(0.5f), y);
  x = _mm256_add_ps(x, y);
  return _mm256_fmadd_ps(e, _mm256_set1_ps(0.693359375f), x);
}

// exp for doubles; exact zero below -708 so zero priors stay zero.
inline __m256d exp_pd(__m256d x) {
  const __m256d lo = _mm256_set1_pd(-708.0);
  const __m256d underflow = _mm256_cmp_pd(x, lo, _CMP_LT_OQ);
  x = _mm256_max_pd(_mm256_min_pd(x, _mm256_set1_pd(709.0)), lo);

  const __m256d n = _mm256_round_pd(_mm256_mul_pd(x, _mm256_set1_pd(1.4426950408889634074)),
                                    _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
  __m256d r = _mm256_fnmadd_pd(n, _mm256_set1_pd(6.93145751953125E-1), x);
  r = _mm256_fnmadd_pd(n, _mm256_set1_pd(1.42860682030941723212E-6), r);

  // Taylor series to degree 13; |r| <= ln2/2 keeps the truncation below 1e-17.
  __m256d p = _mm256_set1_pd(1.0 / 6227020800.0);
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 479001600.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 39916800.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 3628800.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 362880.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 40320.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 5040.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 720.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 120.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 24.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 6.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(0.5));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0));

  __m256i e = _mm256_cvtepi32_epi64(_mm256_cvtpd_epi32(n));
  e = _mm256_slli_epi64(_mm256_add_epi64(e, _mm256_set1_epi64x(1023)), 52);
  const __m256d res = _mm256_mul_pd(p, _mm256_castsi256_pd(e));
  return _mm256_andnot_pd(underflow, res);
}

// log for positive normal doubles.
inline __m256d log_pd(__m256d x) {
  const __m256i bits = _mm256_castpd_si256(x);
  // Exponent field (< 2^11) converted through the 2^52 magic constant.
  const __m256i ebits = _mm256_srli_epi64(bits, 52);
  const __m256d magic = _mm256_set1_pd(4503599627370496.0);
  __m256d e = _mm256_sub_pd(_mm256_castsi256_pd(_mm256_or_si256(ebits, _mm256_castpd_si256(magic))), magic);
  e = _mm256_sub_pd(e, _mm256_set1_pd(1023.0));

  __m256d m = _mm256_castsi256_pd(_mm256_or_si256(_mm256_and_si256(bits, _mm256_set1_epi64x(0x000fffffffffffffLL)),
                                                  _mm256_set1_epi64x(0x3ff0000000000000LL)));
  const __m256d big = _mm256_cmp_pd(m, _mm256_set1_pd(1.4142135623730951), _CMP_GT_OQ);
  m = _mm256_blendv_pd(m, _mm256_mul_pd(m, _mm256_set1_pd(0.5)), big);
  e = _mm256_add_pd(e, _mm256_and_pd(big, _mm256_set1_pd(1.0)));

  const __m256d one = _mm256_set1_pd(1.0);
  const __m256d t = _mm256_div_pd(_mm256_sub_pd(m, one), _mm256_add_pd(m, one));
  const __m256d t2 = _mm256_mul_pd(t, t);
  __m256d p = _mm256_set1_pd(1.0 / 23.0);
  for (int d = 21; d >= 1; d -= 2) p = _mm256_fmadd_pd(p, t2, _mm256_set1_pd(1.0 / d));
  const __m256d logm = _mm256_mul_pd(_mm256_add_pd(t, t), p);
  return _mm256_fmadd_pd(e, _mm256_set1_pd(6.93147180369123816490e-01),
                         _mm256_fmadd_pd(e, _mm256_set1_pd(1.90821492927058770002e-10), logm));
}

inline double hsum_pd(__m256d v) {
  __m128d s = _mm_add_pd(_mm256_castpd256_pd128(v), _mm256_extractf128_pd(v, 1));
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

// ---------------------------------------------------------------------------
// Trilinear gather.

struct AxisVec {
  __m256i i0, i1;
  __m256 f;
};

inline AxisVec axis_corner(__m256 p, int n) {
  const __m256 top = _mm256_set1_ps(static_cast<float>(n - 1));
  p = _mm256_max_ps(_mm256_min_ps(p, top), _mm256_setzero_ps());
  __m256i i0 = _mm256_cvttps_epi32(_mm256_floor_ps(p));
  const __m256i i1 = _mm256_min_epi32(_mm256_add_epi32(i0, _mm256_set1_epi32(1)), _mm256_set1_epi32(n - 1));
  return {i0, i1, _mm256_sub_ps(p, _mm256_cvtepi32_ps(i0))};
}

struct StencilVec {
  __m256i o[8];
  __m256 fx, fy, fz;
};

inline StencilVec stencil(const GridView& g, __m256 x, __m256 y, __m256 z) {
  const AxisVec cx = axis_corner(x, g.nx);
  const AxisVec cy = axis_corner(y, g.ny);
  const AxisVec cz = axis_corner(z, g.nz);
  const __m256i sx = _mm256_set1_epi32(g.nx);
  const __m256i sxy = _mm256_set1_epi32(g.nx * g.ny);
  const __m256i y0 = _mm256_mullo_epi32(cy.i0, sx), y1 = _mm256_mullo_epi32(cy.i1, sx);
  const __m256i z0 = _mm256_mullo_epi32(cz.i0, sxy), z1 = _mm256_mullo_epi32(cz.i1, sxy);
  const __m256i a00 = _mm256_add_epi32(y0, z0), a10 = _mm256_add_epi32(y1, z0);
  const __m256i a01 = _mm256_add_epi32(y0, z1), a11 = _mm256_add_epi32(y1, z1);
  StencilVec s;
  s.o[0] = _mm256_add_epi32(cx.i0, a00);
  s.o[1] = _mm256_add_epi32(cx.i1, a00);
  s.o[2] = _mm256_add_epi32(cx.i0, a10);
  s.o[3] = _mm256_add_epi32(cx.i1, a10);
  s.o[4] = _mm256_add_epi32(cx.i0, a01);
  s.o[5] = _mm256_add_epi32(cx.i1, a01);
  s.o[6] = _mm256_add_epi32(cx.i0, a11);
  s.o[7] = _mm256_add_epi32(cx.i1, a11);
  s.fx = cx.f;
  s.fy = cy.f;
  s.fz = cz.f;
  return s;
}

inline __m256 lerp(__m256 a, __m256 b, __m256 t) { return _mm256_fmadd_ps(t, _mm256_sub_ps(b, a), a); }

inline __m256 blend(const float* d, const StencilVec& s) {
  __m256 v[8];
  for (int c = 0; c < 8; ++c) v[c] = _mm256_i32gather_ps(d, s.o[c], 4);
  const __m256 c00 = lerp(v[0], v[1], s.fx);
  const __m256 c10 = lerp(v[2], v[3], s.fx);
  const __m256 c01 = lerp(v[4], v[5], s.fx);
  const __m256 c11 = lerp(v[6], v[7], s.fx);
  return lerp(lerp(c00, c10, s.fy), lerp(c01, c11, s.fy), s.fz);
}

void trilinear(const GridView& g, const float* px, const float* py, const float* pz, std::size_t n, float* out) {
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const StencilVec s = stencil(g, _mm256_loadu_ps(px + i), _mm256_loadu_ps(py + i), _mm256_loadu_ps(pz + i));
    _mm256_storeu_ps(out + i, blend(g.data, s));
  }
  if (i < n) scalar_table().trilinear(g, px + i, py + i, pz + i, n - i, out + i);
}

void trilinear3(const GridView& g0, const GridView& g1, const GridView& g2, const float* px, const float* py,
                const float* pz, std::size_t n, float* out0, float* out1, float* out2) {
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const StencilVec s = stencil(g0, _mm256_loadu_ps(px + i), _mm256_loadu_ps(py + i), _mm256_loadu_ps(pz + i));
    _mm256_storeu_ps(out0 + i, blend(g0.data, s));
    _mm256_storeu_ps(out1 + i, blend(g1.data, s));
    _mm256_storeu_ps(out2 + i, blend(g2.data, s));
  }
  if (i < n) scalar_table().trilinear3(g0, g1, g2, px + i, py + i, pz + i, n - i, out0 + i, out1 + i, out2 + i);
}

// ---------------------------------------------------------------------------
// Separable blur.

void convolve_line(const float* in, std::size_t n, const float* taps, int radius, float* out) {
  const long len = static_cast<long>(n);
  const long r = radius;
  auto scalar_at = [&](long i) {
    const float c = in[i];
    float acc = 0.f;
    for (int t = 1; t <= radius; ++t)
      acc += taps[t - 1] * ((in[reflect_index(i - t, len)] - c) + (in[reflect_index(i + t, len)] - c));
    out[i] = c + acc;
  };
  if (len < 2 * r + 8) {
    for (long i = 0; i < len; ++i) scalar_at(i);
    return;
  }
  for (long i = 0; i < r; ++i) scalar_at(i);
  long i = r;
  for (; i + 8 <= len - r; i += 8) {
    const __m256 c = _mm256_loadu_ps(in + i);
    __m256 acc = _mm256_setzero_ps();
    for (int t = 1; t <= radius; ++t) {
      const __m256 d = _mm256_add_ps(_mm256_sub_ps(_mm256_loadu_ps(in + i - t), c),
                                     _mm256_sub_ps(_mm256_loadu_ps(in + i + t), c));
      acc = _mm256_fmadd_ps(_mm256_set1_ps(taps[t - 1]), d, acc);
    }
    _mm256_storeu_ps(out + i, _mm256_add_ps(c, acc));
  }
  for (; i < len; ++i) scalar_at(i);
}

void convolve_rows(const float* const* rows, std::size_t n, const float* taps, int radius, float* out) {
  const float* center = rows[radius];
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 c = _mm256_loadu_ps(center + i);
    __m256 acc = _mm256_setzero_ps();
    for (int t = 1; t <= radius; ++t) {
      const __m256 d = _mm256_add_ps(_mm256_sub_ps(_mm256_loadu_ps(rows[radius - t] + i), c),
                                     _mm256_sub_ps(_mm256_loadu_ps(rows[radius + t] + i), c));
      acc = _mm256_fmadd_ps(_mm256_set1_ps(taps[t - 1]), d, acc);
    }
    _mm256_storeu_ps(out + i, _mm256_add_ps(c, acc));
  }
  for (; i < n; ++i) {
    const float c = center[i];
    float acc = 0.f;
    for (int t = 1; t <= radius; ++t) acc += taps[t - 1] * ((rows[radius - t][i] - c) + (rows[radius + t][i] - c));
    out[i] = c + acc;
  }
}

// ---------------------------------------------------------------------------
// Pointwise.

void multiply(const float* a, const float* b, std::size_t n, float* out) {
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(out + i, _mm256_mul_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
  for (; i < n; ++i) out[i] = a[i] * b[i];
}

void exp_inplace(float* v, std::size_t n) {
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) _mm256_storeu_ps(v + i, exp_ps(_mm256_loadu_ps(v + i)));
  for (; i < n; ++i) v[i] = std::exp(v[i]);
}

void minmax(const float* v, std::size_t n, float* lo, float* hi) {
  __m256 a = _mm256_set1_ps(std::numeric_limits<float>::infinity());
  __m256 b = _mm256_set1_ps(-std::numeric_limits<float>::infinity());
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 x = _mm256_loadu_ps(v + i);
    a = _mm256_min_ps(a, x);
    b = _mm256_max_ps(b, x);
  }
  alignas(32) float la[8], lb[8];
  _mm256_store_ps(la, a);
  _mm256_store_ps(lb, b);
  float mn = la[0], mx = lb[0];
  for (int k = 1; k < 8; ++k) {
    mn = std::min(mn, la[k]);
    mx = std::max(mx, lb[k]);
  }
  for (; i < n; ++i) {
    mn = std::min(mn, v[i]);
    mx = std::max(mx, v[i]);
  }
  *lo = mn;
  *hi = mx;
}

void normalize_pow(const float* in, std::size_t n, float lo, float inv_range, float exponent, float* out) {
  const bool linear = exponent == 1.f;
  const __m256 vlo = _mm256_set1_ps(lo), vinv = _mm256_set1_ps(inv_range), vexp = _mm256_set1_ps(exponent);
  const __m256 zero = _mm256_setzero_ps(), one = _mm256_set1_ps(1.f);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256 t = _mm256_mul_ps(_mm256_sub_ps(_mm256_loadu_ps(in + i), vlo), vinv);
    t = _mm256_min_ps(one, _mm256_max_ps(zero, t));
    if (!linear) {
      const __m256 positive = _mm256_cmp_ps(t, zero, _CMP_GT_OQ);
      const __m256 p = exp_ps(_mm256_mul_ps(vexp, log_ps(t)));
      t = _mm256_min_ps(one, _mm256_and_ps(positive, p));
    }
    _mm256_storeu_ps(out + i, t);
  }
  if (i < n) scalar_table().normalize_pow(in + i, n - i, lo, inv_range, exponent, out + i);
}

// ---------------------------------------------------------------------------
// EM expectation step, four voxels per iteration.

double gmm_estep(const double* y, const double* log_prior, std::size_t n, int k, const double* mean,
                 const double* inv_sigma, const double* log_norm, double* post) {
  __m256d ll = _mm256_setzero_pd();
  const __m256d half = _mm256_set1_pd(0.5);
  std::size_t j = 0;
  for (; j + 4 <= n; j += 4) {
    const __m256d yv = _mm256_loadu_pd(y + j);
    __m256d m = _mm256_set1_pd(-std::numeric_limits<double>::infinity());
    for (int c = 0; c < k; ++c) {
      const __m256d z = _mm256_mul_pd(_mm256_sub_pd(yv, _mm256_set1_pd(mean[c])), _mm256_set1_pd(inv_sigma[c]));
      const __m256d a = _mm256_fnmadd_pd(_mm256_mul_pd(half, z), z,
                                         _mm256_add_pd(_mm256_loadu_pd(log_prior + c * n + j),
                                                       _mm256_set1_pd(log_norm[c])));
      _mm256_storeu_pd(post + c * n + j, a);
      m = _mm256_max_pd(m, a);
    }
    __m256d s = _mm256_setzero_pd();
    for (int c = 0; c < k; ++c) {
      const __m256d e = exp_pd(_mm256_sub_pd(_mm256_loadu_pd(post + c * n + j), m));
      _mm256_storeu_pd(post + c * n + j, e);
      s = _mm256_add_pd(s, e);
    }
    const __m256d inv = _mm256_div_pd(_mm256_set1_pd(1.0), s);
    for (int c = 0; c < k; ++c)
      _mm256_storeu_pd(post + c * n + j, _mm256_mul_pd(_mm256_loadu_pd(post + c * n + j), inv));
    ll = _mm256_add_pd(ll, _mm256_add_pd(m, log_pd(s)));
  }
  double total = hsum_pd(ll);
  for (; j < n; ++j) {
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
    for (int c = 0; c < k; ++c) post[c * n + j] /= s;
    total += m + std::log(s);
  }
  return total;
}

}  // namespace

const KernelTable* avx2_table() {
  static const KernelTable t{trilinear, trilinear3, convolve_line, convolve_rows, multiply,
                             exp_inplace, minmax,     normalize_pow, gmm_estep};
  return &t;
}

}  // namespace synthmr::kernels::detail
