#pragma once

// Inner-loop kernels used by the volume pipeline and the EM segmenter.
//
// Every kernel has a portable scalar reference implementation. On x86-64 an
// AVX2+FMA variant is compiled into a separate translation unit and selected at
// runtime when the CPU supports it. The two backends agree to within float
// rounding (see tests/test_kernels.cpp); a process always uses one backend for
// all calls, so results are reproducible run to run.
//
// The environment variable SYNTHMR_SIMD=scalar forces the reference backend.

#include <cstddef>
#include <optional>
#include <string_view>

namespace synthmr::kernels {

enum class Backend { scalar, avx2 };

std::string_view name(Backend b);

// Read-only view of an x-fastest float grid.
struct GridView {
  const float* data = nullptr;
  int nx = 0;
  int ny = 0;
  int nz = 0;
};

struct KernelTable {
  // out[i] = edge-clamped trilinear sample of g at (px[i], py[i], pz[i]).
  void (*trilinear)(const GridView& g, const float* px, const float* py, const float* pz, std::size_t n,
                    float* out);

  // Three grids of equal shape sampled at the same points (shares weights).
  void (*trilinear3)(const GridView& g0, const GridView& g1, const GridView& g2, const float* px,
                     const float* py, const float* pz, std::size_t n, float* out0, float* out1, float* out2);

  // 1D convolution of a contiguous line with a symmetric kernel of the given
  // radius, half-sample-symmetric boundary. `taps` holds weights for offsets
  // 1..radius; the center weight is implied (kernel sums to 1), and the line is
  // accumulated as in[i] + sum_t taps[t] * (in[i-t] + in[i+t] - 2 in[i]).
  void (*convolve_line)(const float* in, std::size_t n, const float* taps, int radius, float* out);

  // Same accumulation across whole rows: `rows` holds 2*radius+1 pointers,
  // rows[radius] being the center row.
  void (*convolve_rows)(const float* const* rows, std::size_t n, const float* taps, int radius, float* out);

  void (*multiply)(const float* a, const float* b, std::size_t n, float* out);
  void (*exp_inplace)(float* v, std::size_t n);
  void (*minmax)(const float* v, std::size_t n, float* lo, float* hi);

  // out[i] = ((in[i] - lo) * inv_range) ^ exponent, clamped into [0, 1].
  void (*normalize_pow)(const float* in, std::size_t n, float lo, float inv_range, float exponent, float* out);

  // EM expectation step over n voxels and k classes (double precision).
  // log_prior is k planes of n values (-inf allowed for zero prior).
  // Writes posteriors (k planes of n) and returns sum_j log sum_k exp(a_jk).
  double (*gmm_estep)(const double* y, const double* log_prior, std::size_t n, int k, const double* mean,
                      const double* inv_sigma, const double* log_norm, double* post);
};

bool supported(Backend b);
const KernelTable& table(Backend b);

// Backend used by the library. Chosen once on first use: AVX2 when supported
// and not overridden by SYNTHMR_SIMD=scalar.
Backend active_backend();
const KernelTable& active();

// Override the active backend (tests, benchmarks). Throws ParameterError when
// the backend is not available on this machine.
void set_backend(Backend b);

}  // namespace synthmr::kernels
