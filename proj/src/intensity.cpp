#include "synthmr/intensity.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "kernels/impl.hpp"
#include "synthmr/kernels.hpp"

namespace synthmr {

namespace {

void require_same_dims(const Dims& a, const Dims& b, const char* what) {
  if (!(a == b)) throw DataError(std::string(what) + ": dims mismatch " + to_string(a) + " vs " + to_string(b));
}

}  // namespace

GmmParams sample_gmm_params(std::span<const Label> labels, const GenConfig& cfg, Rng& rng) {
  if (!(cfg.mu.lo <= cfg.mu.hi) || !(cfg.sigma.lo <= cfg.sigma.hi) || !(cfg.sigma.lo >= 0))
    throw ParameterError("invalid GMM ranges: need a_mu <= b_mu and 0 <= a_sigma <= b_sigma");
  GmmParams g;
  for (Label l : labels) {
    const double mean = uniform(rng, cfg.mu.lo, cfg.mu.hi);
    const double sd = uniform(rng, cfg.sigma.lo, cfg.sigma.hi);
    g[l] = {mean, sd};
  }
  return g;
}

std::pair<std::string, GmmParams> sample_gmm_params_rule(std::span<const ContrastHyperprior> contrasts, Rng& rng) {
  if (contrasts.empty()) throw ParameterError("no contrast hyperpriors registered");
  const auto pick = std::uniform_int_distribution<std::size_t>(0, contrasts.size() - 1)(rng);
  const ContrastHyperprior& c = contrasts[pick];
  GmmParams g;
  for (const auto& [label, h] : c.labels) {
    const double mean = normal(rng, h.mean_mu, h.std_mu);
    const double sd = std::max(0.0, normal(rng, h.mean_sigma, h.std_sigma));
    g[label] = {mean, sd};
  }
  return {c.name, std::move(g)};
}

Volume sample_gmm_image(const LabelMap& labels, const GmmParams& gmm, Rng& rng) {
  // Dense lookup keeps the per-voxel loop branch free.
  std::vector<Gaussian> lut(65536);
  std::vector<bool> known(65536, false);
  for (const auto& [l, g] : gmm) {
    lut[l] = g;
    known[l] = true;
  }
  for (Label l : labels.label_set())
    if (!known[l]) throw DataError("GMM parameters missing for label " + std::to_string(l));

  Volume out(labels.dims(), 0.f, labels.spacing());
  std::normal_distribution<double> unit(0.0, 1.0);
  for (std::size_t j = 0; j < out.size(); ++j) {
    const Gaussian& g = lut[labels[j]];
    out[j] = static_cast<float>(g.mean + g.stddev * unit(rng));
  }
  return out;
}

std::vector<double> gaussian_kernel(double sigma) {
  if (!(sigma >= 0)) throw ParameterError("blur sigma must be >= 0");
  if (sigma == 0) return {1.0};
  const int r = std::max(1, static_cast<int>(std::ceil(3 * sigma)));
  std::vector<double> w(2 * r + 1);
  double sum = 0;
  for (int t = -r; t <= r; ++t) sum += w[t + r] = std::exp(-0.5 * t * t / (sigma * sigma));
  for (double& x : w) x /= sum;
  return w;
}

Volume gaussian_blur(const Volume& v, double sigma) {
  if (!(sigma >= 0)) throw ParameterError("blur sigma must be >= 0");
  if (sigma == 0) return v;

  const std::vector<double> w = gaussian_kernel(sigma);
  const int r = static_cast<int>(w.size() / 2);
  std::vector<float> taps(r);
  for (int t = 1; t <= r; ++t) taps[t - 1] = static_cast<float>(w[r + t]);

  const auto& k = kernels::active();
  const Dims d = v.dims();
  const std::size_t nx = d.nx, plane = nx * d.ny;
  Volume a = v, b(d, 0.f, v.spacing());
  std::vector<const float*> rows(2 * r + 1);

  // x
  for (std::size_t row = 0; row < a.size(); row += nx)
    k.convolve_line(a.data().data() + row, nx, taps.data(), r, b.data().data() + row);
  // y
  for (int z = 0; z < d.nz; ++z)
    for (int y = 0; y < d.ny; ++y) {
      for (int t = -r; t <= r; ++t)
        rows[t + r] = b.data().data() + d.index(0, static_cast<int>(kernels::detail::reflect_index(y + t, d.ny)), z);
      k.convolve_rows(rows.data(), nx, taps.data(), r, a.data().data() + d.index(0, y, z));
    }
  // z, whole planes at once
  for (int z = 0; z < d.nz; ++z) {
    for (int t = -r; t <= r; ++t)
      rows[t + r] = a.data().data() + plane * kernels::detail::reflect_index(z + t, d.nz);
    k.convolve_rows(rows.data(), plane, taps.data(), r, b.data().data() + plane * z);
  }

  float lo = 0, hi = 0;
  k.minmax(v.data().data(), v.size(), &lo, &hi);
  for (float& x : b.data()) x = std::clamp(x, lo, hi);
  return b;
}

Volume sample_bias_grid(const GenConfig& cfg, Rng& rng) {
  if (cfg.bias_grid < 2) throw ParameterError("bias grid size must be >= 2");
  if (!(cfg.sigma_bias >= 0)) throw ParameterError("sigma_b must be >= 0");
  Volume g(Dims{cfg.bias_grid, cfg.bias_grid, cfg.bias_grid});
  for (float& x : g.data()) x = static_cast<float>(normal(rng, 0.0, cfg.sigma_bias));
  return g;
}

Volume bias_from_grid(const Volume& grid, Dims dims) {
  Volume b = upscale_trilinear(grid, dims);
  kernels::active().exp_inplace(b.data().data(), b.size());
  return b;
}

Volume sample_bias(const GenConfig& cfg, Dims dims, Rng& rng) { return bias_from_grid(sample_bias_grid(cfg, rng), dims); }

Volume apply_bias(const Volume& v, const Volume& bias) {
  require_same_dims(v.dims(), bias.dims(), "apply_bias");
  for (float b : bias.data())
    if (!(b > 0)) throw DataError("apply_bias: bias field must be strictly positive");
  Volume out(v.dims(), 0.f, v.spacing());
  kernels::active().multiply(v.data().data(), bias.data().data(), v.size(), out.data().data());
  return out;
}

Volume gamma_normalize(const Volume& v, double gamma) {
  const auto& k = kernels::active();
  float lo = 0, hi = 0;
  k.minmax(v.data().data(), v.size(), &lo, &hi);
  Volume out(v.dims(), 0.f, v.spacing());
  if (!(hi > lo)) return out;
  const float inv_range = static_cast<float>(1.0 / (static_cast<double>(hi) - lo));
  const float exponent = static_cast<float>(std::exp(gamma));
  k.normalize_pow(v.data().data(), v.size(), lo, inv_range, exponent, out.data().data());
  // Pin the extremes so the range is exactly [0, 1] regardless of rounding.
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (v[i] == lo) out[i] = 0.f;
    if (v[i] == hi) out[i] = 1.f;
  }
  return out;
}

LabelMap strip_labels(const LabelMap& l, std::span<const Label> extracerebral) {
  std::vector<bool> drop(65536, false);
  for (Label e : extracerebral) drop[e] = true;
  LabelMap out = l;
  for (Label& x : out.data())
    if (drop[x]) x = 0;
  return out;
}

StripResult strip_extracerebral(const LabelMap& l, std::span<const Label> extracerebral, Rng& rng, double p_strip) {
  if (!(p_strip >= 0 && p_strip <= 1)) throw ParameterError("p_strip must lie in [0, 1]");
  const bool strip = std::uniform_real_distribution<double>(0.0, 1.0)(rng) < p_strip;
  if (!strip) return {l, false};
  return {strip_labels(l, extracerebral), true};
}

}  // namespace synthmr
