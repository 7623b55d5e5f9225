#pragma once

// Intensity synthesis: GMM sampling, partial-volume blur, multiplicative bias
// field, gamma augmentation with min-max normalization, skull stripping.

#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "synthmr/gen_config.hpp"
#include "synthmr/rng.hpp"
#include "synthmr/volume.hpp"

namespace synthmr {

struct Gaussian {
  double mean = 0;
  double stddev = 0;
  friend bool operator==(const Gaussian&, const Gaussian&) = default;
};

// Per-label intensity Gaussians, keyed by label id.
using GmmParams = std::map<Label, Gaussian>;

// Independent U(mu) x U(sigma) draw per label, in the order given.
GmmParams sample_gmm_params(std::span<const Label> labels, const GenConfig& cfg, Rng& rng);

// Picks one contrast uniformly, then draws each label's mean and standard
// deviation from its Gaussian hyperprior (standard deviations clamped at 0).
std::pair<std::string, GmmParams> sample_gmm_params_rule(std::span<const ContrastHyperprior> contrasts, Rng& rng);

// G_j ~ N(mu_{L_j}, sigma_{L_j}), voxels visited in storage order.
Volume sample_gmm_image(const LabelMap& labels, const GmmParams& gmm, Rng& rng);

// Normalized discrete Gaussian on offsets -r..r, r = max(1, ceil(3 sigma)).
std::vector<double> gaussian_kernel(double sigma);

// Separable Gaussian blur with half-sample-symmetric padding. sigma == 0 is
// the identity. Output stays within the input's [min, max].
Volume gaussian_blur(const Volume& v, double sigma);

// c_B^3 log-domain coefficients, i.i.d. N(0, sigma_b^2).
Volume sample_bias_grid(const GenConfig& cfg, Rng& rng);

// exp(upscale(grid)): strictly positive multiplicative field.
Volume bias_from_grid(const Volume& grid, Dims dims);

Volume sample_bias(const GenConfig& cfg, Dims dims, Rng& rng);

Volume apply_bias(const Volume& v, const Volume& bias);

// Min-max rescale to [0, 1] followed by t -> t^(e^gamma). Constant input maps
// to zeros.
Volume gamma_normalize(const Volume& v, double gamma);

LabelMap strip_labels(const LabelMap& l, std::span<const Label> extracerebral);

struct StripResult {
  LabelMap labels;
  bool stripped = false;
};

// With probability p_strip replaces every extracerebral label by 0.
StripResult strip_extracerebral(const LabelMap& l, std::span<const Label> extracerebral, Rng& rng,
                                double p_strip = 0.2);

}  // namespace synthmr
