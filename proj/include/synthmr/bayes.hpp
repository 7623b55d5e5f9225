#pragma once

// Classical Bayesian segmentation: a probabilistic atlas as the label prior,
// a per-label Gaussian likelihood fitted to the scan by EM, and an optional
// smooth log-domain bias field estimated by weighted least squares.

#include <array>
#include <optional>
#include <span>
#include <vector>

#include "synthmr/intensity.hpp"
#include "synthmr/volume.hpp"

namespace synthmr {

struct Atlas {
  Dims dims;
  std::vector<Label> labels;  // channel ordering, ascending
  std::vector<Volume> prob;   // one channel per label

  std::size_t channels() const { return prob.size(); }
};

// Throws DataError unless every channel matches dims, lies in [0, 1] and the
// channels sum to 1 within 1e-5 at every voxel.
void validate_atlas(const Atlas& a);

// Mean of one-hot encodings over the maps' label union, each channel blurred
// by `sigma`, floored at `floor` and renormalized voxelwise.
Atlas build_atlas(std::span<const LabelMap> maps, double sigma, double floor = 1e-6);

struct EmOptions {
  int max_iter = 50;
  double tol = 1e-6;
  bool bias = false;
  int bias_order = 3;
};

struct EmResult {
  LabelMap map_labels;
  std::vector<Volume> posteriors;  // atlas channel order
  // Gaussian parameters in the working domain: raw intensities without bias
  // correction, log(255 I + 1) with it.
  GmmParams fitted;
  std::optional<std::vector<double>> bias_log_coeffs;
  Volume bias_log;  // zero-mean log bias (bias on only)
  bool bias_singular = false;
  std::vector<double> ll_trace;
  bool converged = false;
};

EmResult em_segment(const Volume& img, const Atlas& atlas, const EmOptions& opts = {});

// Exponents (a, b, c) of the monomials x^a y^b z^c with a + b + c <= order,
// by total degree, then descending a, then descending b.
std::vector<std::array<int, 3>> bias_basis_terms(int order);

struct BiasFit {
  std::vector<double> coeffs;  // before zero-meaning
  Volume log_bias;             // zero-mean
  bool singular = false;
};

// Precision-weighted polynomial fit of the log-domain residual. Posterior
// channels pair with `fitted` entries in ascending label order.
BiasFit estimate_bias(const Volume& log_img, std::span<const Volume> posteriors, const GmmParams& fitted, int order);

// sum_j log sum_k A_jk N(I_j; mu_k, sigma_k^2), max-shifted in the log domain.
// Gaussians pair with atlas channels by label.
double log_likelihood(const Volume& img, const Atlas& atlas, const GmmParams& g);

}  // namespace synthmr
