#include "synthmr/bayes.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "synthmr/error.hpp"
#include "synthmr/kernels.hpp"

namespace synthmr {

namespace {

constexpr double kLogScale = 255.0;

void require_dims(const Dims& image, const Dims& atlas) {
  if (!(image == atlas))
    throw DataError("image dims " + to_string(image) + " do not match atlas dims " + to_string(atlas));
}

double sigma_floor(std::span<const double> y) {
  const auto [lo, hi] = std::minmax_element(y.begin(), y.end());
  return std::max(1e-3 * (*hi - *lo), 1e-6);
}

std::vector<double> log_prior_planes(const Atlas& a) {
  const std::size_t n = a.dims.count();
  std::vector<double> lp(a.channels() * n);
  for (std::size_t k = 0; k < a.channels(); ++k)
    for (std::size_t j = 0; j < n; ++j) {
      const double p = a.prob[k][j];
      lp[k * n + j] = p > 0 ? std::log(p) : -std::numeric_limits<double>::infinity();
    }
  return lp;
}

struct Mixture {
  std::vector<double> mean, sigma;

  // Terms for the E-step kernel.
  void terms(std::vector<double>& inv_sigma, std::vector<double>& log_norm) const {
    const double half_log_2pi = 0.5 * std::log(2 * std::numbers::pi);
    inv_sigma.resize(mean.size());
    log_norm.resize(mean.size());
    for (std::size_t k = 0; k < mean.size(); ++k) {
      inv_sigma[k] = 1.0 / sigma[k];
      log_norm[k] = -std::log(sigma[k]) - half_log_2pi;
    }
  }
};

// x-hat powers per axis, evaluated on the normalized coordinate 2x/(n-1) - 1.
std::vector<std::vector<double>> axis_powers(int n, int order) {
  std::vector<std::vector<double>> p(order + 1, std::vector<double>(n, 1.0));
  for (int i = 0; i < n; ++i) {
    const double t = n > 1 ? 2.0 * i / (n - 1) - 1.0 : 0.0;
    for (int a = 1; a <= order; ++a) p[a][i] = p[a - 1][i] * t;
  }
  return p;
}

Eigen::MatrixXd basis_matrix(Dims d, int order) {
  const auto terms = bias_basis_terms(order);
  const auto px = axis_powers(d.nx, order), py = axis_powers(d.ny, order), pz = axis_powers(d.nz, order);
  Eigen::MatrixXd phi(static_cast<Eigen::Index>(d.count()), static_cast<Eigen::Index>(terms.size()));
  for (std::size_t t = 0; t < terms.size(); ++t) {
    const auto [a, b, c] = terms[t];
    Eigen::Index j = 0;
    for (int z = 0; z < d.nz; ++z)
      for (int y = 0; y < d.ny; ++y)
        for (int x = 0; x < d.nx; ++x) phi(j++, static_cast<Eigen::Index>(t)) = px[a][x] * py[b][y] * pz[c][z];
  }
  return phi;
}

struct RawBias {
  std::vector<double> coeffs;
  Eigen::VectorXd field;  // zero-mean
  bool singular = false;
};

RawBias fit_bias(const Eigen::MatrixXd& phi, const Eigen::VectorXd& resid, const Eigen::VectorXd& weight) {
  RawBias out;
  const Eigen::MatrixXd lhs = phi.transpose() * weight.asDiagonal() * phi;
  const Eigen::VectorXd rhs = phi.transpose() * weight.cwiseProduct(resid);
  const Eigen::LDLT<Eigen::MatrixXd> ldlt(lhs);
  const Eigen::VectorXd piv = ldlt.vectorD().cwiseAbs();
  if (ldlt.info() != Eigen::Success || !(piv.minCoeff() > 1e-12 * piv.maxCoeff())) {
    out.coeffs.assign(phi.cols(), 0.0);
    out.field = Eigen::VectorXd::Zero(phi.rows());
    out.singular = true;
    return out;
  }
  const Eigen::VectorXd c = ldlt.solve(rhs);
  out.coeffs.assign(c.data(), c.data() + c.size());
  out.field = phi * c;
  out.field.array() -= out.field.mean();
  return out;
}

// Precision-weighted residual of y against the class means.
void bias_residual(std::span<const double> y, std::span<const double> post, const Mixture& m, Eigen::VectorXd& resid,
                   Eigen::VectorXd& weight) {
  const std::size_t n = y.size(), K = m.mean.size();
  resid.resize(static_cast<Eigen::Index>(n));
  weight.resize(static_cast<Eigen::Index>(n));
  for (std::size_t j = 0; j < n; ++j) {
    double w = 0, r = 0;
    for (std::size_t k = 0; k < K; ++k) {
      const double p = post[k * n + j] / (m.sigma[k] * m.sigma[k]);
      w += p;
      r += p * (y[j] - m.mean[k]);
    }
    weight[static_cast<Eigen::Index>(j)] = w;
    resid[static_cast<Eigen::Index>(j)] = w > 0 ? r / w : 0.0;
  }
}

Mixture initial_mixture(std::span<const double> y, const Atlas& a, double floor) {
  const std::size_t n = y.size(), K = a.channels();
  Mixture m{std::vector<double>(K), std::vector<double>(K)};

  bool flat = true;
  for (const auto& ch : a.prob) {
    const auto [lo, hi] = std::minmax_element(ch.data().begin(), ch.data().end());
    flat = flat && (*hi - *lo) <= 1e-7f;
  }

  if (!flat) {
    for (std::size_t k = 0; k < K; ++k) {
      double s = 0, s1 = 0, s2 = 0;
      for (std::size_t j = 0; j < n; ++j) {
        const double p = a.prob[k][j];
        s += p;
        s1 += p * y[j];
      }
      const double mu = s > 0 ? s1 / s : 0.0;
      for (std::size_t j = 0; j < n; ++j) s2 += a.prob[k][j] * (y[j] - mu) * (y[j] - mu);
      m.mean[k] = mu;
      m.sigma[k] = std::max(s > 0 ? std::sqrt(s2 / s) : floor, floor);
    }
    return m;
  }

  // A spatially flat prior carries no information to break the symmetry
  // between classes. Seed class k from the k-th intensity quantile band, then
  // refine the bands with 1D k-means so that small classes are not swallowed
  // by a large neighbour.
  std::vector<double> sorted(y.begin(), y.end());
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> prefix(n + 1, 0.0);
  for (std::size_t j = 0; j < n; ++j) prefix[j + 1] = prefix[j] + sorted[j];

  std::vector<std::size_t> cut(K + 1);
  for (std::size_t k = 0; k <= K; ++k) cut[k] = k * n / K;
  auto band_mean = [&](std::size_t k) { return (prefix[cut[k + 1]] - prefix[cut[k]]) / double(cut[k + 1] - cut[k]); };
  for (std::size_t k = 0; k < K; ++k) m.mean[k] = cut[k + 1] > cut[k] ? band_mean(k) : sorted[std::min(cut[k], n - 1)];

  for (int it = 0; it < 100; ++it) {
    bool moved = false;
    for (std::size_t k = 1; k < K; ++k) {
      const double mid = 0.5 * (m.mean[k - 1] + m.mean[k]);
      const auto c = static_cast<std::size_t>(std::upper_bound(sorted.begin(), sorted.end(), mid) - sorted.begin());
      const std::size_t bounded = std::clamp(c, cut[k - 1], n);
      moved = moved || bounded != cut[k];
      cut[k] = bounded;
    }
    for (std::size_t k = 0; k < K; ++k)
      if (cut[k + 1] > cut[k]) m.mean[k] = band_mean(k);
    if (!moved) break;
  }

  for (std::size_t k = 0; k < K; ++k) {
    const std::size_t b = cut[k], e = cut[k + 1];
    double s2 = 0;
    for (std::size_t j = b; j < e; ++j) s2 += (sorted[j] - m.mean[k]) * (sorted[j] - m.mean[k]);
    m.sigma[k] = std::max(e > b ? std::sqrt(s2 / double(e - b)) : floor, floor);
  }
  return m;
}

}  // namespace

void validate_atlas(const Atlas& a) {
  if (a.prob.empty()) throw DataError("atlas has no channels");
  if (a.labels.size() != a.prob.size())
    throw DataError("atlas channel count mismatch: " + std::to_string(a.prob.size()) + " channels, " +
                    std::to_string(a.labels.size()) + " labels");
  for (const auto& ch : a.prob)
    if (!(ch.dims() == a.dims)) throw DataError("atlas channel dims " + to_string(ch.dims()) + " differ from " + to_string(a.dims));
  const std::size_t n = a.dims.count();
  for (std::size_t j = 0; j < n; ++j) {
    double s = 0;
    for (const auto& ch : a.prob) {
      const float p = ch[j];
      if (!(p >= 0.f && p <= 1.f)) throw DataError("atlas probability outside [0, 1]");
      s += p;
    }
    if (std::fabs(s - 1.0) > 1e-5) throw DataError("atlas channels do not sum to 1 at voxel " + std::to_string(j));
  }
}

Atlas build_atlas(std::span<const LabelMap> maps, double sigma, double floor) {
  if (maps.empty()) throw DataError("build_atlas needs at least one label map");
  if (!(floor >= 0)) throw ParameterError("atlas floor must be >= 0");
  const Dims d = maps.front().dims();
  std::vector<bool> seen(65536, false);
  for (const auto& m : maps) {
    if (!(m.dims() == d)) throw DataError("label map dims " + to_string(m.dims()) + " differ from " + to_string(d));
    for (Label l : m.data()) seen[l] = true;
  }

  Atlas a;
  a.dims = d;
  for (std::size_t l = 0; l < seen.size(); ++l)
    if (seen[l]) a.labels.push_back(static_cast<Label>(l));
  std::vector<int> slot(65536, -1);
  for (std::size_t k = 0; k < a.labels.size(); ++k) slot[a.labels[k]] = static_cast<int>(k);

  const std::size_t n = d.count(), K = a.labels.size();
  std::vector<double> acc(K * n, 0.0);
  for (const auto& m : maps)
    for (std::size_t j = 0; j < n; ++j) acc[slot[m[j]] * n + j] += 1.0;

  const double inv = 1.0 / static_cast<double>(maps.size());
  std::vector<Volume> ch;
  for (std::size_t k = 0; k < K; ++k) {
    Volume v(d, 0.f, maps.front().spacing());
    for (std::size_t j = 0; j < n; ++j) v[j] = static_cast<float>(acc[k * n + j] * inv);
    ch.push_back(gaussian_blur(v, sigma));
  }

  for (std::size_t j = 0; j < n; ++j) {
    double s = 0;
    for (std::size_t k = 0; k < K; ++k) s += acc[k * n + j] = ch[k][j] + floor;
    for (std::size_t k = 0; k < K; ++k) ch[k][j] = static_cast<float>(acc[k * n + j] / s);
  }
  a.prob = std::move(ch);
  return a;
}

std::vector<std::array<int, 3>> bias_basis_terms(int order) {
  if (order < 0 || order > 4) throw ParameterError("bias order must lie in 0..4");
  std::vector<std::array<int, 3>> t;
  for (int deg = 0; deg <= order; ++deg)
    for (int a = deg; a >= 0; --a)
      for (int b = deg - a; b >= 0; --b) t.push_back({a, b, deg - a - b});
  return t;
}

BiasFit estimate_bias(const Volume& log_img, std::span<const Volume> posteriors, const GmmParams& fitted, int order) {
  const auto terms = bias_basis_terms(order);
  if (posteriors.size() != fitted.size())
    throw DataError("estimate_bias: " + std::to_string(posteriors.size()) + " posterior channels for " +
                    std::to_string(fitted.size()) + " Gaussians");
  const Dims d = log_img.dims();
  const std::size_t n = d.count(), K = posteriors.size();
  Mixture m;
  for (const auto& [label, g] : fitted) {
    if (!(g.stddev > 0)) throw ParameterError("estimate_bias: standard deviations must be > 0");
    m.mean.push_back(g.mean);
    m.sigma.push_back(g.stddev);
  }
  std::vector<double> y(n), post(K * n);
  for (std::size_t j = 0; j < n; ++j) y[j] = log_img[j];
  for (std::size_t k = 0; k < K; ++k) {
    if (!(posteriors[k].dims() == d)) throw DataError("estimate_bias: posterior dims differ from image dims");
    for (std::size_t j = 0; j < n; ++j) post[k * n + j] = posteriors[k][j];
  }

  Eigen::VectorXd resid, weight;
  bias_residual(y, post, m, resid, weight);
  const RawBias rb = fit_bias(basis_matrix(d, order), resid, weight);
  BiasFit out{rb.coeffs, Volume(d, 0.f, log_img.spacing()), rb.singular};
  for (std::size_t j = 0; j < n; ++j) out.log_bias[j] = static_cast<float>(rb.field[static_cast<Eigen::Index>(j)]);
  return out;
}

double log_likelihood(const Volume& img, const Atlas& atlas, const GmmParams& g) {
  require_dims(img.dims(), atlas.dims);
  if (atlas.labels.size() != atlas.prob.size()) throw DataError("atlas channel count mismatch");
  const std::size_t n = img.size(), K = atlas.channels();
  std::vector<double> y(img.data().begin(), img.data().end());
  const double floor = sigma_floor(y);
  Mixture m;
  for (Label l : atlas.labels) {
    const auto it = g.find(l);
    if (it == g.end()) throw DataError("no Gaussian for atlas label " + std::to_string(l));
    m.mean.push_back(it->second.mean);
    m.sigma.push_back(std::max(it->second.stddev, floor));
  }
  std::vector<double> inv_sigma, log_norm, post(K * n);
  m.terms(inv_sigma, log_norm);
  const auto lp = log_prior_planes(atlas);
  return kernels::active().gmm_estep(y.data(), lp.data(), n, static_cast<int>(K), m.mean.data(), inv_sigma.data(),
                                     log_norm.data(), post.data());
}

EmResult em_segment(const Volume& img, const Atlas& atlas, const EmOptions& opts) {
  require_dims(img.dims(), atlas.dims);
  if (atlas.labels.size() != atlas.prob.size())
    throw DataError("atlas channel count mismatch: " + std::to_string(atlas.prob.size()) + " channels, " +
                    std::to_string(atlas.labels.size()) + " labels");
  if (!img.all_finite()) throw DataError("image contains non-finite values");
  if (opts.max_iter < 1) throw ParameterError("max_iter must be >= 1");
  if (!(opts.tol >= 0)) throw ParameterError("tol must be >= 0");

  const Dims d = img.dims();
  const std::size_t n = d.count(), K = atlas.channels();

  std::vector<double> y(n);
  for (std::size_t j = 0; j < n; ++j)
    y[j] = opts.bias ? std::log(std::max(static_cast<double>(img[j]), 0.0) * kLogScale + 1.0) : img[j];
  const double floor = sigma_floor(y);

  Mixture m = initial_mixture(y, atlas, floor);
  const auto lp = log_prior_planes(atlas);
  std::vector<double> post(K * n), inv_sigma, log_norm, corrected = y;

  Eigen::MatrixXd phi;
  RawBias bias;
  if (opts.bias) {
    phi = basis_matrix(d, opts.bias_order);
    bias.coeffs.assign(phi.cols(), 0.0);
    bias.field = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
  }

  EmResult r;
  const auto& k = kernels::active();
  for (int it = 0;; ++it) {
    m.terms(inv_sigma, log_norm);
    const double ll = k.gmm_estep(corrected.data(), lp.data(), n, static_cast<int>(K), m.mean.data(),
                                  inv_sigma.data(), log_norm.data(), post.data());
    if (!r.ll_trace.empty()) {
      const double prev = r.ll_trace.back();
      r.converged = std::fabs(ll - prev) <= opts.tol * std::max(std::fabs(prev), 1e-300);
    }
    r.ll_trace.push_back(ll);
    if (r.converged || it + 1 >= opts.max_iter) break;

    if (opts.bias) {
      Eigen::VectorXd resid, weight;
      bias_residual(y, post, m, resid, weight);
      bias = fit_bias(phi, resid, weight);
      for (std::size_t j = 0; j < n; ++j) corrected[j] = y[j] - bias.field[static_cast<Eigen::Index>(j)];
    }

    for (std::size_t c = 0; c < K; ++c) {
      const double* w = post.data() + c * n;
      double s = 0, s1 = 0;
      for (std::size_t j = 0; j < n; ++j) {
        s += w[j];
        s1 += w[j] * corrected[j];
      }
      if (!(s > 0)) continue;  // empty class keeps its parameters
      const double mu = s1 / s;
      double s2 = 0;
      for (std::size_t j = 0; j < n; ++j) s2 += w[j] * (corrected[j] - mu) * (corrected[j] - mu);
      m.mean[c] = mu;
      m.sigma[c] = std::max(std::sqrt(s2 / s), floor);
    }
  }

  r.map_labels = LabelMap(d, 0, img.spacing());
  for (std::size_t c = 0; c < K; ++c) {
    Volume p(d, 0.f, img.spacing());
    for (std::size_t j = 0; j < n; ++j) p[j] = static_cast<float>(post[c * n + j]);
    r.posteriors.push_back(std::move(p));
    r.fitted[atlas.labels[c]] = {m.mean[c], m.sigma[c]};
  }
  for (std::size_t j = 0; j < n; ++j) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < K; ++c)
      if (post[c * n + j] > post[best * n + j]) best = c;
    r.map_labels[j] = atlas.labels[best];
  }
  if (opts.bias) {
    r.bias_log_coeffs = bias.coeffs;
    r.bias_singular = bias.singular;
    r.bias_log = Volume(d, 0.f, img.spacing());
    for (std::size_t j = 0; j < n; ++j) r.bias_log[j] = static_cast<float>(bias.field[static_cast<Eigen::Index>(j)]);
  }
  return r;
}

}  // namespace synthmr
