#include <algorithm>
#include <cmath>
#include <set>

#include "doctest.h"
#include "synthmr/generator.hpp"
#include "synthmr/phantom.hpp"

using namespace synthmr;

namespace {

const Dims kDims{24, 24, 24};

std::vector<LabelMap> phantoms(int n, Dims d = kDims) {
  std::vector<LabelMap> m;
  for (int i = 0; i < n; ++i) m.push_back(make_phantom(d, 100 + i));
  return m;
}

GenConfig quiet_config() {
  GenConfig c;
  c.rotation = {0, 0};
  c.scaling = {1, 1};
  c.shearing = {0, 0};
  c.translation = {0, 0};
  c.sigma_svf = 0;
  c.sigma = {0, 0};
  c.sigma_blur = 0;
  c.sigma_bias = 0;
  c.gamma = {0, 0};
  c.p_strip = 0;
  return c;
}

template <class A, class B>
bool same(const A& a, const B& b) {
  return a.dims() == b.dims() && std::ranges::equal(a.data(), b.data());
}

// One-sample Kolmogorov-Smirnov statistic against a continuous CDF.
template <class Cdf>
double ks_stat(std::vector<double> x, Cdf cdf) {
  std::sort(x.begin(), x.end());
  const double n = double(x.size());
  double d = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double f = cdf(x[i]);
    d = std::max({d, (i + 1) / n - f, f - i / n});
  }
  return d;
}

// Asymptotic critical value at alpha = 0.01.
double ks_crit(std::size_t n) { return 1.628 / std::sqrt(double(n)); }

auto uniform_cdf(double lo, double hi) {
  return [lo, hi](double x) { return std::clamp((x - lo) / (hi - lo), 0.0, 1.0); };
}

auto normal_cdf(double sd) {
  return [sd](double x) { return 0.5 * std::erfc(-x / (sd * std::sqrt(2.0))); };
}

}  // namespace

TEST_CASE("construction errors") {
  CHECK_THROWS_AS(PairGenerator({}, GenConfig{}), ParameterError);
  CHECK_THROWS_AS(PairGenerator({LabelMap({1, 4, 4})}, GenConfig{}), DataError);
  GenConfig bad;
  bad.p_strip = 2;
  CHECK_THROWS_AS(PairGenerator(phantoms(1), bad), ConfigError);
  GenConfig crop;
  crop.crop = Dims{30, 10, 10};
  CHECK_THROWS_AS(PairGenerator(phantoms(1), crop), ConfigError);
}

TEST_CASE("label universe includes background") {
  LabelMap m({3, 3, 3}, 7);
  m[4] = 2;
  const PairGenerator g({m}, GenConfig{});
  CHECK(g.label_universe() == std::vector<Label>{0, 2, 7});
}

TEST_CASE("all augmentations disabled") {
  const auto maps = phantoms(3);
  const PairGenerator g(maps, quiet_config());
  for (std::uint64_t i = 0; i < 5; ++i) {
    const TrainingPair p = g.generate(i);
    const LabelMap& s = maps[p.record.map_index];
    CHECK(same(p.target, s));

    // The image is the min-max-normalized piecewise-constant mean image.
    double lo = 1e300, hi = -1e300;
    for (Label l : s.label_set()) {
      lo = std::min(lo, p.record.gmm.at(l).mean);
      hi = std::max(hi, p.record.gmm.at(l).mean);
    }
    for (std::size_t j = 0; j < s.size(); ++j)
      CHECK(p.image[j] == doctest::Approx((p.record.gmm.at(s[j]).mean - lo) / (hi - lo)).epsilon(1e-5));
  }
}

TEST_CASE("determinism") {
  const auto maps = phantoms(4);
  GenConfig c;
  c.seed = 99;
  const PairGenerator a(maps, c), b(maps, c);
  for (std::uint64_t i : {0ull, 7ull, 123456789ull}) {
    const TrainingPair p = a.generate(i), q = b.generate(i);
    CHECK(same(p.image, q.image));
    CHECK(same(p.target, q.target));
    CHECK(p.record.map_index == q.record.map_index);
  }
  c.seed = 100;
  const PairGenerator other(maps, c);
  CHECK_FALSE(same(other.generate(0).image, a.generate(0).image));
  CHECK(same(generate_pair(maps, a.config(), 7).image, a.generate(7).image));
}

TEST_CASE("100 pairs from 20 maps") {
  const auto maps = phantoms(20, {16, 16, 16});
  std::set<Label> inputs{0};
  for (const auto& m : maps)
    for (Label l : m.label_set()) inputs.insert(l);
  GenConfig c;
  c.seed = 5;
  const PairGenerator g(maps, c);
  std::vector<int> freq(20);
  for (std::uint64_t i = 0; i < 100; ++i) {
    const TrainingPair p = g.generate(i);
    ++freq[p.record.map_index];
    CHECK(p.image.dims() == p.target.dims());
    CHECK(p.image.all_finite());
    const auto [lo, hi] = std::minmax_element(p.image.data().begin(), p.image.data().end());
    CHECK(*lo >= 0.f);
    CHECK(*hi <= 1.f);
    for (Label l : p.target.label_set()) CHECK(inputs.contains(l));
  }
  double chi2 = 0;
  for (int f : freq) chi2 += (f - 5.0) * (f - 5.0) / 5.0;
  CHECK(chi2 < 36.19);  // chi-square, 19 degrees of freedom, alpha = 0.01
}

TEST_CASE("drawn parameters follow their laws") {
  GenConfig c;
  c.seed = 11;
  c.p_strip = 0.2;
  const PairGenerator g(phantoms(3, {8, 8, 8}), c);
  const std::size_t n = 2000;
  std::vector<double> rot, sc, sh, tr, mu, sg, gam, svf, bias;
  int stripped = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const ParameterRecord r = g.sample_parameters(i);
    rot.push_back(r.affine.rotations_deg[i % 3]);
    sc.push_back(r.affine.scalings[i % 3]);
    sh.push_back(r.affine.shears[i % 3]);
    tr.push_back(r.affine.translations[i % 3]);
    const Gaussian& gs = std::next(r.gmm.begin(), i % r.gmm.size())->second;
    mu.push_back(gs.mean);
    sg.push_back(gs.stddev);
    gam.push_back(r.gamma);
    svf.push_back(r.svf_grid.comp[i % 3][i % 1000]);
    bias.push_back(r.bias_grid[i % 64]);
    stripped += r.stripped;

    CHECK(r.gamma >= c.gamma.lo);
    CHECK(r.gamma <= c.gamma.hi);
    for (const auto& [l, p] : r.gmm) {
      CHECK(p.mean >= c.mu.lo);
      CHECK(p.mean <= c.mu.hi);
      CHECK(p.stddev >= c.sigma.lo);
      CHECK(p.stddev <= c.sigma.hi);
    }
  }
  CHECK(ks_stat(rot, uniform_cdf(-10, 10)) < ks_crit(n));
  CHECK(ks_stat(sc, uniform_cdf(0.9, 1.1)) < ks_crit(n));
  CHECK(ks_stat(sh, uniform_cdf(-0.01, 0.01)) < ks_crit(n));
  CHECK(ks_stat(tr, uniform_cdf(-20, 20)) < ks_crit(n));
  CHECK(ks_stat(mu, uniform_cdf(25, 225)) < ks_crit(n));
  CHECK(ks_stat(sg, uniform_cdf(5, 25)) < ks_crit(n));
  CHECK(ks_stat(gam, uniform_cdf(-0.3, 0.3)) < ks_crit(n));
  CHECK(ks_stat(svf, normal_cdf(3)) < ks_crit(n));
  CHECK(ks_stat(bias, normal_cdf(0.5)) < ks_crit(n));
  CHECK(std::fabs(stripped / double(n) - 0.2) < 5 * std::sqrt(0.16 / n));
}

TEST_CASE("targets stay aligned with images") {
  // Noise-free constant intensities per label, with the full deformation on:
  // every label region must map to exactly one intensity.
  GenConfig c = quiet_config();
  const GenConfig d;
  c.rotation = d.rotation;
  c.scaling = d.scaling;
  c.shearing = d.shearing;
  c.translation = {-3, 3};
  c.sigma_svf = d.sigma_svf;
  const PairGenerator g(phantoms(2), c);
  for (std::uint64_t i = 0; i < 4; ++i) {
    const TrainingPair p = g.generate(i);
    std::map<Label, float> value;
    for (std::size_t j = 0; j < p.target.size(); ++j) {
      const auto [it, fresh] = value.emplace(p.target[j], p.image[j]);
      if (!fresh) CHECK(it->second == p.image[j]);
    }
  }
}

TEST_CASE("center crop") {
  GenConfig c;
  c.crop = Dims{16, 12, 20};
  const PairGenerator g(phantoms(2), c);
  const TrainingPair p = g.generate(3);
  CHECK(p.image.dims() == Dims{16, 12, 20});
  CHECK(p.target.dims() == Dims{16, 12, 20});
  const auto [lo, hi] = std::minmax_element(p.image.data().begin(), p.image.data().end());
  CHECK(*lo == 0.f);
  CHECK(*hi == 1.f);
}

TEST_CASE("skull stripping reaches the target") {
  GenConfig c;
  c.p_strip = 1;
  c.extracerebral = phantom_extracerebral();
  const PairGenerator g(phantoms(1), c);
  const TrainingPair p = g.generate(0);
  CHECK(p.record.stripped);
  for (Label l : p.target.label_set()) CHECK(std::ranges::find(c.extracerebral, l) == c.extracerebral.end());
}

TEST_CASE("rule mode") {
  LabelMap m({8, 8, 8}, 2);
  for (std::size_t j = 0; j < m.size() / 2; ++j) m[j] = 3;
  GenConfig c;
  c.mode = IntensityMode::rule;
  c.contrasts = {{"T1", {{0, {10, 0, 1, 0}}, {2, {110, 0, 5, 0}}, {3, {70, 0, 5, 0}}}},
                 {"T2", {{0, {10, 0, 1, 0}}, {2, {40, 0, 5, 0}}, {3, {90, 0, 5, 0}}}}};
  const PairGenerator g({m}, c);
  std::set<std::string> seen;
  for (std::uint64_t i = 0; i < 40; ++i) {
    const ParameterRecord r = g.sample_parameters(i);
    seen.insert(r.contrast);
    CHECK(r.gmm.at(2).mean == (r.contrast == "T1" ? 110 : 40));
  }
  CHECK(seen == std::set<std::string>{"T1", "T2"});

  c.contrasts[1].labels.erase(3);
  CHECK_THROWS_AS(PairGenerator({m}, c), ConfigError);
}

TEST_CASE("parameter records") {
  GenConfig c;
  c.seed = 3;
  c.p_strip = 0.5;
  c.extracerebral = phantom_extracerebral();
  const PairGenerator g(phantoms(3), c);
  for (std::uint64_t i = 0; i < 6; ++i) {
    const TrainingPair p = g.generate(i);
    const ParameterRecord& r = record_parameters(p);
    CHECK(r.sample_index == i);
    const ParameterRecord back = record_from_json(record_to_json(r));
    CHECK(back.map_index == r.map_index);
    CHECK(back.affine == r.affine);
    CHECK(back.gamma == r.gamma);
    CHECK(back.gmm == r.gmm);
    CHECK(back.stripped == r.stripped);
    CHECK(std::ranges::equal(back.bias_grid.data(), r.bias_grid.data()));
    const TrainingPair q = g.render(back);
    CHECK(same(q.image, p.image));
    CHECK(same(q.target, p.target));
  }
  CHECK_THROWS_AS(record_from_json("{"), DataError);
  CHECK_THROWS_AS(record_from_json("{\"sample_index\": 1}"), DataError);
  ParameterRecord far = g.sample_parameters(0);
  far.map_index = 17;
  CHECK_THROWS_AS(g.render(far), DataError);
}

TEST_CASE("PairStream") {
  auto g = std::make_shared<const PairGenerator>(phantoms(3, {16, 16, 16}), GenConfig{});
  SUBCASE("count 0 is empty") {
    PairStream s(g, 0, 2);
    CHECK_FALSE(s.next().has_value());
  }
  SUBCASE("first element equals generate(0)") {
    PairStream s(g, std::nullopt, 0);
    CHECK(same(s.next()->image, g->generate(0).image));
  }
  SUBCASE("same sequence for any worker count") {
    std::vector<Volume> ref;
    {
      PairStream s(g, 9, 0);
      while (auto p = s.next()) ref.push_back(p->image);
    }
    CHECK(ref.size() == 9);
    for (unsigned w : {1u, 3u, 8u}) {
      PairStream s(g, 9, w);
      std::size_t k = 0;
      while (auto p = s.next()) {
        REQUIRE(k < ref.size());
        CHECK(p->record.sample_index == k);
        CHECK(same(p->image, ref[k++]));
      }
      CHECK(k == 9);
    }
  }
  SUBCASE("offset start and early destruction") {
    PairStream s(g, std::nullopt, 2, 40);
    CHECK(s.next()->record.sample_index == 40);
    CHECK(s.next()->record.sample_index == 41);
  }
  SUBCASE("generate_stream") {
    PairStream s = generate_stream(g->maps(), g->config(), 2, 1);
    CHECK(same(s.next()->target, g->generate(0).target));
  }
}
