#include <algorithm>
#include <random>

#include "doctest.h"
#include "synthmr/error.hpp"
#include "synthmr/volume.hpp"

using namespace synthmr;

namespace {

Volume corner_cube() {
  // Value at corner (x, y, z) is x + 2y + 4z.
  Volume v({2, 2, 2});
  for (int z = 0; z < 2; ++z)
    for (int y = 0; y < 2; ++y)
      for (int x = 0; x < 2; ++x) v.at(x, y, z) = static_cast<float>(x + 2 * y + 4 * z);
  return v;
}

Volume random_volume(Dims d, unsigned seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<float> u(-10, 10);
  Volume v(d);
  for (float& x : v.data()) x = u(rng);
  return v;
}

}  // namespace

TEST_CASE("layout is x-fastest") {
  const Dims d{3, 4, 5};
  CHECK(d.index(1, 0, 0) == 1);
  CHECK(d.index(0, 1, 0) == 3);
  CHECK(d.index(0, 0, 1) == 12);
  CHECK(d.count() == 60);
}

TEST_CASE("trilinear_sample") {
  SUBCASE("constant field") {
    const Volume v({4, 5, 6}, 5.0f);
    CHECK(trilinear_sample(v, {2.3, 1.7, 0.5}) == 5.0f);
    CHECK(trilinear_sample(v, {-3, 40, 2.2}) == 5.0f);
  }
  SUBCASE("grid nodes reproduce stored values exactly") {
    const Volume v = random_volume({5, 4, 3}, 1);
    for (int z = 0; z < 3; ++z)
      for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 5; ++x) CHECK(trilinear_sample(v, {double(x), double(y), double(z)}) == v.at(x, y, z));
  }
  SUBCASE("cube centre averages the eight corners") { CHECK(trilinear_sample(corner_cube(), {0.5, 0.5, 0.5}) == doctest::Approx(3.5)); }
  SUBCASE("edge clamp outside the grid") {
    const Volume v = corner_cube();
    CHECK(trilinear_sample(v, {-4, 0, 0}) == v.at(0, 0, 0));
    CHECK(trilinear_sample(v, {9, 9, 9}) == v.at(1, 1, 1));
    CHECK(trilinear_sample(v, {0.25, -1, 7}) == doctest::Approx(0.25 + 4));
  }
  SUBCASE("no overshoot of the support values") {
    const Volume v = random_volume({6, 6, 6}, 2);
    std::mt19937 rng(3);
    std::uniform_real_distribution<double> u(0, 5);
    for (int i = 0; i < 2000; ++i) {
      const Point3 p{u(rng), u(rng), u(rng)};
      float lo = 1e30f, hi = -1e30f;
      for (int dz = 0; dz < 2; ++dz)
        for (int dy = 0; dy < 2; ++dy)
          for (int dx = 0; dx < 2; ++dx) {
            const float s = v.at(std::min(5, int(p.x) + dx), std::min(5, int(p.y) + dy), std::min(5, int(p.z) + dz));
            lo = std::min(lo, s);
            hi = std::max(hi, s);
          }
      const float r = trilinear_sample(v, p);
      CHECK(r >= lo);
      CHECK(r <= hi);
    }
  }
}

TEST_CASE("nearest_sample") {
  LabelMap m({4, 2, 2});
  m.at(1, 0, 0) = 7;
  m.at(2, 0, 0) = 9;
  CHECK(nearest_sample(m, {1, 0, 0}) == 7);
  CHECK(nearest_sample(m, {-5, -5, -5}) == 0);
  CHECK(nearest_sample(m, {1.49, 0, 0}) == 7);
  CHECK(nearest_sample(m, {1.5, 0, 0}) == 9);  // half rounds up
  CHECK(nearest_sample(m, {3.6, 0, 0}) == 0);  // rounds to x = 4, outside
  CHECK(nearest_sample(m, {-0.5, 0, 0}) == m.at(0, 0, 0));
  CHECK(nearest_sample(m, {-0.51, 0, 0}) == 0);
}

TEST_CASE("upscale_trilinear") {
  SUBCASE("constant stays constant") {
    const Volume c({3, 3, 3}, 2.5f);
    const Volume f = upscale_trilinear(c, {17, 9, 5});
    CHECK(std::all_of(f.data().begin(), f.data().end(), [](float x) { return x == 2.5f; }));
  }
  SUBCASE("same dims is the identity") {
    const Volume c = random_volume({4, 3, 5}, 4);
    const Volume f = upscale_trilinear(c, c.dims());
    CHECK(std::equal(f.data().begin(), f.data().end(), c.data().begin()));
  }
  SUBCASE("align-corners ramp") {
    Volume c({2, 2, 2});
    for (int z = 0; z < 2; ++z)
      for (int y = 0; y < 2; ++y) c.at(1, y, z) = 1.f;
    const Volume f = upscale_trilinear(c, {5, 2, 2});
    const float want[5] = {0, 0.25f, 0.5f, 0.75f, 1};
    for (int x = 0; x < 5; ++x) CHECK(f.at(x, 1, 1) == doctest::Approx(want[x]).epsilon(1e-7));
  }
  SUBCASE("coarse nodes reproduced at their preimages") {
    const Volume c = random_volume({4, 5, 3}, 5);
    const Volume f = upscale_trilinear(c, {10, 13, 9});  // strides 3, 3, 4
    for (int z = 0; z < 3; ++z)
      for (int y = 0; y < 5; ++y)
        for (int x = 0; x < 4; ++x) CHECK(std::fabs(f.at(3 * x, 3 * y, 4 * z) - c.at(x, y, z)) <= 1e-6);
  }
  SUBCASE("vector fields upscale per component") {
    VectorField c({2, 2, 2});
    c.comp[1] = Volume({2, 2, 2}, 3.f);
    const VectorField f = upscale_trilinear(c, {4, 4, 4});
    CHECK(f.dims() == Dims{4, 4, 4});
    CHECK(f.comp[0].at(2, 2, 2) == 0.f);
    CHECK(f.comp[1].at(1, 3, 0) == 3.f);
  }
  SUBCASE("target axis below 2 rejected") {
    const Volume c({3, 3, 3});
    CHECK_THROWS_AS(upscale_trilinear(c, {1, 4, 4}), ParameterError);
  }
}

TEST_CASE("one_hot") {
  SUBCASE("single label") {
    const LabelMap m({3, 3, 3}, 5);
    const std::vector<Label> order{5};
    const auto ch = one_hot(m, order);
    REQUIRE(ch.size() == 1);
    CHECK(std::all_of(ch[0].data().begin(), ch[0].data().end(), [](float x) { return x == 1.f; }));
  }
  SUBCASE("checkerboard gives complementary channels") {
    LabelMap m({4, 4, 4});
    for (int z = 0; z < 4; ++z)
      for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x) m.at(x, y, z) = (x + y + z) % 2 ? 3 : 1;
    const std::vector<Label> order{1, 3};
    const auto ch = one_hot(m, order);
    for (std::size_t j = 0; j < m.size(); ++j) {
      CHECK(ch[0][j] + ch[1][j] == 1.f);
      CHECK(ch[1][j] == (m[j] == 3 ? 1.f : 0.f));
    }
  }
  SUBCASE("partition of unity with unused ordering entries") {
    LabelMap m({5, 4, 3});
    std::mt19937 rng(6);
    for (Label& l : m.data()) l = static_cast<Label>(rng() % 4);
    const std::vector<Label> order{0, 1, 2, 3, 99};
    const auto ch = one_hot(m, order);
    for (std::size_t j = 0; j < m.size(); ++j) {
      float s = 0;
      for (const auto& c : ch) s += c[j];
      CHECK(s == 1.f);
    }
  }
  SUBCASE("label missing from ordering") {
    const LabelMap m({2, 2, 2}, 4);
    const std::vector<Label> order{0, 1};
    CHECK_THROWS_AS(one_hot(m, order), DataError);
  }
}

TEST_CASE("label_set is sorted and distinct") {
  LabelMap m({3, 1, 1});
  m[0] = 9;
  m[1] = 2;
  m[2] = 9;
  CHECK(m.label_set() == std::vector<Label>{2, 9});
}

TEST_CASE("all_finite") {
  Volume v({2, 2, 2});
  CHECK(v.all_finite());
  v[3] = std::numeric_limits<float>::infinity();
  CHECK_FALSE(v.all_finite());
}
