#include "synthmr/rng.hpp"

namespace synthmr {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t sample_seed(std::uint64_t master, std::uint64_t index) {
  return splitmix64(splitmix64(master) ^ splitmix64(index + 0x632be59bd9b4e019ULL));
}

Rng stage_rng(std::uint64_t seed, Stage stage) {
  return Rng(splitmix64(seed ^ (static_cast<std::uint64_t>(stage) * 0xd1b54a32d192ed03ULL)));
}

double uniform(Rng& rng, double lo, double hi) {
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  return lo == hi ? lo : lo + (hi - lo) * u;
}

double normal(Rng& rng, double mean, double sd) {
  const double z = std::normal_distribution<double>(0.0, 1.0)(rng);
  return sd == 0.0 ? mean : mean + sd * z;
}

}  // namespace synthmr
