#pragma once

#include <cstdint>
#include <random>

namespace synthmr {

using Rng = std::mt19937_64;

// Independent random streams used while generating one sample. Each stage gets
// its own engine so that regenerating from a parameter record only needs the
// streams whose values were not recorded (the per-voxel GMM noise).
enum class Stage : std::uint64_t {
  map_choice = 1,
  affine = 2,
  svf = 3,
  strip = 4,
  gmm_params = 5,
  gmm_noise = 6,
  bias = 7,
  gamma = 8,
};

std::uint64_t splitmix64(std::uint64_t x);

// Seed of sample `index` under `master`; order-independent, so samples can be
// produced in parallel and in any order.
std::uint64_t sample_seed(std::uint64_t master, std::uint64_t index);

Rng stage_rng(std::uint64_t sample_seed, Stage stage);

// Uniform on [lo, hi); returns lo exactly when lo == hi.
double uniform(Rng& rng, double lo, double hi);

// Gaussian draw; returns mean exactly when sd == 0.
double normal(Rng& rng, double mean, double sd);

}  // namespace synthmr
