#pragma once

// Procedural head-like label maps for tests, demos and benchmarks. Each seed
// perturbs the nested ellipsoidal shells differently, so a seed range gives a
// small population of distinct but anatomically consistent maps.

#include <cstdint>
#include <vector>

#include "synthmr/volume.hpp"

namespace synthmr {

struct PhantomOptions {
  // Four labels (background, CSF, gray matter, white matter) instead of the
  // full head with scalp, skull and deep structures.
  bool simple = false;
  double jitter = 0.06;  // relative amplitude of the shell perturbation
};

inline constexpr Label kPhantomScalp = 258;
inline constexpr Label kPhantomSkull = 165;
inline constexpr Label kPhantomCsf = 24;
inline constexpr Label kPhantomGray = 3;
inline constexpr Label kPhantomWhite = 2;
inline constexpr Label kPhantomVentricle = 4;
inline constexpr Label kPhantomThalamus = 10;
inline constexpr Label kPhantomPutamen = 12;

// Labels treated as extracerebral by skull stripping.
std::vector<Label> phantom_extracerebral();

LabelMap make_phantom(Dims dims, std::uint64_t seed, const PhantomOptions& opts = {});

}  // namespace synthmr
