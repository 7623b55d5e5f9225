#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "synthmr/error.hpp"
#include "synthmr/volume.hpp"

namespace synthmr {

struct Range {
  double lo = 0;
  double hi = 0;
  friend bool operator==(const Range&, const Range&) = default;
};

// Gaussian hyperprior over one label's intensity mean and standard deviation.
struct LabelHyperprior {
  double mean_mu = 0;
  double std_mu = 0;
  double mean_sigma = 0;
  double std_sigma = 0;
  friend bool operator==(const LabelHyperprior&, const LabelHyperprior&) = default;
};

struct ContrastHyperprior {
  std::string name;
  std::map<Label, LabelHyperprior> labels;
  friend bool operator==(const ContrastHyperprior&, const ContrastHyperprior&) = default;
};

enum class IntensityMode { agnostic, rule };

// Generator hyperparameters. Defaults are the reference values; angles are in
// degrees, spatial quantities in voxels, intensities on a [0, 255] scale.
struct GenConfig {
  Range rotation{-10, 10};
  Range scaling{0.9, 1.1};
  Range shearing{-0.01, 0.01};
  Range translation{-20, 20};
  double sigma_svf = 3;
  Range mu{25, 225};
  Range sigma{5, 25};
  double sigma_blur = 0.3;
  double sigma_bias = 0.5;
  Range gamma{-0.3, 0.3};
  int svf_grid = 10;
  int bias_grid = 4;

  double p_strip = 0.2;
  std::vector<Label> extracerebral;
  std::optional<Dims> crop;
  std::uint64_t seed = 0;
  IntensityMode mode = IntensityMode::agnostic;
  std::vector<ContrastHyperprior> contrasts;

  friend bool operator==(const GenConfig&, const GenConfig&) = default;
};

class ConfigError : public DataError {
 public:
  enum class Kind { parse, invariant, unknown_key };
  ConfigError(Kind kind, const std::string& what) : DataError(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

// Throws ConfigError(invariant) on the first violated invariant.
void validate(const GenConfig& cfg);

// JSON object text; missing keys keep their defaults, unknown keys are rejected.
GenConfig parse_config(const std::string& text);
GenConfig load_config(const std::filesystem::path& path);
std::string config_to_json(const GenConfig& cfg);

}  // namespace synthmr
