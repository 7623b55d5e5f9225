#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <utility>
#include <vector>

#include "synthmr/volume.hpp"

namespace synthmr {

// 2|A∩B| / (|A| + |B|) for one label; 1 when the label is absent from both.
double dice(const LabelMap& a, const LabelMap& b, Label label);

inline constexpr double kSoftDiceEps = 1e-6;

// 1 - mean_k (2 sum p t + eps) / (sum p^2 + sum t^2 + eps), with t the one-hot
// target over `ordering` (one entry per prediction channel).
double soft_dice_loss(std::span<const Volume> pred, std::span<const Label> ordering, const LabelMap& target,
                      double eps = kSoftDiceEps);

struct LabelScore {
  Label label = 0;
  double dice = 1;
  std::size_t count_a = 0;
  std::size_t count_b = 0;
  std::size_t overlap = 0;
};

struct PairScore {
  Label left = 0;
  Label right = 0;
  double dice = 1;  // mean of the two sides
};

struct DiceReport {
  std::vector<LabelScore> per_label;
  std::vector<PairScore> pairs;
  double mean = 1;  // over per_label entries
};

// Scores every label in `subset`; an empty subset means every label present in
// either map except background. `pairs` merges contralateral structures.
DiceReport dice_report(const LabelMap& a, const LabelMap& b, std::span<const Label> subset = {},
                       std::span<const std::pair<Label, Label>> pairs = {});

void write_dice_csv(const DiceReport& r, const std::filesystem::path& path);

}  // namespace synthmr
