#include "synthmr/metrics.hpp"

#include <algorithm>
#include <fstream>

#include "synthmr/error.hpp"

namespace synthmr {

namespace {

void require_dims(const Dims& a, const Dims& b) {
  if (!(a == b)) throw DataError("segmentation dims differ: " + to_string(a) + " vs " + to_string(b));
}

LabelScore score(const LabelMap& a, const LabelMap& b, Label label) {
  LabelScore s{label};
  for (std::size_t j = 0; j < a.size(); ++j) {
    const bool in_a = a[j] == label, in_b = b[j] == label;
    s.count_a += in_a;
    s.count_b += in_b;
    s.overlap += in_a && in_b;
  }
  const std::size_t denom = s.count_a + s.count_b;
  s.dice = denom == 0 ? 1.0 : 2.0 * static_cast<double>(s.overlap) / static_cast<double>(denom);
  return s;
}

}  // namespace

double dice(const LabelMap& a, const LabelMap& b, Label label) {
  require_dims(a.dims(), b.dims());
  return score(a, b, label).dice;
}

double soft_dice_loss(std::span<const Volume> pred, std::span<const Label> ordering, const LabelMap& target,
                      double eps) {
  if (pred.empty()) throw DataError("soft_dice_loss: no prediction channels");
  if (pred.size() != ordering.size())
    throw DataError("soft_dice_loss: " + std::to_string(pred.size()) + " channels for " +
                    std::to_string(ordering.size()) + " labels");
  for (const auto& p : pred) require_dims(p.dims(), target.dims());

  double total = 0;
  for (std::size_t k = 0; k < pred.size(); ++k) {
    double pt = 0, pp = 0, tt = 0;
    const Label l = ordering[k];
    for (std::size_t j = 0; j < target.size(); ++j) {
      const double p = pred[k][j];
      const double t = target[j] == l ? 1.0 : 0.0;
      pt += p * t;
      pp += p * p;
      tt += t;
    }
    total += (2 * pt + eps) / (pp + tt + eps);
  }
  return 1.0 - total / static_cast<double>(pred.size());
}

DiceReport dice_report(const LabelMap& a, const LabelMap& b, std::span<const Label> subset,
                       std::span<const std::pair<Label, Label>> pairs) {
  require_dims(a.dims(), b.dims());
  std::vector<Label> labels(subset.begin(), subset.end());
  if (labels.empty()) {
    auto la = a.label_set(), lb = b.label_set();
    std::set_union(la.begin(), la.end(), lb.begin(), lb.end(), std::back_inserter(labels));
    std::erase(labels, Label{0});
  }

  DiceReport r;
  std::map<Label, double> by_label;
  double sum = 0;
  for (Label l : labels) {
    r.per_label.push_back(score(a, b, l));
    by_label[l] = r.per_label.back().dice;
    sum += r.per_label.back().dice;
  }
  r.mean = labels.empty() ? 1.0 : sum / static_cast<double>(labels.size());

  for (const auto& [left, right] : pairs) {
    const double dl = by_label.contains(left) ? by_label[left] : score(a, b, left).dice;
    const double dr = by_label.contains(right) ? by_label[right] : score(a, b, right).dice;
    r.pairs.push_back({left, right, 0.5 * (dl + dr)});
  }
  return r;
}

void write_dice_csv(const DiceReport& r, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out.precision(17);
  out << "label,dice,count_pred,count_truth,overlap\n";
  for (const auto& s : r.per_label)
    out << s.label << ',' << s.dice << ',' << s.count_a << ',' << s.count_b << ',' << s.overlap << '\n';
  for (const auto& p : r.pairs) out << p.left << '+' << p.right << ',' << p.dice << ",,,\n";
  out << "mean," << r.mean << ",,,\n";
  if (!out) throw DataError("failed writing " + path.string());
}

}  // namespace synthmr
