#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace synthmr {

// Voxel counts along x, y, z. Storage everywhere is x-fastest:
// index = x + nx * (y + ny * z).
struct Dims {
  int nx = 0;
  int ny = 0;
  int nz = 0;

  std::size_t count() const {
    return static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny) * static_cast<std::size_t>(nz);
  }
  std::size_t index(int x, int y, int z) const {
    return static_cast<std::size_t>(x) +
           static_cast<std::size_t>(nx) * (static_cast<std::size_t>(y) + static_cast<std::size_t>(ny) * z);
  }
  bool valid() const { return nx > 0 && ny > 0 && nz > 0; }
  int operator[](int axis) const { return axis == 0 ? nx : (axis == 1 ? ny : nz); }

  friend bool operator==(const Dims&, const Dims&) = default;
};

std::string to_string(const Dims& d);

struct Spacing {
  float sx = 1.f;
  float sy = 1.f;
  float sz = 1.f;
  friend bool operator==(const Spacing&, const Spacing&) = default;
};

struct Point3 {
  double x = 0;
  double y = 0;
  double z = 0;
  friend bool operator==(const Point3&, const Point3&) = default;
};

// Dense scalar grid. Holds intensities, probabilities or single field components.
class Volume {
 public:
  Volume() = default;
  explicit Volume(Dims dims, float fill = 0.f, Spacing spacing = {});
  Volume(Dims dims, std::vector<float> data, Spacing spacing = {});

  const Dims& dims() const { return dims_; }
  const Spacing& spacing() const { return spacing_; }
  void set_spacing(Spacing s) { spacing_ = s; }
  std::size_t size() const { return data_.size(); }

  std::span<const float> data() const { return data_; }
  std::span<float> data() { return data_; }

  float operator[](std::size_t i) const { return data_[i]; }
  float& operator[](std::size_t i) { return data_[i]; }
  float at(int x, int y, int z) const { return data_[dims_.index(x, y, z)]; }
  float& at(int x, int y, int z) { return data_[dims_.index(x, y, z)]; }

  bool all_finite() const;

 private:
  Dims dims_;
  Spacing spacing_;
  std::vector<float> data_;
};

using Label = std::uint16_t;

// Dense integer label grid; 0 is background.
class LabelMap {
 public:
  LabelMap() = default;
  explicit LabelMap(Dims dims, Label fill = 0, Spacing spacing = {});
  LabelMap(Dims dims, std::vector<Label> labels, Spacing spacing = {});

  const Dims& dims() const { return dims_; }
  const Spacing& spacing() const { return spacing_; }
  void set_spacing(Spacing s) { spacing_ = s; }
  std::size_t size() const { return labels_.size(); }

  std::span<const Label> data() const { return labels_; }
  std::span<Label> data() { return labels_; }

  Label operator[](std::size_t i) const { return labels_[i]; }
  Label& operator[](std::size_t i) { return labels_[i]; }
  Label at(int x, int y, int z) const { return labels_[dims_.index(x, y, z)]; }
  Label& at(int x, int y, int z) { return labels_[dims_.index(x, y, z)]; }

  // Sorted distinct labels present in the map.
  std::vector<Label> label_set() const;

  friend bool operator==(const LabelMap& a, const LabelMap& b) {
    return a.dims_ == b.dims_ && a.labels_ == b.labels_;
  }

 private:
  Dims dims_;
  Spacing spacing_;
  std::vector<Label> labels_;
};

// Three scalar components per voxel, stored as separate planes (structure of
// arrays) so kernels stream each component contiguously.
struct VectorField {
  VectorField() = default;
  explicit VectorField(Dims d) : comp{Volume(d), Volume(d), Volume(d)} {}

  const Dims& dims() const { return comp[0].dims(); }
  std::array<Volume, 3> comp;
};

// Edge-clamped trilinear interpolation at a continuous voxel coordinate.
float trilinear_sample(const Volume& v, Point3 p);

// Label of the nearest node (per-axis round half up); 0 outside the grid.
Label nearest_sample(const LabelMap& m, Point3 p);

// Align-corners trilinear resize: coarse corner nodes land on fine corner nodes.
// Throws ParameterError when any target axis is < 2.
Volume upscale_trilinear(const Volume& coarse, Dims target);
VectorField upscale_trilinear(const VectorField& coarse, Dims target);

// One probability channel per entry of `ordering`. Throws DataError when the
// map contains a label that is missing from the ordering.
std::vector<Volume> one_hot(const LabelMap& m, std::span<const Label> ordering);

}  // namespace synthmr
