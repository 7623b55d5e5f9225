#pragma once

// Single-file NIfTI-1 (".nii", optionally gzip-compressed ".nii.gz"),
// little-endian, 3D, datatypes uint8 / int16 / uint16 / float32. Atlases use a
// 4D float32 file with one channel per label along the fourth axis.

#include <cstdint>
#include <filesystem>
#include <variant>
#include <vector>

#include "synthmr/bayes.hpp"
#include "synthmr/error.hpp"
#include "synthmr/volume.hpp"

namespace synthmr {

class NiftiError : public DataError {
 public:
  enum class Kind { io, bad_header_size, bad_magic, unsupported_datatype, bad_dims, truncated };
  NiftiError(Kind kind, const std::string& what) : DataError(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

namespace nifti_dtype {
inline constexpr std::int16_t uint8 = 2;
inline constexpr std::int16_t int16 = 4;
inline constexpr std::int16_t float32 = 16;
inline constexpr std::int16_t uint16 = 512;
}  // namespace nifti_dtype

using AnyVolume = std::variant<Volume, LabelMap>;

// Integer files with trivial scaling load as LabelMap (unless int16 data holds
// negative values); everything else loads as Volume with scl_slope/scl_inter
// applied.
AnyVolume read_volume(const std::filesystem::path& path);

// Convenience wrappers: an image accepts either kind; labels demand integers.
Volume read_image(const std::filesystem::path& path);
LabelMap read_labels(const std::filesystem::path& path);

// float32 / uint16, slope 1, inter 0, vox_offset 352. ".gz" suffix compresses.
void write_volume(const Volume& v, const std::filesystem::path& path);
void write_volume(const LabelMap& v, const std::filesystem::path& path);

void write_atlas(const Atlas& a, const std::filesystem::path& path);
Atlas read_atlas(const std::filesystem::path& path);

// Raw file bytes after transparent gunzip.
std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);

}  // namespace synthmr
