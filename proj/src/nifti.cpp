#include "synthmr/nifti.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>

namespace synthmr {

static_assert(std::endian::native == std::endian::little, "NIfTI I/O assumes a little-endian host");

namespace {

constexpr std::size_t kHeaderSize = 348;
constexpr std::size_t kDataOffset = 352;
constexpr std::int32_t kCommentCode = 6;
constexpr const char* kLabelTag = "synthmr-labels:";

// Byte offsets of the header fields used here.
namespace off {
constexpr std::size_t sizeof_hdr = 0, dim = 40, datatype = 70, bitpix = 72, pixdim = 76, vox_offset = 108,
                      scl_slope = 112, scl_inter = 116, xyzt_units = 123, descrip = 148, qform_code = 252,
                      sform_code = 254, srow_x = 280, magic = 344;
}

template <typename T>
T get(const std::vector<std::uint8_t>& b, std::size_t at) {
  T v;
  std::memcpy(&v, b.data() + at, sizeof(T));
  return v;
}

template <typename T>
void put(std::vector<std::uint8_t>& b, std::size_t at, T v) {
  std::memcpy(b.data() + at, &v, sizeof(T));
}

bool gz_suffix(const std::filesystem::path& p) { return p.extension() == ".gz"; }

struct Header {
  std::array<std::int64_t, 8> dim{};
  std::int16_t datatype = 0;
  std::array<float, 8> pixdim{};
  std::size_t vox_offset = 0;
  float slope = 1, inter = 0;
};

std::size_t dtype_size(std::int16_t t) {
  switch (t) {
    case nifti_dtype::uint8: return 1;
    case nifti_dtype::int16:
    case nifti_dtype::uint16: return 2;
    case nifti_dtype::float32: return 4;
    default: return 0;
  }
}

Header parse_header(const std::vector<std::uint8_t>& b, int want_rank, const std::string& name) {
  using K = NiftiError::Kind;
  if (b.size() < kHeaderSize) throw NiftiError(K::truncated, name + ": truncated header");
  const auto hs = get<std::int32_t>(b, off::sizeof_hdr);
  if (hs != static_cast<std::int32_t>(kHeaderSize))
    throw NiftiError(K::bad_header_size, name + ": bad header size " + std::to_string(hs) + " (expected 348)");
  if (std::memcmp(b.data() + off::magic, "n+1\0", 4) != 0)
    throw NiftiError(K::bad_magic, name + ": bad magic (only single-file n+1 is supported)");

  Header h;
  for (int i = 0; i < 8; ++i) h.dim[i] = get<std::int16_t>(b, off::dim + 2 * i);
  if (h.dim[0] != want_rank)
    throw NiftiError(K::bad_dims, name + ": dim[0] = " + std::to_string(h.dim[0]) + ", expected " +
                                      std::to_string(want_rank));
  for (int i = 1; i <= want_rank; ++i)
    if (h.dim[i] < 1) throw NiftiError(K::bad_dims, name + ": non-positive dim[" + std::to_string(i) + "]");

  h.datatype = get<std::int16_t>(b, off::datatype);
  if (dtype_size(h.datatype) == 0)
    throw NiftiError(K::unsupported_datatype, name + ": unsupported datatype " + std::to_string(h.datatype));
  for (int i = 0; i < 8; ++i) h.pixdim[i] = get<float>(b, off::pixdim + 4 * i);

  const float vo = get<float>(b, off::vox_offset);
  if (!(vo >= static_cast<float>(kHeaderSize)) || vo != std::floor(vo))
    throw NiftiError(K::bad_dims, name + ": invalid vox_offset");
  h.vox_offset = static_cast<std::size_t>(vo);
  h.slope = get<float>(b, off::scl_slope);
  h.inter = get<float>(b, off::scl_inter);
  if (!std::isfinite(h.slope) || h.slope == 0) h.slope = 1;  // 0 means "unscaled"
  if (!std::isfinite(h.inter)) h.inter = 0;
  return h;
}

std::size_t voxel_count(const Header& h, int rank) {
  std::size_t n = 1;
  for (int i = 1; i <= rank; ++i) n *= static_cast<std::size_t>(h.dim[i]);
  return n;
}

void check_payload(const std::vector<std::uint8_t>& b, const Header& h, std::size_t n, const std::string& name) {
  const std::size_t need = h.vox_offset + n * dtype_size(h.datatype);
  if (b.size() < need)
    throw NiftiError(NiftiError::Kind::truncated, name + ": truncated payload (" + std::to_string(b.size()) +
                                                      " bytes, need " + std::to_string(need) + ")");
}

double raw_value(const std::vector<std::uint8_t>& b, const Header& h, std::size_t i) {
  const std::size_t at = h.vox_offset + i * dtype_size(h.datatype);
  switch (h.datatype) {
    case nifti_dtype::uint8: return b[at];
    case nifti_dtype::int16: return get<std::int16_t>(b, at);
    case nifti_dtype::uint16: return get<std::uint16_t>(b, at);
    default: return get<float>(b, at);
  }
}

std::vector<std::uint8_t> make_header(std::array<std::int16_t, 8> dim, std::int16_t datatype, Spacing s,
                                      std::size_t extension_bytes) {
  std::vector<std::uint8_t> b(kDataOffset + extension_bytes, 0);
  put<std::int32_t>(b, off::sizeof_hdr, static_cast<std::int32_t>(kHeaderSize));
  for (int i = 0; i < 8; ++i) put<std::int16_t>(b, off::dim + 2 * i, dim[i]);
  put<std::int16_t>(b, off::datatype, datatype);
  put<std::int16_t>(b, off::bitpix, static_cast<std::int16_t>(8 * dtype_size(datatype)));
  const std::array<float, 8> pix{1.f, s.sx, s.sy, s.sz, 1.f, 1.f, 1.f, 1.f};
  for (int i = 0; i < 8; ++i) put<float>(b, off::pixdim + 4 * i, pix[i]);
  put<float>(b, off::vox_offset, static_cast<float>(kDataOffset + extension_bytes));
  put<float>(b, off::scl_slope, 1.f);
  put<float>(b, off::scl_inter, 0.f);
  b[off::xyzt_units] = 2;  // millimetres
  std::memcpy(b.data() + off::descrip, "synthmr", 7);
  put<std::int16_t>(b, off::qform_code, 0);
  put<std::int16_t>(b, off::sform_code, 1);
  const float srow[12] = {s.sx, 0, 0, 0, 0, s.sy, 0, 0, 0, 0, s.sz, 0};
  for (int i = 0; i < 12; ++i) put<float>(b, off::srow_x + 4 * i, srow[i]);
  std::memcpy(b.data() + off::magic, "n+1\0", 4);
  return b;
}

void write_bytes(const std::vector<std::uint8_t>& b, const std::filesystem::path& path) {
  if (gz_suffix(path)) {
    gzFile f = gzopen(path.c_str(), "wb");
    if (!f) throw NiftiError(NiftiError::Kind::io, "cannot open " + path.string() + " for writing");
    std::size_t done = 0;
    while (done < b.size()) {
      const unsigned chunk = static_cast<unsigned>(std::min<std::size_t>(b.size() - done, 1u << 30));
      if (gzwrite(f, b.data() + done, chunk) != static_cast<int>(chunk)) {
        gzclose(f);
        throw NiftiError(NiftiError::Kind::io, "write failed: " + path.string());
      }
      done += chunk;
    }
    if (gzclose(f) != Z_OK) throw NiftiError(NiftiError::Kind::io, "write failed: " + path.string());
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw NiftiError(NiftiError::Kind::io, "cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
  if (!out) throw NiftiError(NiftiError::Kind::io, "write failed: " + path.string());
}

std::array<std::int16_t, 8> dims3(Dims d) {
  if (d.nx > 32767 || d.ny > 32767 || d.nz > 32767) throw DataError("dims too large for NIfTI-1: " + to_string(d));
  return {3, static_cast<std::int16_t>(d.nx), static_cast<std::int16_t>(d.ny), static_cast<std::int16_t>(d.nz), 1, 1, 1, 1};
}

Spacing spacing_of(const Header& h) {
  auto pos = [](float v) { return std::isfinite(v) && v > 0 ? v : 1.f; };
  return {pos(h.pixdim[1]), pos(h.pixdim[2]), pos(h.pixdim[3])};
}

}  // namespace

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  // gzread passes uncompressed files through unchanged.
  gzFile f = gzopen(path.c_str(), "rb");
  if (!f) throw NiftiError(NiftiError::Kind::io, "cannot open " + path.string());
  std::vector<std::uint8_t> out;
  std::vector<std::uint8_t> buf(1 << 20);
  for (;;) {
    const int got = gzread(f, buf.data(), static_cast<unsigned>(buf.size()));
    if (got < 0) {
      gzclose(f);
      throw NiftiError(NiftiError::Kind::io, "read failed (corrupt gzip?): " + path.string());
    }
    if (got == 0) break;
    out.insert(out.end(), buf.begin(), buf.begin() + got);
  }
  gzclose(f);
  return out;
}

AnyVolume read_volume(const std::filesystem::path& path) {
  const auto b = read_file_bytes(path);
  const std::string name = path.string();
  const Header h = parse_header(b, 3, name);
  const std::size_t n = voxel_count(h, 3);
  check_payload(b, h, n, name);
  const Dims d{static_cast<int>(h.dim[1]), static_cast<int>(h.dim[2]), static_cast<int>(h.dim[3])};
  const Spacing s = spacing_of(h);
  const bool trivial = h.slope == 1 && h.inter == 0;

  if (h.datatype != nifti_dtype::float32 && trivial) {
    bool negative = false;
    std::vector<Label> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double v = raw_value(b, h, i);
      negative = negative || v < 0;
      labels[i] = static_cast<Label>(v);
    }
    if (!negative) return LabelMap(d, std::move(labels), s);
  }

  std::vector<float> data(n);
  for (std::size_t i = 0; i < n; ++i) data[i] = static_cast<float>(h.slope * raw_value(b, h, i) + h.inter);
  if (trivial && h.datatype == nifti_dtype::float32)
    std::memcpy(data.data(), b.data() + h.vox_offset, n * sizeof(float));  // bit-exact, NaN payloads included
  return Volume(d, std::move(data), s);
}

Volume read_image(const std::filesystem::path& path) {
  AnyVolume v = read_volume(path);
  if (auto* vol = std::get_if<Volume>(&v)) return std::move(*vol);
  const auto& l = std::get<LabelMap>(v);
  Volume out(l.dims(), 0.f, l.spacing());
  for (std::size_t i = 0; i < l.size(); ++i) out[i] = l[i];
  return out;
}

LabelMap read_labels(const std::filesystem::path& path) {
  AnyVolume v = read_volume(path);
  if (auto* l = std::get_if<LabelMap>(&v)) return std::move(*l);
  throw DataError(path.string() + ": expected an integer label map, found a scaled or floating-point volume");
}

void write_volume(const Volume& v, const std::filesystem::path& path) {
  auto b = make_header(dims3(v.dims()), nifti_dtype::float32, v.spacing(), 0);
  const std::size_t at = b.size();
  b.resize(at + v.size() * sizeof(float));
  std::memcpy(b.data() + at, v.data().data(), v.size() * sizeof(float));
  write_bytes(b, path);
}

void write_volume(const LabelMap& v, const std::filesystem::path& path) {
  auto b = make_header(dims3(v.dims()), nifti_dtype::uint16, v.spacing(), 0);
  const std::size_t at = b.size();
  b.resize(at + v.size() * sizeof(Label));
  std::memcpy(b.data() + at, v.data().data(), v.size() * sizeof(Label));
  write_bytes(b, path);
}

void write_atlas(const Atlas& a, const std::filesystem::path& path) {
  validate_atlas(a);
  std::string text = kLabelTag;
  for (std::size_t k = 0; k < a.labels.size(); ++k) text += (k ? "," : "") + std::to_string(a.labels[k]);
  const std::size_t esize = (8 + text.size() + 1 + 15) / 16 * 16;

  auto dim = dims3(a.dims);
  if (a.channels() > 32767) throw DataError("too many atlas channels");
  dim[0] = 4;
  dim[4] = static_cast<std::int16_t>(a.channels());
  auto b = make_header(dim, nifti_dtype::float32, a.prob.front().spacing(), esize);
  b[kHeaderSize] = 1;  // extension present
  put<std::int32_t>(b, kDataOffset, static_cast<std::int32_t>(esize));
  put<std::int32_t>(b, kDataOffset + 4, kCommentCode);
  std::memcpy(b.data() + kDataOffset + 8, text.data(), text.size());

  const std::size_t n = a.dims.count();
  std::size_t at = b.size();
  b.resize(at + a.channels() * n * sizeof(float));
  for (const auto& ch : a.prob) {
    std::memcpy(b.data() + at, ch.data().data(), n * sizeof(float));
    at += n * sizeof(float);
  }
  write_bytes(b, path);
}

Atlas read_atlas(const std::filesystem::path& path) {
  const auto b = read_file_bytes(path);
  const std::string name = path.string();
  const Header h = parse_header(b, 4, name);
  if (h.datatype != nifti_dtype::float32)
    throw NiftiError(NiftiError::Kind::unsupported_datatype, name + ": atlas must be float32");
  const std::size_t n = voxel_count(h, 3), K = static_cast<std::size_t>(h.dim[4]);
  check_payload(b, h, n * K, name);

  Atlas a;
  a.dims = {static_cast<int>(h.dim[1]), static_cast<int>(h.dim[2]), static_cast<int>(h.dim[3])};

  // Walk the extension list looking for the label table.
  std::size_t at = kDataOffset;
  if (b.size() > kHeaderSize && b[kHeaderSize] != 0)
    while (at + 8 <= h.vox_offset) {
      const auto esize = get<std::int32_t>(b, at);
      const auto ecode = get<std::int32_t>(b, at + 4);
      if (esize < 8 || at + static_cast<std::size_t>(esize) > h.vox_offset) break;
      const std::string text(reinterpret_cast<const char*>(b.data() + at + 8), static_cast<std::size_t>(esize - 8));
      if (ecode == kCommentCode && text.rfind(kLabelTag, 0) == 0) {
        std::stringstream ss(text.substr(std::strlen(kLabelTag)).c_str());
        for (std::string tok; std::getline(ss, tok, ',');) {
          try {
            a.labels.push_back(static_cast<Label>(std::stoul(tok)));
          } catch (const std::exception&) {
            throw DataError(name + ": malformed atlas label table");
          }
        }
      }
      at += static_cast<std::size_t>(esize);
    }
  if (a.labels.empty())
    for (std::size_t k = 0; k < K; ++k) a.labels.push_back(static_cast<Label>(k));

  const Spacing s = spacing_of(h);
  for (std::size_t k = 0; k < K; ++k) {
    Volume ch(a.dims, 0.f, s);
    std::memcpy(ch.data().data(), b.data() + h.vox_offset + k * n * sizeof(float), n * sizeof(float));
    a.prob.push_back(std::move(ch));
  }
  validate_atlas(a);
  return a;
}

}  // namespace synthmr
