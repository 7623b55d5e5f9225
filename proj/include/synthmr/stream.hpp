#pragma once

// Length-prefixed binary records carrying one training pair each.
//
//   offset  size     field
//   0       4        magic "SVP1"
//   4       8        sample_index      u64
//   12      12       nx, ny, nz        u32 x 3
//   24      4*N      image             f32, x-fastest, N = nx*ny*nz
//   ..      2*N      target            u16, same layout
//   ..      4        json_len          u32
//   ..      json_len parameter record  UTF-8 JSON text
//
// All integers and floats are little-endian.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "synthmr/error.hpp"
#include "synthmr/generator.hpp"

namespace synthmr {

class StreamError : public DataError {
 public:
  enum class Kind { bad_magic, length_overflow, truncated, io };
  StreamError(Kind kind, const std::string& what) : DataError(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

inline constexpr std::size_t kStreamHeaderBytes = 24;
inline constexpr std::uint64_t kStreamMaxVoxels = 1ull << 30;
inline constexpr std::uint32_t kStreamMaxJson = 1u << 28;

std::vector<std::uint8_t> encode_record(const TrainingPair& p);

// Decodes the record at the start of `bytes`. Every length is checked against
// the limits above and against the available bytes before anything is
// allocated. `consumed` receives the record size.
TrainingPair decode_record(std::span<const std::uint8_t> bytes, std::size_t* consumed = nullptr);

void write_record(std::ostream& out, const TrainingPair& p);

// nullopt on a clean end of stream at a record boundary.
std::optional<TrainingPair> read_record(std::istream& in);
std::optional<TrainingPair> read_record(int fd);

// Blocking TCP listener for a single consumer at a time.
class StreamServer {
 public:
  // `port` 0 picks an ephemeral port.
  StreamServer(const std::string& host, std::uint16_t port);
  ~StreamServer();
  StreamServer(const StreamServer&) = delete;
  StreamServer& operator=(const StreamServer&) = delete;

  std::uint16_t port() const { return port_; }

  // Accepts consumers one after another and writes records from `src` until
  // it is exhausted. When a consumer disconnects, the record in flight is
  // re-sent to the next one. Returns the number of records delivered.
  std::uint64_t serve(PairStream& src);

 private:
  int fd_ = -1;
  std::uint16_t port_ = 0;
};

}  // namespace synthmr
