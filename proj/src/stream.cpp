#include "synthmr/stream.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <bit>
#include <cerrno>
#include <cstring>
#include <istream>
#include <ostream>

namespace synthmr {

static_assert(std::endian::native == std::endian::little, "stream records assume a little-endian host");

namespace {

template <typename T>
void append(std::vector<std::uint8_t>& b, T v) {
  const auto at = b.size();
  b.resize(at + sizeof(T));
  std::memcpy(b.data() + at, &v, sizeof(T));
}

template <typename T>
T load(const std::uint8_t* p) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  return v;
}

struct Layout {
  std::uint64_t index = 0;
  Dims dims;
  std::size_t voxels = 0;
};

Layout parse_header(const std::uint8_t* h) {
  if (std::memcmp(h, "SVP1", 4) != 0) throw StreamError(StreamError::Kind::bad_magic, "stream record: bad magic");
  Layout l;
  l.index = load<std::uint64_t>(h + 4);
  std::uint64_t n = 1;
  std::uint32_t d[3];
  for (int a = 0; a < 3; ++a) {
    d[a] = load<std::uint32_t>(h + 12 + 4 * a);
    if (d[a] == 0 || d[a] > kStreamMaxVoxels)
      throw StreamError(StreamError::Kind::length_overflow, "stream record: invalid dimension " + std::to_string(d[a]));
    n *= d[a];
    if (n > kStreamMaxVoxels)
      throw StreamError(StreamError::Kind::length_overflow, "stream record: voxel count exceeds limit");
  }
  l.dims = {static_cast<int>(d[0]), static_cast<int>(d[1]), static_cast<int>(d[2])};
  l.voxels = static_cast<std::size_t>(n);
  return l;
}

std::size_t payload_bytes(const Layout& l) { return l.voxels * (sizeof(float) + sizeof(Label)); }

std::uint32_t parse_json_len(const std::uint8_t* p) {
  const auto len = load<std::uint32_t>(p);
  if (len > kStreamMaxJson) throw StreamError(StreamError::Kind::length_overflow, "stream record: JSON length exceeds limit");
  return len;
}

TrainingPair build(const Layout& l, const std::uint8_t* payload, const std::uint8_t* json, std::size_t json_len) {
  std::vector<float> img(l.voxels);
  std::vector<Label> tgt(l.voxels);
  std::memcpy(img.data(), payload, l.voxels * sizeof(float));
  std::memcpy(tgt.data(), payload + l.voxels * sizeof(float), l.voxels * sizeof(Label));
  ParameterRecord rec = record_from_json(std::string(reinterpret_cast<const char*>(json), json_len));
  if (rec.sample_index != l.index)
    throw DataError("stream record: header index " + std::to_string(l.index) + " disagrees with parameter record");
  return {Volume(l.dims, std::move(img)), LabelMap(l.dims, std::move(tgt)), std::move(rec)};
}

[[noreturn]] void truncated() { throw StreamError(StreamError::Kind::truncated, "stream record: truncated"); }

// Returns bytes read; short only at end of stream.
std::size_t read_full(int fd, std::uint8_t* dst, std::size_t n) {
  std::size_t got = 0;
  while (got < n) {
    const ssize_t r = ::read(fd, dst + got, n - got);
    if (r < 0 && errno == EINTR) continue;
    if (r < 0) throw StreamError(StreamError::Kind::io, std::string("stream read: ") + std::strerror(errno));
    if (r == 0) break;
    got += static_cast<std::size_t>(r);
  }
  return got;
}

bool send_all(int fd, const std::uint8_t* p, std::size_t n) {
  while (n > 0) {
    const ssize_t w = ::send(fd, p, n, MSG_NOSIGNAL);
    if (w < 0 && errno == EINTR) continue;
    if (w <= 0) return false;
    p += w;
    n -= static_cast<std::size_t>(w);
  }
  return true;
}

}  // namespace

std::vector<std::uint8_t> encode_record(const TrainingPair& p) {
  const Dims d = p.image.dims();
  if (!(p.target.dims() == d))
    throw DataError("stream record: image " + to_string(d) + " and target " + to_string(p.target.dims()) + " differ");
  const std::string json = record_to_json(p.record);
  if (json.size() > kStreamMaxJson) throw StreamError(StreamError::Kind::length_overflow, "parameter record too long");

  std::vector<std::uint8_t> b;
  b.reserve(kStreamHeaderBytes + p.image.size() * 6 + 4 + json.size());
  b.insert(b.end(), {'S', 'V', 'P', '1'});
  append<std::uint64_t>(b, p.record.sample_index);
  append<std::uint32_t>(b, static_cast<std::uint32_t>(d.nx));
  append<std::uint32_t>(b, static_cast<std::uint32_t>(d.ny));
  append<std::uint32_t>(b, static_cast<std::uint32_t>(d.nz));
  const auto* img = reinterpret_cast<const std::uint8_t*>(p.image.data().data());
  b.insert(b.end(), img, img + p.image.size() * sizeof(float));
  const auto* tgt = reinterpret_cast<const std::uint8_t*>(p.target.data().data());
  b.insert(b.end(), tgt, tgt + p.target.size() * sizeof(Label));
  append<std::uint32_t>(b, static_cast<std::uint32_t>(json.size()));
  b.insert(b.end(), json.begin(), json.end());
  return b;
}

TrainingPair decode_record(std::span<const std::uint8_t> bytes, std::size_t* consumed) {
  if (bytes.size() >= 4 && std::memcmp(bytes.data(), "SVP1", 4) != 0)
    throw StreamError(StreamError::Kind::bad_magic, "stream record: bad magic");
  if (bytes.size() < kStreamHeaderBytes) truncated();
  const Layout l = parse_header(bytes.data());
  const std::size_t pb = payload_bytes(l);
  if (bytes.size() - kStreamHeaderBytes < pb + 4) truncated();
  const std::uint8_t* payload = bytes.data() + kStreamHeaderBytes;
  const std::uint32_t jl = parse_json_len(payload + pb);
  if (bytes.size() - kStreamHeaderBytes - pb - 4 < jl) truncated();
  TrainingPair p = build(l, payload, payload + pb + 4, jl);
  if (consumed) *consumed = kStreamHeaderBytes + pb + 4 + jl;
  return p;
}

void write_record(std::ostream& out, const TrainingPair& p) {
  const auto b = encode_record(p);
  out.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
  if (!out) throw StreamError(StreamError::Kind::io, "stream write failed");
}

std::optional<TrainingPair> read_record(std::istream& in) {
  std::uint8_t h[kStreamHeaderBytes];
  in.read(reinterpret_cast<char*>(h), sizeof h);
  if (in.gcount() == 0) return std::nullopt;
  if (in.gcount() >= 4 && std::memcmp(h, "SVP1", 4) != 0)
    throw StreamError(StreamError::Kind::bad_magic, "stream record: bad magic");
  if (in.gcount() < static_cast<std::streamsize>(sizeof h)) truncated();
  const Layout l = parse_header(h);

  std::vector<std::uint8_t> payload(payload_bytes(l) + 4);
  in.read(reinterpret_cast<char*>(payload.data()), static_cast<std::streamsize>(payload.size()));
  if (in.gcount() < static_cast<std::streamsize>(payload.size())) truncated();
  const std::uint32_t jl = parse_json_len(payload.data() + payload.size() - 4);
  std::vector<std::uint8_t> json(jl);
  in.read(reinterpret_cast<char*>(json.data()), jl);
  if (in.gcount() < static_cast<std::streamsize>(jl)) truncated();
  return build(l, payload.data(), json.data(), jl);
}

std::optional<TrainingPair> read_record(int fd) {
  std::uint8_t h[kStreamHeaderBytes];
  const std::size_t got = read_full(fd, h, sizeof h);
  if (got == 0) return std::nullopt;
  if (got >= 4 && std::memcmp(h, "SVP1", 4) != 0)
    throw StreamError(StreamError::Kind::bad_magic, "stream record: bad magic");
  if (got < sizeof h) truncated();
  const Layout l = parse_header(h);

  std::vector<std::uint8_t> payload(payload_bytes(l) + 4);
  if (read_full(fd, payload.data(), payload.size()) < payload.size()) truncated();
  const std::uint32_t jl = parse_json_len(payload.data() + payload.size() - 4);
  std::vector<std::uint8_t> json(jl);
  if (read_full(fd, json.data(), jl) < jl) truncated();
  return build(l, payload.data(), json.data(), jl);
}

StreamServer::StreamServer(const std::string& host, std::uint16_t port) {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  hints.ai_flags = AI_PASSIVE;
  addrinfo* res = nullptr;
  const std::string service = std::to_string(port);
  if (const int rc = ::getaddrinfo(host.empty() ? nullptr : host.c_str(), service.c_str(), &hints, &res); rc != 0)
    throw StreamError(StreamError::Kind::io, "cannot resolve " + host + ": " + ::gai_strerror(rc));

  std::string err = "no usable address";
  for (addrinfo* a = res; a; a = a->ai_next) {
    const int fd = ::socket(a->ai_family, a->ai_socktype, a->ai_protocol);
    if (fd < 0) continue;
    const int one = 1;
    ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    if (::bind(fd, a->ai_addr, a->ai_addrlen) == 0 && ::listen(fd, 1) == 0) {
      fd_ = fd;
      break;
    }
    err = std::strerror(errno);
    ::close(fd);
  }
  ::freeaddrinfo(res);
  if (fd_ < 0) throw StreamError(StreamError::Kind::io, "cannot listen on " + host + ":" + service + ": " + err);

  sockaddr_storage ss{};
  socklen_t len = sizeof ss;
  ::getsockname(fd_, reinterpret_cast<sockaddr*>(&ss), &len);
  port_ = ntohs(ss.ss_family == AF_INET6 ? reinterpret_cast<sockaddr_in6*>(&ss)->sin6_port
                                         : reinterpret_cast<sockaddr_in*>(&ss)->sin_port);
}

StreamServer::~StreamServer() {
  if (fd_ >= 0) ::close(fd_);
}

std::uint64_t StreamServer::serve(PairStream& src) {
  std::uint64_t sent = 0;
  std::optional<TrainingPair> pending = src.next();
  while (pending) {
    const int client = ::accept(fd_, nullptr, nullptr);
    if (client < 0) {
      if (errno == EINTR) continue;
      throw StreamError(StreamError::Kind::io, std::string("accept: ") + std::strerror(errno));
    }
    while (pending) {
      const auto b = encode_record(*pending);
      if (!send_all(client, b.data(), b.size())) break;  // consumer went away
      ++sent;
      pending = src.next();
    }
    ::close(client);
  }
  return sent;
}

}  // namespace synthmr
