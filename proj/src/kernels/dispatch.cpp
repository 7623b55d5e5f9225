#include <atomic>
#include <cstdlib>
#include <string>

#include "impl.hpp"
#include "synthmr/error.hpp"

namespace synthmr::kernels {

#ifndef SYNTHMR_BUILD_AVX2
namespace detail {
const KernelTable* avx2_table() { return nullptr; }
}  // namespace detail
#endif

namespace {

bool cpu_has_avx2() {
#if defined(__x86_64__) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Backend initial_backend() {
  if (const char* env = std::getenv("SYNTHMR_SIMD"); env && std::string(env) == "scalar") return Backend::scalar;
  return supported(Backend::avx2) ? Backend::avx2 : Backend::scalar;
}

std::atomic<Backend>& current() {
  static std::atomic<Backend> b{initial_backend()};
  return b;
}

}  // namespace

std::string_view name(Backend b) { return b == Backend::avx2 ? "avx2" : "scalar"; }

bool supported(Backend b) {
  if (b == Backend::scalar) return true;
  static const bool avx2 = detail::avx2_table() != nullptr && cpu_has_avx2();
  return avx2;
}

const KernelTable& table(Backend b) {
  if (!supported(b)) throw ParameterError("kernel backend not available: " + std::string(name(b)));
  return b == Backend::avx2 ? *detail::avx2_table() : detail::scalar_table();
}

Backend active_backend() { return current().load(std::memory_order_relaxed); }

const KernelTable& active() {
  return active_backend() == Backend::avx2 ? *detail::avx2_table() : detail::scalar_table();
}

void set_backend(Backend b) {
  if (!supported(b)) throw ParameterError("kernel backend not available: " + std::string(name(b)));
  current().store(b, std::memory_order_relaxed);
}

}  // namespace synthmr::kernels
