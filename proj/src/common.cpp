#include "lesr/common.hpp"

#include <atomic>
#include <cstdio>
#include <iostream>

namespace lesr {

namespace {
std::atomic<LogLevel> g_level{LogLevel::kWarn};
}

void set_log_level(LogLevel level) { g_level.store(level); }
LogLevel log_level() { return g_level.load(); }

void log_warn(std::string_view message) {
  if (g_level.load() >= LogLevel::kWarn) std::clog << "warning: " << message << '\n';
}

void log_info(std::string_view message) {
  if (g_level.load() >= LogLevel::kInfo) std::clog << message << '\n';
}

std::string Fnv1a::hex() const {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(state_));
  return buf;
}

std::size_t Rng::below(std::size_t n) {
  const std::uint64_t bound = n;
  // Reject the incomplete top bucket.
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
  std::uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return static_cast<std::size_t>(x % bound);
}

std::uint64_t derive_seed(std::uint64_t base, std::string_view stage) {
  return Fnv1a{}.update_u64(base).update(stage).digest();
}

}  // namespace lesr
