#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace lesr {

enum class EntityId : std::uint32_t {};
enum class RelationId : std::uint32_t {};

constexpr std::size_t index(EntityId id) noexcept { return static_cast<std::size_t>(id); }
constexpr std::size_t index(RelationId id) noexcept { return static_cast<std::size_t>(id); }
constexpr EntityId entity(std::size_t i) noexcept { return static_cast<EntityId>(i); }
constexpr RelationId relation(std::size_t i) noexcept { return static_cast<RelationId>(i); }

struct Triple {
  EntityId head{};
  RelationId relation{};
  EntityId tail{};

  friend constexpr bool operator==(const Triple&, const Triple&) = default;
  friend constexpr auto operator<=>(const Triple&, const Triple&) = default;
};

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Logging goes to stderr; tests silence it.
enum class LogLevel { kQuiet, kWarn, kInfo };
void set_log_level(LogLevel level);
LogLevel log_level();
void log_warn(std::string_view message);
void log_info(std::string_view message);

// 64-bit FNV-1a. Used for cache keys and run directories, so it must be
// stable across platforms and standard library versions.
class Fnv1a {
 public:
  Fnv1a& update(std::string_view bytes) noexcept {
    for (unsigned char c : bytes) {
      state_ ^= c;
      state_ *= 0x100000001b3ULL;
    }
    return *this;
  }
  Fnv1a& update_u64(std::uint64_t v) noexcept {
    for (int i = 0; i < 8; ++i) {
      state_ ^= static_cast<unsigned char>(v >> (8 * i));
      state_ *= 0x100000001b3ULL;
    }
    return *this;
  }
  std::uint64_t digest() const noexcept { return state_; }
  std::string hex() const;

 private:
  std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

// Seeded generator with portable index/real draws. std::uniform_*_distribution
// differs between standard libraries; these helpers do not.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  // Uniform in [0, n). n must be > 0.
  std::size_t below(std::size_t n);
  // Uniform in [0, 1).
  double unit() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * unit(); }

  template <typename It>
  void shuffle(It first, It last) {
    const auto n = static_cast<std::size_t>(last - first);
    for (std::size_t i = n; i > 1; --i) {
      std::size_t j = below(i);
      std::swap(first[i - 1], first[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

// Derives an independent stream seed for a named stage.
std::uint64_t derive_seed(std::uint64_t base, std::string_view stage);

}  // namespace lesr
