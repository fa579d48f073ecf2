#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "citerec/errors.hpp"

namespace citerec {

inline constexpr std::uint64_t kFnvOffset = 14695981039346656037ull;
inline constexpr std::uint64_t kFnvPrime = 1099511628211ull;

// 64-bit FNV-1a, continued from `state`.
constexpr std::uint64_t fnv1a(std::string_view bytes, std::uint64_t state = kFnvOffset) {
  for (unsigned char c : bytes) {
    state ^= c;
    state *= kFnvPrime;
  }
  return state;
}

inline std::string to_hex(std::uint64_t v) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = digits[v & 0xf];
    v >>= 4;
  }
  return out;
}

// Joins two text fields with a single space, skipping empty ones.
inline std::string join_text(std::string_view a, std::string_view b) {
  if (b.empty()) return std::string(a);
  if (a.empty()) return std::string(b);
  std::string out;
  out.reserve(a.size() + b.size() + 1);
  out.append(a).append(" ").append(b);
  return out;
}

// Enum stored by name. Unknown names raise instead of falling back to the
// first enumerator.
template <typename E>
E parse_enum(const nlohmann::json& name, const std::string& what) {
  const E value = name.get<E>();
  if (nlohmann::json(value) != name) throw ValidationError("unknown " + what + " " + name.dump());
  return value;
}

template <typename E>
E enum_field(const nlohmann::json& obj, const char* key, E fallback) {
  auto it = obj.find(key);
  if (it == obj.end()) return fallback;
  return parse_enum<E>(*it, key);
}

// Seeded generator whose derived draws do not depend on the standard library's
// distribution implementations, so trajectories are reproducible across toolchains.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return x % n;
  }

  double normal() {
    // Box-Muller; one draw per call keeps the stream simple.
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

  // Derives an independent stream for a named sub-task.
  Rng fork(std::string_view label) { return Rng(fnv1a(label, next())); }

 private:
  std::mt19937_64 engine_;
};

}  // namespace citerec
