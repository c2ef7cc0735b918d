#pragma once

#include <cstdint>
#include <limits>
#include <string_view>

namespace wag {

/// SplitMix64 bit generator. Cheap to construct, so one can be created per
/// (stream, step, item) triple; this keeps parallel sampling independent of
/// how work is partitioned across threads.
class SplitMix64 {
 public:
  using result_type = std::uint64_t;

  explicit SplitMix64(std::uint64_t state = 0) noexcept : state_(state) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept {
    return std::numeric_limits<result_type>::max();
  }

  result_type operator()() noexcept {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

 private:
  std::uint64_t state_;
};

inline std::uint64_t mix64(std::uint64_t x) noexcept {
  SplitMix64 g(x);
  return g();
}

/// Combine a seed with further counters into a new, well-mixed seed.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a) noexcept {
  return mix64(mix64(seed) ^ (a + 0x632be59bd9b4e019ULL));
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a,
                                 std::uint64_t b) noexcept {
  return derive_seed(derive_seed(seed, a), b);
}

/// Named sub-stream of a master seed (FNV-1a over the name).
inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view name) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : name) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return derive_seed(seed, h);
}

}  // namespace wag
