#ifndef COPSENS_DETAIL_RNG_HPP
#define COPSENS_DETAIL_RNG_HPP

#include <copsens/detail/normal.hpp>

#include <cstdint>
#include <numeric>
#include <utility>
#include <vector>

namespace copsens::detail {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Counter-based generator: the value at (seed, stream, counter) is a pure
/// function of its key, so Monte Carlo loops give identical results no matter
/// how the (row, draw) index space is scheduled.
class CounterRng {
 public:
  explicit constexpr CounterRng(std::uint64_t seed) noexcept : seed_(splitmix64(seed)) {}

  constexpr std::uint64_t bits(std::uint64_t stream, std::uint64_t counter) const noexcept {
    const std::uint64_t s = splitmix64(seed_ ^ splitmix64(stream + 0x632BE59BD9B4E019ULL));
    return splitmix64(s ^ (counter * 0xD1B54A32D192ED03ULL + 0x8CB92BA72F3D8DD7ULL));
  }

  /// Uniform in the open interval (0, 1).
  constexpr double uniform(std::uint64_t stream, std::uint64_t counter) const noexcept {
    return (static_cast<double>(bits(stream, counter) >> 11) + 0.5) * 0x1.0p-53;
  }

  double normal(std::uint64_t stream, std::uint64_t counter) const {
    return norm_quantile(uniform(stream, counter));
  }

 private:
  std::uint64_t seed_;
};

/// Sequential draws from one stream of a CounterRng.
class Stream {
 public:
  Stream(std::uint64_t seed, std::uint64_t stream) : rng_(seed), stream_(stream) {}

  double uniform() { return rng_.uniform(stream_, counter_++); }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal() { return rng_.normal(stream_, counter_++); }
  double normal(double mean, double sd) { return mean + sd * normal(); }

  /// Uniform integer in [0, n).
  std::size_t index(std::size_t n) {
    return static_cast<std::size_t>(uniform() * static_cast<double>(n)) % n;
  }

 private:
  CounterRng rng_;
  std::uint64_t stream_;
  std::uint64_t counter_ = 0;
};

/// Fisher-Yates permutation of 0..n-1.
inline std::vector<std::size_t> permutation(std::size_t n, Stream& stream) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[stream.index(i)]);
  return idx;
}

}  // namespace copsens::detail

#endif  // COPSENS_DETAIL_RNG_HPP
