#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace adapd {

/// Counter-based 64-bit generator.
///
/// Output n of a stream is a pure function of (seed, label, n): the key is
/// derived by hashing the seed together with the stream label, and each draw
/// is the SplitMix64 finalizer applied to key + (n + 1) * golden_gamma. Two
/// streams with different labels never share state, so adding draws to one
/// component (say, data generation) leaves another (topology) untouched.
///
/// Normal variates use Box-Muller on top of the uniform stream so the
/// sequence does not depend on the standard library's distribution code.
class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::string_view label);

  std::uint64_t next_u64();
  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n).
  std::uint64_t uniform_index(std::uint64_t n);
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  std::uint64_t counter() const { return counter_; }
  std::uint64_t key() const { return key_; }

  /// In-place Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(uniform_index(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  /// k distinct indices from [0, n), in draw order.
  std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k);

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t splitmix64_mix(std::uint64_t z);
std::uint64_t fnv1a64(std::string_view s);

/// Stream labels used by the experiment harness.
namespace streams {
inline constexpr std::string_view kTopology = "topology";
inline constexpr std::string_view kData = "data";
inline constexpr std::string_view kPartition = "data-partition";
inline constexpr std::string_view kNoise = "noise";
inline constexpr std::string_view kInit = "initialization";
inline constexpr std::string_view kMinibatch = "minibatch";
}  // namespace streams

}  // namespace adapd
