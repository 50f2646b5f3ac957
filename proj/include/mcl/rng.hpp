#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace mcl {

// splitmix64 step. Used only to derive independent stream seeds from a root
// seed, so adding a new consumer of randomness never shifts the draws seen
// by existing ones.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ull;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// Deterministic child seed for the stream identified by `salt`.
inline std::uint64_t derive_seed(std::uint64_t root, std::uint64_t salt) {
  std::uint64_t s = salt;
  std::uint64_t mixed = root ^ splitmix64(s);
  return splitmix64(mixed);
}

// Seeded generator with hand-rolled value mappings. The mt19937_64 engine's
// output sequence is fixed by the C++ standard; the distributions in
// <random> are not, so we map raw bits to values ourselves to keep results
// identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t bits() { return eng_(); }

  // Uniform double in [0, 1): top 53 bits scaled down, so every value is an
  // exact dyadic rational.
  double unit() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  double range(double lo, double hi) { return lo + (hi - lo) * unit(); }

  // Uniform integer in [0, n) by fixed-point multiply. Bias is below 2^-53
  // for any n that fits a size_t here, which is irrelevant for data
  // synthesis; what matters is that the mapping is pinned.
  std::uint64_t below(std::uint64_t n) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(eng_()) * n) >> 64);
  }

  long long int_range(long long lo, long long hi_inclusive) {
    return lo + static_cast<long long>(
                    below(static_cast<std::uint64_t>(hi_inclusive - lo + 1)));
  }

  // Fisher-Yates shuffle of 0..n-1.
  std::vector<std::size_t> permutation(std::size_t n) {
    std::vector<std::size_t> p(n);
    for (std::size_t i = 0; i < n; ++i) p[i] = i;
    for (std::size_t i = n; i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(p[i - 1], p[j]);
    }
    return p;
  }

 private:
  std::mt19937_64 eng_;
};

}  // namespace mcl
