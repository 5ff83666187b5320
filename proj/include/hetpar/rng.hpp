#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace hetpar {

// splitmix64. Fixed constants; identical output stream on every platform.
// State advances by the golden-ratio increment; output is the mixed state.
class SeededRng {
 public:
  explicit SeededRng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ull;
    uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  // Uniform double in [0, 1): top 53 bits scaled by 2^-53.
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Uniform double in (0, 1]; never 0, safe under log().
  double next_double_open() {
    return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
  }

  // Bounded draw in [0, n): high 64 bits of next_u64 * n. One draw per call;
  // the slight modulo bias is irrelevant at these ranges and the mapping is
  // part of the portability contract.
  uint64_t bounded(uint64_t n) {
    unsigned __int128 wide =
        static_cast<unsigned __int128>(next_u64()) * static_cast<unsigned __int128>(n);
    return static_cast<uint64_t>(wide >> 64);
  }

  // Standard normal via Box-Muller; two values per trig pair, one cached.
  double next_gaussian() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = next_double_open();
    double u2 = next_double();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  uint64_t state() const { return state_; }

 private:
  uint64_t state_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

// Fresh generator seeded S + offset (wrapping). The base seed is never
// mutated; every stochastic purpose derives its own scoped stream.
inline SeededRng derived_rng(uint64_t base_seed, uint64_t offset) {
  return SeededRng(base_seed + offset);
}

// Fisher-Yates, descending index, bounded-draw rule above. Fully specified so
// permutations are portable across implementations.
template <class T>
void shuffle(std::vector<T>& a, SeededRng& rng) {
  if (a.size() < 2) return;
  for (size_t i = a.size() - 1; i >= 1; --i) {
    size_t j = static_cast<size_t>(rng.bounded(i + 1));
    T tmp = a[i];
    a[i] = a[j];
    a[j] = tmp;
  }
}

}  // namespace hetpar
