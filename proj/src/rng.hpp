#pragma once

#include <bit>
#include <cstdint>
#include <vector>

namespace dipce {

// splitmix64 finalizer; also used to expand seeds into generator state.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Pure function of (base, key); substream seeds and per-cell seeds hang off it.
constexpr std::uint64_t derive_seed(std::uint64_t base, std::uint64_t key) {
  return mix64(base ^ mix64(key ^ 0xd1b54a32d192ed03ULL));
}

inline std::uint64_t double_key(double v) { return std::bit_cast<std::uint64_t>(v); }

// xoshiro256++ with explicit seeding. The std distributions are not pinned down
// by the standard, so uniform doubles and bounded ints are produced by hand to
// keep every artifact reproducible from a seed alone.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : seed_(seed) {
    std::uint64_t x = seed;
    for (auto& word : state_) {
      x = mix64(x);
      word = x;
    }
  }

  std::uint64_t seed() const { return seed_; }

  RngStream substream(std::uint64_t key) const {
    return RngStream(derive_seed(seed_, key));
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  // Uniform in [0, 1), 53 random bits.
  double next_double() { return double(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform in [low, high).
  double next_range(double low, double high) {
    return low + (high - low) * next_double();
  }

  // Unbiased uniform in [0, bound); rejection over the wrap-around residue.
  std::uint64_t next_below(std::uint64_t bound) {
    const std::uint64_t threshold = (-bound) % bound;
    for (;;) {
      const std::uint64_t r = next_u64();
      if (r >= threshold) return r % bound;
    }
  }

  int next_int(int bound) { return int(next_below(std::uint64_t(bound))); }

  // Fisher-Yates.
  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = next_below(i);
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  static constexpr std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }

  std::uint64_t seed_;
  std::uint64_t state_[4];
};

}  // namespace dipce
