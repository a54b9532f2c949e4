#pragma once

#include <cstdint>
#include <random>

namespace viso {

// Seeded random source with platform-independent draws. std::
// uniform_*_distribution output differs across standard libraries, so the
// two draw primitives used by augmentation, dropout and shuffling are
// defined here on top of the raw 64-bit engine.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}
  virtual ~Rng() = default;

  // Uniform integer in [0, n). n must be > 0.
  virtual std::uint64_t index(std::uint64_t n);
  // Uniform double in [0, 1) with 53 bits of precision.
  virtual double unit();

  std::uint64_t next_u64() { return engine_(); }

 private:
  std::mt19937_64 engine_;
};

// SplitMix64 finalizer; used to derive independent sub-seeds.
std::uint64_t mix_seed(std::uint64_t x);
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0);

template <typename Vec>
void shuffle(Vec& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::size_t j = static_cast<std::size_t>(rng.index(i));
    std::swap(v[i - 1], v[j]);
  }
}

}  // namespace viso
