#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace fact {

// Deterministic random source. mt19937_64 output is fixed by the standard;
// all samplers are implemented explicitly on top of the raw 64-bit stream so
// results are bit-identical across standard library implementations
// (std::uniform_int_distribution and friends are not portable).
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}

  uint64_t next_u64() { return engine_(); }

  // Uniform integer in [0, bound). Rejection sampling, unbiased.
  uint64_t uniform(uint64_t bound);

  // Uniform double in [0, 1) with 53 bits of precision.
  double uniform_real();

  // Uniform double in [lo, hi).
  double uniform_real(double lo, double hi);

  // Standard normal via Box-Muller (one value per call, no caching, so the
  // stream position is a pure function of the call count).
  double normal();

  // Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(uniform(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

// Mixes a base seed with stream tags (round, client index, stage, ...) into an
// independent stream seed. Lets logically-parallel consumers draw from
// unrelated streams regardless of execution order.
uint64_t derive_seed(uint64_t base, uint64_t a = 0, uint64_t b = 0, uint64_t c = 0);

}  // namespace fact
