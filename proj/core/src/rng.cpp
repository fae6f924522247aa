#include "fact/rng.hpp"

#include <cmath>
#include <numbers>

#include "fact/errors.hpp"

namespace fact {

uint64_t Rng::uniform(uint64_t bound) {
  if (bound == 0) throw InputError("Rng::uniform: bound must be positive");
  // Reject the tail that would bias the modulo.
  const uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
  uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return x % bound;
}

double Rng::uniform_real() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double Rng::uniform_real(double lo, double hi) {
  return lo + (hi - lo) * uniform_real();
}

double Rng::normal() {
  // Box-Muller, discarding the second variate. u1 in (0,1] to keep log finite.
  double u1 = 1.0 - uniform_real();
  double u2 = uniform_real();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

namespace {
uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}
}  // namespace

uint64_t derive_seed(uint64_t base, uint64_t a, uint64_t b, uint64_t c) {
  uint64_t h = splitmix64(base);
  h = splitmix64(h ^ (a + 0x9e3779b97f4a7c15ULL));
  h = splitmix64(h ^ (b + 0x7f4a7c159e3779b9ULL));
  h = splitmix64(h ^ (c + 0x133111eb94d049bbULL));
  return h;
}

}  // namespace fact
