#include "spinorbit/rng.hpp"

namespace spinorbit {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

double CounterRng::uniform(std::uint64_t counter) const {
  std::uint64_t h = splitmix64(seed_ ^ splitmix64(stream_ + 0x632be59bd9b4e019ULL));
  h = splitmix64(h ^ splitmix64(counter));
  return to_unit_double(h);
}

double CounterRng::symmetric(std::uint64_t counter, double half_width) const {
  return half_width * (2.0 * uniform(counter) - 1.0);
}

}  // namespace spinorbit
