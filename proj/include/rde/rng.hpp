#pragma once

#include <cstdint>
#include <cmath>

namespace rde {

// Counter-based generator: every draw is a pure function of (key, counter),
// so parallel consumers can draw in any order and still reproduce bit-identical
// streams.
namespace rng {

constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

constexpr std::uint64_t mix64(std::uint64_t z) {
  z += kGolden;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t combine(std::uint64_t a, std::uint64_t b) {
  return mix64(a ^ (mix64(b) + kGolden + (a << 6) + (a >> 2)));
}

// Stateless draw: uniform in (0,1), never exactly 0 or 1.
inline double uniform(std::uint64_t key, std::uint64_t counter) {
  const std::uint64_t bits = mix64(key ^ mix64(counter + kGolden));
  return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
}

}  // namespace rng

// A stream is identified by (seed, stream index); draws advance a local
// counter.  Copying a stream replays it.
class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::uint64_t stream)
      : key_(rng::combine(seed, stream)), counter_(0) {}

  double uniform() { return rng::uniform(key_, counter_++); }

  // Uniform on (-1, 1).
  double symmetric() { return 2.0 * uniform() - 1.0; }

  double normal() {
    // Box-Muller; the pair partner is cached so counters stay aligned.
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

  std::uint64_t key() const { return key_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace rde
