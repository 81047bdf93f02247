#pragma once

#include <cstdint>
#include <string_view>

namespace pact {

// Counter-based random stream. A draw is a pure function of
// (seed, stream id, draw index), so any consumer can be replayed or
// re-derived independently of evaluation order. Streams are cheap value
// types; derive() spawns an independent child stream with its counter
// reset to zero.
class RngStream {
 public:
  RngStream() = default;
  RngStream(uint64_t seed, uint64_t stream) : seed_(seed), stream_(stream) {}

  static RngStream root(uint64_t seed) { return RngStream(seed, 0); }

  RngStream derive(uint64_t child) const {
    return RngStream(seed_, mix(stream_ ^ mix(child ^ 0x5bf0'3635'dcd8'9715ULL)));
  }
  RngStream derive(std::string_view label) const { return derive(fnv1a(label)); }
  RngStream derive(std::string_view label, uint64_t child) const {
    return derive(label).derive(child);
  }

  uint64_t next_u64() { return mix(mix(seed_ ^ 0x9e37'79b9'7f4a'7c15ULL) ^ mix(stream_) ^ counter_++); }

  // Uniform in [0, 1) with 53 random bits.
  double next_uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  uint64_t seed() const { return seed_; }
  uint64_t stream() const { return stream_; }
  uint64_t counter() const { return counter_; }

 private:
  static uint64_t mix(uint64_t x) {  // splitmix64 finalizer
    x += 0x9e37'79b9'7f4a'7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58'476d'1ce4'e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d0'49bb'1331'11ebULL;
    return x ^ (x >> 31);
  }
  static uint64_t fnv1a(std::string_view s) {
    uint64_t h = 0xcbf2'9ce4'8422'2325ULL;
    for (char c : s) {
      h ^= static_cast<unsigned char>(c);
      h *= 0x0000'0100'0000'01b3ULL;
    }
    return h;
  }

  uint64_t seed_ = 0;
  uint64_t stream_ = 0;
  uint64_t counter_ = 0;
};

}  // namespace pact
