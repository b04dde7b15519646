#pragma once

// Hierarchical deterministic randomness. A SharedRandomness value is a pure
// function of (master_seed, label_path): two processes that derive the same
// labels obtain bit-identical streams no matter what data they have seen.
// Streams are counter-based; there is no shared mutable cursor, so distinct
// labels never desynchronize each other.

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace replin {

namespace detail {

// splitmix64 finalizer (Steele, Lea, Flood 2014).
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t absorb(std::uint64_t key, std::uint64_t v) {
  return mix64(key ^ mix64(v));
}

inline std::uint64_t absorb(std::uint64_t key, std::string_view s) {
  // FNV-1a over the bytes, then mixed into the key.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return absorb(key, h);
}

}  // namespace detail

class SharedRandomness {
 public:
  explicit SharedRandomness(std::uint64_t master_seed)
      : key_(detail::mix64(master_seed)) {}

  // Extends the label path; the returned source is independent of this one.
  SharedRandomness child(std::string_view name) const {
    return SharedRandomness(detail::absorb(key_, name));
  }
  SharedRandomness child(std::string_view name, std::uint64_t index) const {
    return SharedRandomness(detail::absorb(detail::absorb(key_, name), index));
  }

  // i-th word of this source's stream; stateless counter-based generation.
  std::uint64_t word(std::uint64_t index) const {
    return detail::mix64(key_ ^ detail::mix64(index + 1));
  }

  // Uniform double in [0, 1) from the i-th word (53 mantissa bits).
  double uniform(std::uint64_t index) const {
    return static_cast<double>(word(index) >> 11) * 0x1.0p-53;
  }

  std::uint64_t key() const { return key_; }

 private:
  std::uint64_t key_;
};

// Sequential cursor over one SharedRandomness source, for code that consumes
// an a-priori-unknown number of draws (e.g. rollouts). The cursor is local to
// this object; copies advance independently.
class RandomStream {
 public:
  explicit RandomStream(const SharedRandomness& src) : src_(src), next_(0) {}

  std::uint64_t next_word() { return src_.word(next_++); }
  double next_uniform() { return src_.uniform(next_++); }

  double next_uniform(double lo, double hi) {
    return lo + (hi - lo) * next_uniform();
  }

  std::uint64_t cursor() const { return next_; }

 private:
  SharedRandomness src_;
  std::uint64_t next_;
};

}  // namespace replin
