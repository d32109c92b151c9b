#pragma once

#include <cstdint>
#include <cstring>
#include <string_view>

namespace blendcast {

// 64-bit FNV-1a. Used for schema fingerprints and cache checksums, where a
// value stable across platforms and runs is required.
class Fnv1a {
 public:
  Fnv1a& bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      state_ ^= p[i];
      state_ *= 0x100000001b3ULL;
    }
    return *this;
  }
  Fnv1a& str(std::string_view s) {
    const std::uint64_t n = s.size();
    bytes(&n, sizeof n);
    return bytes(s.data(), s.size());
  }
  template <typename T>
  Fnv1a& pod(const T& v) {
    return bytes(&v, sizeof v);
  }
  std::uint64_t digest() const { return state_; }

 private:
  std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

}  // namespace blendcast
