#include "ppsm/digest.hpp"

#include <bit>
#include <cstdio>

namespace ppsm {

Digest& Digest::bytes(const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    state_ ^= p[i];
    state_ *= 0x100000001b3ULL;
  }
  return *this;
}

Digest& Digest::u64(std::uint64_t v) {
  // Fixed little-endian byte order keeps digests portable.
  unsigned char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
  return bytes(buf, 8);
}

Digest& Digest::f64(double v) { return u64(std::bit_cast<std::uint64_t>(v)); }

Digest& Digest::f64s(std::span<const double> v) {
  u64(v.size());
  for (double x : v) f64(x);
  return *this;
}

Digest& Digest::str(std::string_view s) {
  u64(s.size());
  return bytes(s.data(), s.size());
}

std::string Digest::hex() const { return to_hex(state_); }

std::string to_hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace ppsm
