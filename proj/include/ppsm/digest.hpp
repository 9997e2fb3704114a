#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace ppsm {

/// Incremental 64-bit FNV-1a. Used for content digests and file checksums,
/// not for anything adversarial.
class Digest {
 public:
  Digest& bytes(const void* data, std::size_t n);
  Digest& u64(std::uint64_t v);
  Digest& f64(double v);
  Digest& f64s(std::span<const double> v);
  Digest& str(std::string_view s);

  std::uint64_t value() const noexcept { return state_; }
  std::string hex() const;

 private:
  std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

std::string to_hex(std::uint64_t v);

}  // namespace ppsm
