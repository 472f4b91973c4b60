#pragma once

#include <cstdint>
#include <cstddef>
#include <stdexcept>
#include <string>

namespace tinybit {

/// Base class for everything this library throws.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor shape disagreement (rank, dims, element counts).
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Invalid model / schedule / pipeline configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Argument outside its documented range (e.g. epoch index).
class RangeError : public Error {
 public:
  using Error::Error;
};

/// Malformed input bytes (PPM header, checkpoint framing, JSON config).
class ParseError : public Error {
 public:
  using Error::Error;
};

/// Filesystem failure; the message names the offending path.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Dataset-level problem (empty root, empty class directory).
class DatasetError : public Error {
 public:
  using Error::Error;
};

/// NaN or Inf reached a place the contracts forbid.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Parameter/gradient/velocity registries disagree on keys.
class RegistryError : public Error {
 public:
  using Error::Error;
};

/// Checkpoint payload failed its CRC32 check.
class IntegrityError : public Error {
 public:
  using Error::Error;
};

/// Checkpoint format version is not the one this build reads.
class VersionError : public Error {
 public:
  using Error::Error;
};

/// Bad request to a verification tool (unknown layer name, bad flag).
class UsageError : public Error {
 public:
  using Error::Error;
};

namespace detail {

inline const std::uint32_t* crc32_table() {
  static const auto table = [] {
    static std::uint32_t t[256];
    for (std::uint32_t i = 0; i < 256; ++i) {
      std::uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1u) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  return table;
}

}  // namespace detail

/// Streaming CRC-32 (IEEE 802.3 polynomial, the zlib convention).
class Crc32 {
 public:
  void update(const void* bytes, std::size_t len) {
    const auto* p = static_cast<const unsigned char*>(bytes);
    const std::uint32_t* table = detail::crc32_table();
    for (std::size_t i = 0; i < len; ++i)
      state_ = table[(state_ ^ p[i]) & 0xFFu] ^ (state_ >> 8);
  }
  std::uint32_t value() const { return state_ ^ 0xFFFFFFFFu; }

 private:
  std::uint32_t state_ = 0xFFFFFFFFu;
};

inline std::uint32_t crc32(const void* bytes, std::size_t len) {
  Crc32 crc;
  crc.update(bytes, len);
  return crc.value();
}

}  // namespace tinybit
