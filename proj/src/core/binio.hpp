#pragma once

// Little-endian binary stream helpers shared by the checkpoint and index formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

#include "gmtl/error.hpp"

namespace gmtl::binio {

template <typename T>
T to_little(T value) {
  if constexpr (std::endian::native == std::endian::big) {
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, &value, sizeof(T));
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(bytes[i], bytes[sizeof(T) - 1 - i]);
    std::memcpy(&value, bytes, sizeof(T));
  }
  return value;
}

template <typename T>
void put(std::ostream& out, T value) {
  value = to_little(value);
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

inline void put_f64(std::ostream& out, double value) {
  put(out, std::bit_cast<std::uint64_t>(value));
}

inline void put_string(std::ostream& out, const std::string& s) {
  put(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

template <typename T>
T get(std::istream& in, const char* what) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) fail(ErrorCode::kFormat, std::string("truncated file while reading ") + what);
  return to_little(value);
}

inline double get_f64(std::istream& in, const char* what) {
  return std::bit_cast<double>(get<std::uint64_t>(in, what));
}

inline std::string get_string(std::istream& in, const char* what, std::size_t limit = 1u << 20) {
  const auto n = get<std::uint32_t>(in, what);
  if (n > limit) fail(ErrorCode::kFormat, std::string("implausible length for ") + what);
  std::string s(n, '\0');
  in.read(s.data(), n);
  if (!in) fail(ErrorCode::kFormat, std::string("truncated file while reading ") + what);
  return s;
}

}  // namespace gmtl::binio
