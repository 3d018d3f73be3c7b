#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "reach/errors.hpp"

namespace reach::io {

// Little-endian primitive encoding shared by the dataset and checkpoint formats.

template <typename U>
U to_little(U v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    auto bytes = std::bit_cast<std::array<std::uint8_t, sizeof(U)>>(v);
    std::reverse(bytes.begin(), bytes.end());
    return std::bit_cast<U>(bytes);
  }
}

class Writer {
 public:
  explicit Writer(std::ostream& os) : os_(os) {}

  void bytes(const void* data, std::size_t n) { os_.write(static_cast<const char*>(data), static_cast<std::streamsize>(n)); }
  void u32(std::uint32_t v) { put(v); }
  void u64(std::uint64_t v) { put(v); }
  void f32(float v) { put(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { put(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  template <typename Range>
  void f32s(const Range& values) {
    for (auto v : values) f32(static_cast<float>(v));
  }

 private:
  template <typename U>
  void put(U v) {
    v = to_little(v);
    bytes(&v, sizeof v);
  }
  std::ostream& os_;
};

class Reader {
 public:
  Reader(std::istream& is, std::string what) : is_(is), what_(std::move(what)) {}

  void bytes(void* data, std::size_t n) {
    is_.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(is_.gcount()) != n) {
      throw TruncatedError(what_ + ": truncated payload (needed " + std::to_string(n) + " more bytes)");
    }
  }
  std::uint32_t u32() { return get<std::uint32_t>(); }
  std::uint64_t u64() { return get<std::uint64_t>(); }
  float f32() { return std::bit_cast<float>(get<std::uint32_t>()); }
  double f64() { return std::bit_cast<double>(get<std::uint64_t>()); }
  std::string str(std::size_t max_len = 1 << 16) {
    const auto n = u32();
    if (n > max_len) throw FormatError(what_ + ": string length " + std::to_string(n) + " exceeds limit");
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
  }
  bool at_end() { return is_.peek() == std::char_traits<char>::eof(); }

 private:
  template <typename U>
  U get() {
    U v;
    bytes(&v, sizeof v);
    return to_little(v);
  }
  std::istream& is_;
  std::string what_;
};

}  // namespace reach::io
