#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

#include "charseg/error.hpp"

// Little-endian fixed-width encoding shared by the model and trace files.
namespace charseg::binio {

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

inline void write_u32(std::ostream& os, std::uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

inline void write_u64(std::ostream& os, std::uint64_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

inline void write_f64(std::ostream& os, double v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

inline void write_string(std::ostream& os, const std::string& s) {
  write_u32(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

template <typename T>
T read_pod(std::istream& is, const char* what) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!is) throw InputError(std::string("truncated file while reading ") + what);
  return v;
}

inline std::uint32_t read_u32(std::istream& is, const char* what) {
  return read_pod<std::uint32_t>(is, what);
}
inline std::uint64_t read_u64(std::istream& is, const char* what) {
  return read_pod<std::uint64_t>(is, what);
}
inline double read_f64(std::istream& is, const char* what) {
  return read_pod<double>(is, what);
}

inline std::string read_string(std::istream& is, const char* what) {
  const auto n = read_u32(is, what);
  std::string s(n, '\0');
  is.read(s.data(), n);
  if (!is) throw InputError(std::string("truncated file while reading ") + what);
  return s;
}

inline void expect_magic(std::istream& is, std::string_view magic) {
  std::string got(magic.size(), '\0');
  is.read(got.data(), static_cast<std::streamsize>(got.size()));
  if (!is || got != magic) {
    throw InputError("bad magic: expected " + std::string(magic.substr(0, magic.size() - 1)));
  }
}

}  // namespace charseg::binio
