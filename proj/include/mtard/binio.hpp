#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "mtard/error.hpp"

namespace mtard::binio {

static_assert(std::endian::native == std::endian::little,
              "binary formats are little-endian; add byte swaps before porting");

class Writer {
public:
  explicit Writer(const std::string& path) : out_(path, std::ios::binary | std::ios::trunc) {
    require(out_.good(), ErrorKind::io, "cannot open for writing: " + path);
    path_ = path;
  }

  void bytes(const void* p, std::size_t n) {
    out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
  }
  void u8(std::uint8_t v) { bytes(&v, 1); }
  void u16(std::uint16_t v) { bytes(&v, 2); }
  void u32(std::uint32_t v) { bytes(&v, 4); }
  void u64(std::uint64_t v) { bytes(&v, 8); }
  void i32(std::int32_t v) { bytes(&v, 4); }
  void f64(double v) { bytes(&v, 8); }
  void f32(float v) { bytes(&v, 4); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }

  void close() {
    out_.close();
    require(out_.good(), ErrorKind::io, "write failed: " + path_);
  }

private:
  std::ofstream out_;
  std::string path_;
};

class Reader {
public:
  explicit Reader(const std::string& path) : in_(path, std::ios::binary), path_(path) {
    require(in_.good(), ErrorKind::io, "cannot open for reading: " + path);
  }

  void bytes(void* p, std::size_t n) {
    in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    require(in_.gcount() == static_cast<std::streamsize>(n), ErrorKind::parse,
            "unexpected end of file: " + path_);
  }
  std::uint8_t u8() { std::uint8_t v; bytes(&v, 1); return v; }
  std::uint16_t u16() { std::uint16_t v; bytes(&v, 2); return v; }
  std::uint32_t u32() { std::uint32_t v; bytes(&v, 4); return v; }
  std::uint64_t u64() { std::uint64_t v; bytes(&v, 8); return v; }
  std::int32_t i32() { std::int32_t v; bytes(&v, 4); return v; }
  double f64() { double v; bytes(&v, 8); return v; }
  float f32() { float v; bytes(&v, 4); return v; }
  std::string str() {
    std::uint32_t n = u32();
    require(n <= (1u << 20), ErrorKind::parse, "string length implausible: " + path_);
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
  }

  bool at_eof() { return in_.peek() == std::ifstream::traits_type::eof(); }
  const std::string& path() const { return path_; }

private:
  std::ifstream in_;
  std::string path_;
};

}  // namespace mtard::binio
