#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "core/error.hpp"

namespace esi::binio {

// All on-disk integers and floats are little-endian; this code assumes a
// little-endian host.

class Writer {
 public:
  explicit Writer(const std::string& path) : out_(path, std::ios::binary) {
    if (!out_) raise(ErrorCode::Io, "cannot open for writing: " + path);
    path_ = path;
  }

  void magic(const char tag[4]) { raw(tag, 4); }
  void u32(std::uint32_t v) { raw(&v, sizeof v); }
  void f32(const float* data, std::size_t n) { raw(data, n * sizeof(float)); }
  void f64(const double* data, std::size_t n) { raw(data, n * sizeof(double)); }
  void bytes(const void* data, std::size_t n) { raw(data, n); }

  void finish() {
    out_.flush();
    if (!out_) raise(ErrorCode::Io, "write failed: " + path_);
  }

 private:
  void raw(const void* p, std::size_t n) {
    out_.write(static_cast<const char*>(p), std::streamsize(n));
  }
  std::ofstream out_;
  std::string path_;
};

class Reader {
 public:
  explicit Reader(const std::string& path) : in_(path, std::ios::binary) {
    if (!in_) raise(ErrorCode::Io, "cannot open for reading: " + path);
    path_ = path;
  }

  void expect_magic(const char tag[4]) {
    char got[4] = {};
    raw(got, 4);
    if (std::memcmp(got, tag, 4) != 0)
      raise(ErrorCode::FormatError, "bad magic in " + path_ + ", expected " + std::string(tag, 4));
  }

  std::uint32_t u32() {
    std::uint32_t v = 0;
    raw(&v, sizeof v);
    return v;
  }

  void f32(float* data, std::size_t n) { raw(data, n * sizeof(float)); }
  void f64(double* data, std::size_t n) { raw(data, n * sizeof(double)); }
  void bytes(void* data, std::size_t n) { raw(data, n); }

  std::string str(std::size_t n) {
    std::string s(n, '\0');
    raw(s.data(), n);
    return s;
  }

  bool at_eof() {
    in_.peek();
    return in_.eof();
  }

  const std::string& path() const { return path_; }

 private:
  void raw(void* p, std::size_t n) {
    in_.read(static_cast<char*>(p), std::streamsize(n));
    if (std::size_t(in_.gcount()) != n)
      raise(ErrorCode::FormatError, "truncated file: " + path_);
  }
  std::ifstream in_;
  std::string path_;
};

}  // namespace esi::binio
