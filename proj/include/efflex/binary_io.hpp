#pragma once

// Little-endian stream helpers shared by the artifact file formats.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>

namespace efflex::io {

class Writer {
public:
  explicit Writer(const std::filesystem::path& path);

  void magic(std::string_view tag);
  void u8(std::uint8_t v);
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void f64(double v);
  void bytes(const void* data, std::size_t n);
  void string(std::string_view s);

  /// Flushes and throws IoError if any write failed.
  void finish();

private:
  std::filesystem::path path_;
  std::ofstream out_;
};

class Reader {
public:
  explicit Reader(const std::filesystem::path& path);

  /// Checks a 7-byte tag such as "EFLXDS1". A matching family prefix with a
  /// different trailing version digit is reported as a version mismatch.
  void expect_magic(std::string_view tag);
  std::uint8_t u8();
  std::uint32_t u32();
  std::uint64_t u64();
  double f64();
  void bytes(void* data, std::size_t n);
  std::string string();

  std::size_t remaining() const { return buf_.size() - pos_; }
  /// Throws FormatError unless at least n bytes remain.
  void need(std::size_t n);

  /// Throws FormatError if unread bytes remain.
  void expect_end();

private:
  std::filesystem::path path_;
  std::string buf_;
  std::size_t pos_ = 0;
};

} // namespace efflex::io
