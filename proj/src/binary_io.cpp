#include "efflex/binary_io.hpp"

#include "efflex/errors.hpp"

#include <bit>
#include <cstring>
#include <iterator>

namespace efflex::io {

static_assert(std::endian::native == std::endian::little,
              "artifact formats assume a little-endian host");

Writer::Writer(const std::filesystem::path& path)
    : path_(path), out_(path, std::ios::binary | std::ios::trunc) {
  if (!out_) throw IoError("cannot open for writing: " + path.string());
}

void Writer::magic(std::string_view tag) { bytes(tag.data(), tag.size()); }
void Writer::u8(std::uint8_t v) { bytes(&v, 1); }
void Writer::u32(std::uint32_t v) { bytes(&v, sizeof v); }
void Writer::u64(std::uint64_t v) { bytes(&v, sizeof v); }
void Writer::f64(double v) { bytes(&v, sizeof v); }

void Writer::bytes(const void* data, std::size_t n) {
  out_.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
}

void Writer::string(std::string_view s) {
  u32(static_cast<std::uint32_t>(s.size()));
  bytes(s.data(), s.size());
}

void Writer::finish() {
  out_.flush();
  if (!out_) throw IoError("write failed: " + path_.string());
  out_.close();
}

Reader::Reader(const std::filesystem::path& path) : path_(path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path.string());
  buf_.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void Reader::need(std::size_t n) {
  if (buf_.size() - pos_ < n)
    throw FormatError("truncated file: " + path_.string());
}

void Reader::expect_magic(std::string_view tag) {
  need(tag.size());
  std::string_view got(buf_.data() + pos_, tag.size());
  if (got != tag) {
    auto family = tag.substr(0, tag.size() - 1);
    if (got.substr(0, family.size()) == family)
      throw FormatError("unsupported version '" + std::string(got) + "' in " + path_.string() +
                        " (expected '" + std::string(tag) + "')");
    throw FormatError("bad magic in " + path_.string());
  }
  pos_ += tag.size();
}

std::uint8_t Reader::u8() {
  std::uint8_t v;
  bytes(&v, 1);
  return v;
}
std::uint32_t Reader::u32() {
  std::uint32_t v;
  bytes(&v, sizeof v);
  return v;
}
std::uint64_t Reader::u64() {
  std::uint64_t v;
  bytes(&v, sizeof v);
  return v;
}
double Reader::f64() {
  double v;
  bytes(&v, sizeof v);
  return v;
}

void Reader::bytes(void* data, std::size_t n) {
  need(n);
  std::memcpy(data, buf_.data() + pos_, n);
  pos_ += n;
}

std::string Reader::string() {
  auto n = u32();
  need(n);
  std::string s = buf_.substr(pos_, n);
  pos_ += n;
  return s;
}

void Reader::expect_end() {
  if (pos_ != buf_.size()) throw FormatError("trailing bytes in " + path_.string());
}

} // namespace efflex::io
