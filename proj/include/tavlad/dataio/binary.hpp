// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <string_view>
#include <vector>

#include "tavlad/error.hpp"

// Little-endian byte encoding shared by the TAVF, TAVW and TAVC formats.
namespace tavlad::io {

class ByteWriter {
 public:
  void bytes(std::string_view s) { buf_.insert(buf_.end(), s.begin(), s.end()); }

  void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }

  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
  }

  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
  }

  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

  const std::vector<char>& buffer() const noexcept { return buf_; }

  void save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    out.write(buf_.data(), static_cast<std::streamsize>(buf_.size()));
    if (!out) throw IoError("write failed: " + path.string());
  }

 private:
  std::vector<char> buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::vector<char> data, std::string source = {})
      : data_(std::move(data)), source_(std::move(source)) {}

  static ByteReader open(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open for reading: " + path.string());
    std::vector<char> data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return ByteReader(std::move(data), path.string());
  }

  std::uint64_t offset() const noexcept { return pos_; }
  std::uint64_t size() const noexcept { return data_.size(); }
  std::uint64_t remaining() const noexcept { return data_.size() - pos_; }

  void expect_magic(std::string_view magic) {
    need(magic.size(), "magic");
    if (std::memcmp(data_.data() + pos_, magic.data(), magic.size()) != 0)
      fail("bad magic, expected \"" + std::string(magic) + "\"");
    pos_ += magic.size();
  }

  void expect_version(std::uint32_t expected) {
    const std::uint64_t at = pos_;
    const std::uint32_t v = u32();
    if (v != expected)
      throw FormatError(prefix() + "unsupported version " + std::to_string(v) + ", expected " +
                            std::to_string(expected),
                        at);
  }

  std::uint8_t u8() {
    need(1, "u8");
    return static_cast<std::uint8_t>(data_[pos_++]);
  }

  std::uint32_t u32() {
    need(4, "u32");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }

  std::uint64_t u64() {
    need(8, "u64");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    pos_ += 8;
    return v;
  }

  float f32() { return std::bit_cast<float>(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }

  std::string string(std::size_t n) {
    need(n, "string");
    std::string s(data_.data() + pos_, n);
    pos_ += n;
    return s;
  }

  // Checks that `n` more bytes exist before a bulk read.
  void need(std::uint64_t n, std::string_view what) const {
    if (remaining() < n)
      throw FormatError(prefix() + "truncated " + std::string(what) + ": expected " +
                            std::to_string(n) + " bytes, found " + std::to_string(remaining()),
                        pos_);
  }

  void expect_end() const {
    if (remaining() != 0)
      throw FormatError(prefix() + std::to_string(remaining()) + " trailing bytes", pos_);
  }

  [[noreturn]] void fail(const std::string& msg) const { throw FormatError(prefix() + msg, pos_); }

 private:
  std::string prefix() const { return source_.empty() ? std::string() : source_ + ": "; }

  std::vector<char> data_;
  std::string source_;
  std::uint64_t pos_ = 0;
};

}  // namespace tavlad::io
