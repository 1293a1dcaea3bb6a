// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>

namespace tavlad {

// Violated precondition of a library call (bad shapes, out-of-range index).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Malformed binary or text file. Carries the byte offset where parsing
// stopped.
class FormatError : public std::runtime_error {
 public:
  FormatError(const std::string& what, std::uint64_t offset)
      : std::runtime_error(what + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}

  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::uint64_t offset_;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid user configuration (synthetic spec, CLI flag combinations).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Numerical failure during training or gradient checking.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

template <typename... Args>
std::string concat(const Args&... args) {
  std::ostringstream oss;
  (oss << ... << args);
  return oss.str();
}

}  // namespace detail

#define TAVLAD_REQUIRE(cond, ...)                                              \
  do {                                                                         \
    if (!(cond)) throw ::tavlad::ContractError(::tavlad::detail::concat(__VA_ARGS__)); \
  } while (0)

}  // namespace tavlad
