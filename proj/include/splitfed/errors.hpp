#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace splitfed {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor dimensions disagree with what an operation requires.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Values are well-shaped but semantically invalid (non-binary masks, bad ranges).
class ValidationError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed file or buffer contents. `offset` is the byte position where
// parsing stopped.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::size_t offset)
      : Error(what + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

// Buffer ended before a field was complete.
class TruncatedError : public FormatError {
 public:
  TruncatedError(std::size_t offset, std::size_t needed)
      : FormatError("truncated input, " + std::to_string(needed) +
                        " more byte(s) needed",
                    offset),
        needed_(needed) {}
  std::size_t needed() const noexcept { return needed_; }

 private:
  std::size_t needed_;
};

class UnsupportedVersionError : public FormatError {
 public:
  using FormatError::FormatError;
};

// Transport failures: refused connections, resets, mid-frame closes.
class ConnectionError : public Error {
 public:
  using Error::Error;
};

// A well-formed ERROR reply from the peer.
class RemoteError : public Error {
 public:
  RemoteError(std::uint16_t code, const std::string& message)
      : Error("remote error " + std::to_string(code) + ": " + message),
        code_(code) {}
  std::uint16_t code() const noexcept { return code_; }

 private:
  std::uint16_t code_;
};

}  // namespace splitfed
