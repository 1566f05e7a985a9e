#pragma once

#include <stdexcept>
#include <string>

namespace hybridscope {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Caller supplied something outside an operation's domain.
class InvalidInput : public Error {
 public:
  using Error::Error;
};

/// Malformed text (layer patterns, policies, config files, CSV).
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t position)
      : Error(what + " (at " + std::to_string(position) + ")"), position_(position) {}

  std::size_t position() const { return position_; }

 private:
  std::size_t position_;
};

/// Corrupt or incompatible binary weight file.
class FormatError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Broken engine invariant; indicates a bug rather than bad input.
class InternalError : public Error {
 public:
  using Error::Error;
};

}  // namespace hybridscope
