#pragma once

#include <stdexcept>
#include <string>

namespace asrkit {

// Root of every exception thrown by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed text input (manifests, ARPA files, N-best lists).
class ParseError : public Error {
 public:
  using Error::Error;
};

// Binary container with wrong magic, size, or unsupported encoding.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Well-formed input that violates a domain invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Forced alignment requested on a transcript that cannot fit the frames.
class NoPathError : public Error {
 public:
  using Error::Error;
};

}  // namespace asrkit
