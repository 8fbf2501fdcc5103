#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace snmt {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes are incompatible with the requested operation.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A value fell outside the domain an operation accepts (NaN input,
/// out-of-range token id, empty sequence, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Input bytes are not well-formed UTF-8.
class EncodingError : public DomainError {
 public:
  EncodingError(const std::string& what, std::size_t byte_offset)
      : DomainError(what), byte_offset_(byte_offset) {}
  std::size_t byte_offset() const { return byte_offset_; }

 private:
  std::size_t byte_offset_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// A file was readable but its contents do not follow the expected layout.
class FormatError : public IoError {
 public:
  using IoError::IoError;
};

/// Training was aborted (divergence, bad gradients).
class TrainingError : public Error {
 public:
  using Error::Error;
};

}  // namespace snmt
