#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace agefl {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed structure: bad indices, mismatched dimensions, broken matrices.
class StructuralError : public Error {
 public:
  using Error::Error;
};

// A budget, size or other scalar argument is out of its allowed range.
class ParameterError : public Error {
 public:
  using Error::Error;
};

// NaN or infinity produced or supplied where finite values are required.
class NumericalError : public Error {
 public:
  using Error::Error;
};

// Input is well-formed but a derived quantity is undefined (e.g. division by zero).
class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

// A run configuration violates one of its constraints.
class ValidationError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::uint64_t offset)
      : Error(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}

  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::uint64_t offset_;
};

}  // namespace agefl
