#pragma once

#include <stdexcept>
#include <string>

namespace abfp {

// Value outside the domain of a numeric primitive (NaN, infinity, bad bitwidth).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Operand shapes do not conform.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Malformed or truncated serialized data.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace abfp
