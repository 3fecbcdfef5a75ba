#pragma once

#include <stdexcept>
#include <string>

namespace deskml {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Shapes that cannot be combined (matmul inner dims, broadcast, layer fan-in).
class DimensionError : public Error {
  public:
    using Error::Error;
};

/// Argument outside the operation's domain (negative rate, invalid distribution, ...).
class DomainError : public Error {
  public:
    using Error::Error;
};

/// Non-finite intermediate values: division by ~0, log of a non-positive value, infinite loss.
class NumericError : public Error {
  public:
    using Error::Error;
};

}  // namespace deskml
