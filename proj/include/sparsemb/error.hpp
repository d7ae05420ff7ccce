#pragma once

#include <stdexcept>
#include <string>

namespace sparsemb {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A parameter lies outside the admissible range of an operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Cubes from different shifted grids were compared.
class GridMismatchError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

class QuadratureError : public Error {
 public:
  using Error::Error;
};

}  // namespace sparsemb
