#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace eshape {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t offset)
      : Error(what + " at offset " + std::to_string(offset)), offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

class UnboundNameError : public Error {
 public:
  explicit UnboundNameError(const std::string& name)
      : Error("unbound name '" + name + "'"), name_(name) {}
  const std::string& name() const noexcept { return name_; }

 private:
  std::string name_;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

class SingularMatrixError : public Error {
 public:
  using Error::Error;
};

class QuadratureError : public Error {
 public:
  using Error::Error;
};

/// A point (or a stencil/segment around it) where the stacked projection
/// system is singular, i.e. outside the validity neighbourhood U.
class OutsideDomainError : public Error {
 public:
  using Error::Error;
};

/// A model file or model object violates one of its invariants.
class ModelError : public Error {
 public:
  using Error::Error;
};

}  // namespace eshape
