#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace bsb {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed expression or problem text. `offset()` is a byte offset into the
/// offending string (or into the file for structured input).
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t offset)
      : Error(what + " (at byte " + std::to_string(offset) + ")"), offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

/// Evaluation left the domain of an elementary function (x/0, sqrt(-1), overflow).
class DomainError : public Error {
 public:
  using Error::Error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

/// The strengthened generalised Legendre condition F101 > tol failed where it
/// was required (singular feedback, singular flow, second-variation data).
class SGLCViolated : public Error {
 public:
  using Error::Error;
};

/// The adaptive integrator could not make progress.
class StepFailure : public Error {
 public:
  using Error::Error;
};
using IntegrationFailure = StepFailure;

class NoConvergence : public Error {
 public:
  using Error::Error;
};

class SingularJacobian : public Error {
 public:
  using Error::Error;
};

/// An iterate left the admissible region 0 < tau1 < tau2 < T.
class StructureBroken : public Error {
 public:
  using Error::Error;
};

class RankDeficientConstraints : public Error {
 public:
  using Error::Error;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

class IOError : public Error {
 public:
  using Error::Error;
};

}  // namespace bsb
