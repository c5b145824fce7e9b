#ifndef ICR_ERRORS_HPP
#define ICR_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace icr {

/// Base of all errors raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed arguments: negative distances, wrong latent shapes, bad sizes.
class InputError : public Error {
 public:
  using Error::Error;
};

/// Refinement hierarchy cannot be built as requested.
class SpecError : public Error {
 public:
  using Error::Error;
};

/// A symmetric factorization failed even after jitter.
class FactorizationError : public Error {
 public:
  using Error::Error;
};

/// Overflow or non-finite values encountered while evaluating.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// A dense oracle was asked to materialize a matrix beyond its guard.
class SizeError : public Error {
 public:
  using Error::Error;
};

/// Output could not be written or an input file could not be read.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace icr

#endif  // ICR_ERRORS_HPP
