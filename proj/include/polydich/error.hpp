#pragma once

#include <stdexcept>
#include <string>

namespace polydich {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid or inconsistent configuration (bad generator params, malformed
/// norm spec, rank-deficient Z basis, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Input does not belong to the required sequence space (tag mismatch,
/// y_1 != 0, x_1 not in Z, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// A certificate violates one of its invariants (non-equivariant
/// projections, incompatible Z dimension, ...).
class CertificateError : public Error {
 public:
  using Error::Error;
};

/// A restricted map that must be invertible is numerically singular.
class SingularError : public Error {
 public:
  using Error::Error;
};

/// Growth-exponent classification found no usable spectral gap.
class GapError : public Error {
 public:
  using Error::Error;
};

}  // namespace polydich
