#pragma once

#include <stdexcept>
#include <string>

namespace mixbart {

// Each category maps onto one CLI exit code (see tools/).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad configuration: unknown keys, invalid hyperparameters, infeasible grids.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed or inconsistent input data (schema, region ids, adjacency).
class DataError : public Error {
 public:
  using Error::Error;
};

// Factorization failures, NaN in the linear predictor, etc.
class NumericalError : public Error {
 public:
  using Error::Error;
};

// Distribution parameters outside their support.
class DomainError : public Error {
 public:
  using Error::Error;
};

}  // namespace mixbart
