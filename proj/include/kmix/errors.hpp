#pragma once

#include <stdexcept>
#include <string>

namespace kmix {

class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Invalid distribution or configuration parameter.
class ParameterError : public Error {
public:
  using Error::Error;
};

// Stick-breaking denominator underflowed; the caller should resample.
class DegenerateSimplexError : public Error {
public:
  using Error::Error;
};

class ShapeError : public Error {
public:
  using Error::Error;
};

class BatchTooSmallError : public Error {
public:
  using Error::Error;
};

class OracleContractError : public Error {
public:
  using Error::Error;
};

class PoolError : public Error {
public:
  using Error::Error;
};

class ConfigError : public Error {
public:
  using Error::Error;
};

// Malformed or truncated input data (binary formats, images, NDJSON rows).
class FormatError : public Error {
public:
  using Error::Error;
};

class TrainingError : public Error {
public:
  using Error::Error;
};

}  // namespace kmix
