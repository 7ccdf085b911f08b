#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace adapd {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidTopologyError : public Error {
 public:
  using Error::Error;
};

/// Random graph generation could not produce a connected graph.
class TopologyGenerationError : public Error {
 public:
  TopologyGenerationError(const std::string& what, int attempts)
      : Error(what + " (after " + std::to_string(attempts) + " attempts)"),
        attempts_(attempts) {}
  int attempts() const { return attempts_; }

 private:
  int attempts_;
};

class InvalidParameterError : public Error {
 public:
  using Error::Error;
};

/// Spectral gap at (or numerically indistinguishable from) one.
class DegenerateSpectrumError : public Error {
 public:
  using Error::Error;
};

class InvalidPartitionError : public Error {
 public:
  using Error::Error;
};

class DimensionMismatchError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line, std::size_t column)
      : Error("line " + std::to_string(line) + ", column " +
              std::to_string(column) + ": " + what),
        line_(line),
        column_(column) {}
  std::size_t line() const { return line_; }
  std::size_t column() const { return column_; }

 private:
  std::size_t line_;
  std::size_t column_;
};

class LabelDomainError : public ParseError {
 public:
  using ParseError::ParseError;
};

/// Local subproblem tolerance not reached within the inner iteration cap.
class InexactnessError : public Error {
 public:
  InexactnessError(const std::string& what, double best_residual_sq)
      : Error(what), best_residual_sq_(best_residual_sq) {}
  double best_residual_sq() const { return best_residual_sq_; }

 private:
  double best_residual_sq_;
};

/// Iterates became non-finite or exceeded the divergence threshold.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, long iteration)
      : Error(what + " at iteration " + std::to_string(iteration)),
        iteration_(iteration) {}
  long iteration() const { return iteration_; }

 private:
  long iteration_;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class DataError : public Error {
 public:
  using Error::Error;
};

class GridExhaustedError : public Error {
 public:
  using Error::Error;
};

}  // namespace adapd
