#pragma once

#include <stdexcept>
#include <string>

namespace trajnas {

// Common base so callers can catch anything raised by this library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// --- genome ---
class ParseError : public Error {
 public:
  using Error::Error;
};
class SpaceMismatch : public Error {
 public:
  using Error::Error;
};
class NoMutableGene : public Error {
 public:
  using Error::Error;
};

// --- energy ---
class InvalidMetrics : public Error {
 public:
  using Error::Error;
};
class InvalidWeights : public Error {
 public:
  using Error::Error;
};

// --- search ---
class InvalidTemperature : public Error {
 public:
  using Error::Error;
};
// Raised when a candidate evaluation throws; message carries the genome text.
class EvaluatorError : public Error {
 public:
  using Error::Error;
};

// --- surrogate ---
class SpaceTooLarge : public Error {
 public:
  using Error::Error;
};

// --- synthdata / config ---
class InvalidParams : public Error {
 public:
  using Error::Error;
};
class IoError : public Error {
 public:
  using Error::Error;
};
class FormatError : public Error {
 public:
  using Error::Error;
};
class ConfigError : public Error {
 public:
  using Error::Error;
};

// --- metrics ---
class DegenerateTrack : public Error {
 public:
  using Error::Error;
};
class LengthMismatch : public Error {
 public:
  using Error::Error;
};
class UnsortedInput : public Error {
 public:
  using Error::Error;
};

// --- forecaster ---
class NonFiniteLoss : public Error {
 public:
  using Error::Error;
};
class ClockUnavailable : public Error {
 public:
  using Error::Error;
};

}  // namespace trajnas
