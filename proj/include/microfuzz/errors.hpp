#pragma once

#include <stdexcept>
#include <string>

namespace microfuzz {

// Base class for every error this library raises on purpose.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A descriptor is malformed or a named reference does not resolve.
class DescriptorError : public Error {
 public:
  using Error::Error;
};

// Serialized bytes cannot be parsed back into a value.
class DecodeError : public Error {
 public:
  using Error::Error;
};

// A decoded or supplied value does not conform to the expected descriptor.
class ConformanceError : public Error {
 public:
  using Error::Error;
};

// No terminating instantiation exists within the configured depth budget.
class InstantiationError : public Error {
 public:
  using Error::Error;
};

// Invalid campaign, registry, or CLI configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Environment self-check failed at startup (clock calibration, probes).
class StartupError : public Error {
 public:
  using Error::Error;
};

// Measurement harness misuse (missing context state, bad target id).
class HarnessError : public Error {
 public:
  using Error::Error;
};

// Raised by corpus targets for rejected inputs; recorded, never fatal.
class TargetError : public Error {
 public:
  using Error::Error;
};

}  // namespace microfuzz
