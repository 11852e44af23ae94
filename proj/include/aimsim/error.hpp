#pragma once

#include <stdexcept>
#include <string>

namespace aimsim {

/// Base for every error raised by the simulator.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Model, blob or dataset could not be loaded.
class LoadError : public Error {
 public:
  using Error::Error;
};

/// Invalid argument or configuration (CLI maps this to exit code 2).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Failure while simulating (CLI maps this to exit code 1).
class SimulationError : public Error {
 public:
  using Error::Error;
};

}  // namespace aimsim
