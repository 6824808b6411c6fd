#pragma once

#include <stdexcept>
#include <string>

namespace meshtrack {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or truncated input file, or an unparsable config.
class FormatError : public Error {
 public:
  using Error::Error;
};

class EmptySilhouetteError : public Error {
 public:
  using Error::Error;
};

/// Reference mesh generation could not produce a mesh (silhouette too small).
class GenerationError : public Error {
 public:
  using Error::Error;
};

class ScenarioError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Non-finite vertex positions during deformation.
class NumericalError : public Error {
 public:
  NumericalError(const std::string& what, int iteration)
      : Error(what), iteration_(iteration) {}

  int iteration() const { return iteration_; }

 private:
  int iteration_;
};

}  // namespace meshtrack
