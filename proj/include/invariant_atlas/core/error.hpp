#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace atlas {

class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Thrown by the integrators when the state leaves the finite range.
class IntegrationDiverged : public Error {
public:
  IntegrationDiverged(std::size_t step, const std::string& what)
      : Error(what + " (step " + std::to_string(step) + ")"), step_(step) {}

  std::size_t step() const noexcept { return step_; }

private:
  std::size_t step_;
};

class InvalidArgument : public Error {
public:
  using Error::Error;
};

class NumericalFailure : public Error {
public:
  using Error::Error;
};

class ExtensionFailed : public NumericalFailure {
public:
  using NumericalFailure::NumericalFailure;
};

class ConfigError : public Error {
public:
  using Error::Error;
};

/// A pipeline stage was started before the stage producing its inputs.
class MissingPrerequisite : public Error {
public:
  MissingPrerequisite(const std::string& artifact, const std::string& stage)
      : Error("missing artifact '" + artifact + "'; run stage '" + stage + "' first"),
        stage_(stage) {}

  const std::string& stage() const noexcept { return stage_; }

private:
  std::string stage_;
};

}  // namespace atlas
