#pragma once

#include <stdexcept>
#include <string>

namespace mwmp {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ParameterError : Error {
  using Error::Error;
};

struct BoundsError : Error {
  using Error::Error;
};

struct DegenerateMapError : Error {
  using Error::Error;
};

struct InvalidGoalError : Error {
  using Error::Error;
};

struct UnreachableError : Error {
  using Error::Error;
};

struct ExtractionError : Error {
  using Error::Error;
};

struct ModelError : Error {
  using Error::Error;
};

struct DivergenceError : Error {
  DivergenceError(const std::string& what, int step_index)
      : Error(what), step(step_index) {}
  int step;
};

struct SolverError : Error {
  explicit SolverError(const std::string& what, int step_index = -1)
      : Error(what), step(step_index) {}
  int step;
};

struct InfeasibleCommandError : Error {
  using Error::Error;
};

struct ScenarioError : Error {
  using Error::Error;
};

struct IoError : Error {
  using Error::Error;
};

}  // namespace mwmp
