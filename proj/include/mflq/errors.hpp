#pragma once

#include <stdexcept>
#include <string>

namespace mflq {

// Exit codes used by the CLI; library code throws, the CLI maps.
enum class ExitCode : int {
  ok = 0,
  parse_error = 2,
  validation_error = 3,
  non_solvable = 4,
  diverged = 5,
};

class Error : public std::runtime_error {
public:
  Error(ExitCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ExitCode code() const noexcept { return code_; }

private:
  ExitCode code_;
};

class ParseError : public Error {
public:
  explicit ParseError(const std::string& what) : Error(ExitCode::parse_error, what) {}
};

class ValidationError : public Error {
public:
  explicit ValidationError(const std::string& what) : Error(ExitCode::validation_error, what) {}
};

// Riccati blow-up or singular stage matrix: the model is outside the
// solvable regime, reported with the time at which integration failed.
class NonSolvableError : public Error {
public:
  NonSolvableError(const std::string& what, double t)
      : Error(ExitCode::non_solvable, what), time_(t) {}
  double time() const noexcept { return time_; }

private:
  double time_;
};

class DivergenceError : public Error {
public:
  DivergenceError(const std::string& what, double t, long path = -1)
      : Error(ExitCode::diverged, what), time_(t), path_(path) {}
  double time() const noexcept { return time_; }
  long path() const noexcept { return path_; }

private:
  double time_;
  long path_;
};

}  // namespace mflq
