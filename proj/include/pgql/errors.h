#ifndef PGQL_ERRORS_H_
#define PGQL_ERRORS_H_

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace pgql {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Table or tensor shapes disagree with the MDP they are used with.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Argument outside its mathematical domain (alpha <= 0, eta > 1, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

// Malformed environment or MDP description.
class SpecError : public Error {
 public:
  using Error::Error;
};

// Undiscounted visit counts requested for a chain that is not absorbing.
class NonEpisodicError : public Error {
 public:
  using Error::Error;
};

class EpisodeFinishedError : public Error {
 public:
  using Error::Error;
};

class EmptyInputError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  ConfigError(std::string field, const std::string& message)
      : Error(field + ": " + message), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

class NotConvergedError : public Error {
 public:
  NotConvergedError(const std::string& message, std::vector<double> history)
      : Error(message), residual_history_(std::move(history)) {}
  const std::vector<double>& residual_history() const {
    return residual_history_;
  }

 private:
  std::vector<double> residual_history_;
};

}  // namespace pgql

#endif  // PGQL_ERRORS_H_
