#pragma once

#include <stdexcept>
#include <string>

namespace dag {

// Error taxonomy maps onto CLI exit codes: contract/config -> 1, numerical -> 2.

class ContractError : public std::runtime_error {
public:
  explicit ContractError(const std::string& what) : std::runtime_error(what) {}
};

class ConfigError : public ContractError {
public:
  explicit ConfigError(const std::string& what) : ContractError(what) {}
};

// A trajectory batch paired with the wrong parameter snapshot.
class StaleBatchError : public ContractError {
public:
  explicit StaleBatchError(const std::string& what) : ContractError(what) {}
};

class NumericalError : public std::runtime_error {
public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

// Rollout hit a non-finite state; carries how many reverse steps completed.
class RolloutDivergence : public NumericalError {
public:
  RolloutDivergence(const std::string& what, std::size_t steps_completed)
      : NumericalError(what), steps_completed(steps_completed) {}
  std::size_t steps_completed;
};

}  // namespace dag
