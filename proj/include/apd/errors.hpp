#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace apd {

// Out-of-domain argument to an operation (negative delay, efficiency > 1, ...).
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A model or profile whose parameters cannot be evaluated (e.g. no jitter anchors).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Division by a vanishing signal probability.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// A QBER target that no distance can reach.
class UnreachableTarget : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Measured data that contradicts the estimator's assumptions.
class InvalidData : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NoPeak : public InvalidData {
 public:
  using InvalidData::InvalidData;
};

class NotFound : public std::runtime_error {
 public:
  NotFound(const std::string& what, std::vector<std::string> available)
      : std::runtime_error(what), available_(std::move(available)) {}
  const std::vector<std::string>& available() const noexcept { return available_; }

 private:
  std::vector<std::string> available_;
};

}  // namespace apd
