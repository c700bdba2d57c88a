#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace coalign {

/// Caller violated a precondition (bad dimension, NaN input, non-positive step...).
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Malformed dataset or configuration file.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, int line)
      : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ": " + what : what),
        line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

/// The data do not pin down the pose of one or more targets.
class IdentifiabilityError : public std::runtime_error {
 public:
  IdentifiabilityError(const std::string& what, std::vector<int> targets)
      : std::runtime_error(what), targets_(std::move(targets)) {}
  const std::vector<int>& targets() const { return targets_; }

 private:
  std::vector<int> targets_;
};

}  // namespace coalign
