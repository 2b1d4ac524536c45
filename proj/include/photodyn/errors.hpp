#pragma once

#include <stdexcept>
#include <string>

namespace photodyn {

// Precondition violations use std::invalid_argument directly. The types below
// mark failures that callers are expected to handle (and the CLI maps onto
// exit codes).

class InsufficientData : public std::runtime_error {
 public:
  explicit InsufficientData(const std::string& what) : std::runtime_error(what) {}
};

class FitFailed : public std::runtime_error {
 public:
  explicit FitFailed(const std::string& what) : std::runtime_error(what) {}
};

class AnalysisFailed : public std::runtime_error {
 public:
  explicit AnalysisFailed(const std::string& what) : std::runtime_error(what) {}
};

class CapExceeded : public std::runtime_error {
 public:
  explicit CapExceeded(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace photodyn
