#pragma once

#include <stdexcept>
#include <string>

namespace ff {

/// Malformed input file (bad JSON, unknown keys in strict mode).
class ParseError : public std::runtime_error {
public:
  explicit ParseError(const std::string& what) : std::runtime_error(what) {}
};

/// Structurally invalid model or request (dangling id, bad phases, bad bases).
class ValidationError : public std::runtime_error {
public:
  explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

/// Numerical failure in a direct solve (singular matrix, non-finite data).
class NumericalError : public std::runtime_error {
public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace ff
