#pragma once

#include <stdexcept>
#include <string>

namespace hullft {

// Precondition or argument contract broken by the caller.
class ContractViolation : public std::invalid_argument {
 public:
  explicit ContractViolation(const std::string& what) : std::invalid_argument(what) {}
};

// A file could not be parsed or failed a consistency check.
class FormatError : public std::runtime_error {
 public:
  explicit FormatError(const std::string& what) : std::runtime_error(what) {}
};

// A numerical routine could not produce a trustworthy result.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace hullft
