#pragma once

#include <stdexcept>
#include <string>

namespace krigamg {

// Malformed input, bad parameters, violated preconditions.
class InputError : public std::invalid_argument {
 public:
  explicit InputError(const std::string& what) : std::invalid_argument(what) {}
};

// A factorization or iteration broke down.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace krigamg
