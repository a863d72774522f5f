#pragma once

#include <stdexcept>
#include <string>

namespace curator {

/// Runtime failure: bad input data, endpoint errors, validation failures.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A caller broke an operation's precondition (bad parameter, wrong shape).
class ParameterError : public Error {
 public:
  using Error::Error;
};

}  // namespace curator
