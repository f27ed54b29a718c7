#ifndef CNPC_ERROR_HPP_
#define CNPC_ERROR_HPP_

#include <stdexcept>
#include <string>

namespace cnpc {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or inconsistent models, circuits, requests. CLI exit code 1.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// File and stream failures. CLI exit code 2.
class IoError : public Error {
 public:
  using Error::Error;
};

// A formula's precondition does not hold for the given world.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

// Enumeration would exceed a hard state-count cap.
class CapExceededError : public Error {
 public:
  using Error::Error;
};

}  // namespace cnpc

#endif  // CNPC_ERROR_HPP_
