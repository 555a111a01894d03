#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace dilskit {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A diagram (or soft wiring) broke one of the structural rules.
class InvalidDiagram : public Error {
 public:
  InvalidDiagram(const std::string& what, std::vector<std::string> details)
      : Error(what), details_(std::move(details)) {}
  const std::vector<std::string>& details() const noexcept { return details_; }

 private:
  std::vector<std::string> details_;
};

// Unknown slot, interface mismatch, or a wire loop closed entirely through
// pass-through wires.
class CompositionError : public Error {
 public:
  using Error::Error;
};

class CycleError : public Error {
 public:
  CycleError(const std::string& what, std::vector<std::string> cycle)
      : Error(what), cycle_(std::move(cycle)) {}
  const std::vector<std::string>& cycle() const noexcept { return cycle_; }

 private:
  std::vector<std::string> cycle_;
};

// Arity, kind, or horizon mismatch between data and a system/network.
class ShapeError : public Error {
 public:
  using Error::Error;
};

class NonFiniteError : public Error {
 public:
  NonFiniteError(const std::string& what, double time, std::string port)
      : Error(what), time_(time), port_(std::move(port)) {}
  double time() const noexcept { return time_; }
  const std::string& port() const noexcept { return port_; }

 private:
  double time_;
  std::string port_;
};

// backward() called without a matching forward().
class StaleCache : public Error {
 public:
  using Error::Error;
};

class UnknownName : public Error {
 public:
  using Error::Error;
};

// A file could not be read or written.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace dilskit
