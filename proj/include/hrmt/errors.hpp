#pragma once

#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>

namespace hrmt {

/// Base error carrying the module and operation it came from, plus the
/// parameters that were in effect. The CLI serializes these verbatim.
class Error : public std::runtime_error {
 public:
  using Params = std::map<std::string, std::string>;

  Error(std::string module, std::string op, const std::string& message,
        Params params = {})
      : std::runtime_error(message),
        module_(std::move(module)),
        op_(std::move(op)),
        params_(std::move(params)) {}

  const std::string& module() const noexcept { return module_; }
  const std::string& op() const noexcept { return op_; }
  const Params& params() const noexcept { return params_; }

 private:
  std::string module_;
  std::string op_;
  Params params_;
};

/// Argument outside the mathematical domain of an operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Iterative method or quadrature did not reach its tolerance.
class ConvergenceError : public Error {
 public:
  using Error::Error;
};

/// Malformed or unusable input data (files, panels, histograms).
class DataError : public Error {
 public:
  using Error::Error;
};

template <typename T>
std::string to_param(const T& value) {
  std::ostringstream os;
  os.precision(17);
  os << value;
  return os.str();
}

}  // namespace hrmt
