#pragma once

#include <cstddef>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace npi {

/// Broad failure categories. The CLI maps each one to a distinct exit code.
enum class ErrorKind {
  invalid_argument,
  shape_mismatch,
  validation,
  io,
  divergence,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::invalid_argument: return "invalid_argument";
    case ErrorKind::shape_mismatch: return "shape_mismatch";
    case ErrorKind::validation: return "validation";
    case ErrorKind::io: return "io";
    case ErrorKind::divergence: return "divergence";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Raised when a state component stops being finite during integration.
class IntegrationDivergence : public Error {
 public:
  IntegrationDivergence(std::size_t node, std::size_t step)
      : Error(ErrorKind::divergence, "integration diverged at node " + std::to_string(node) +
                                         ", step " + std::to_string(step)),
        node_(node),
        step_(step) {}
  std::size_t node() const noexcept { return node_; }
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t node_;
  std::size_t step_;
};

inline std::string shape_str(const std::vector<std::size_t>& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

[[noreturn]] inline void fail(ErrorKind kind, const std::string& msg) { throw Error(kind, msg); }

inline void require(bool cond, ErrorKind kind, const std::string& msg) {
  if (!cond) fail(kind, msg);
}

}  // namespace npi
