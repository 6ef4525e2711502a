#pragma once

#include <cstddef>
#include <cstdio>
#include <stdexcept>
#include <string>

namespace crfwi {

// Malformed grid / gather / checkpoint files.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Field went non-finite during time stepping.
class NumericBlowup : public std::runtime_error {
 public:
  NumericBlowup(const std::string& what, std::size_t step)
      : std::runtime_error(what), step_(step) {}
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

// A memory/work guard refused the request. `required` is the budget that
// would have been needed, in the guard's own unit.
class ResourceGuard : public std::runtime_error {
 public:
  ResourceGuard(const std::string& what, double required, double limit)
      : std::runtime_error(what + " needs " + format(required) + ", limit " + format(limit)),
        required_(required),
        limit_(limit) {}
  double required() const noexcept { return required_; }
  double limit() const noexcept { return limit_; }

 private:
  static std::string format(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
  }
  double required_;
  double limit_;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace crfwi
