#pragma once

#include <stdexcept>
#include <string>

namespace suci {

// Bad input or configuration. `field` names the offending field when known.
class ValidationError : public std::runtime_error {
 public:
  ValidationError(std::string field, const std::string& what)
      : std::runtime_error(field.empty() ? what : field + ": " + what),
        field_(std::move(field)),
        message_(what) {}

  const std::string& field() const noexcept { return field_; }
  // The description without the field prefix.
  const std::string& message() const noexcept { return message_; }

 private:
  std::string field_;
  std::string message_;
};

// Failure while running a well-formed request (divergence, I/O, ...).
class RuntimeFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace suci
