#pragma once

#include <stdexcept>
#include <string>

namespace spinorbit {

// Exit-code classes of the CLI map one-to-one onto these.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InvariantViolation : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace spinorbit
