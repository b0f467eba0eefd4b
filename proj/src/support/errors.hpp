#pragma once

#include <stdexcept>
#include <string>

namespace fiplab {

// Error categories. The numeric values are part of the shared-library ABI
// (see include/fiplab.h) and of the CLI exit-code contract.
enum class ErrorCode {
    invalid_argument = 1,
    config = 2,
    prerequisite = 3,
    numeric = 4,
    io = 5,
    format = 6,
    internal = 7,
};

class Error : public std::runtime_error {
  public:
    Error(ErrorCode code, std::string message)
        : std::runtime_error(std::move(message)), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

  private:
    ErrorCode code_;
};

[[noreturn]] inline void raise(ErrorCode code, const std::string& message) {
    throw Error(code, message);
}

}  // namespace fiplab
