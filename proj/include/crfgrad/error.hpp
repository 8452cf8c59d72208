#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace crfgrad {

// Library-wide exception. code() is a short stable identifier for
// programmatic matching; what() carries the readable details.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& detail)
      : std::runtime_error(code + ": " + detail), code_(std::move(code)) {}

  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

}  // namespace crfgrad
