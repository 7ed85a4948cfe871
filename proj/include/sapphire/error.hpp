// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace sapphire {

enum class ErrorCode {
  invalid_argument = 1,
  io = 2,
  parse = 3,
  metric_mismatch = 4,
  out_of_range = 5,
  internal = 6,
};

/// Exception carried by every failure in the library. The C API maps the
/// code onto its status enum one-to-one.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

}  // namespace sapphire
