#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace gdp {

enum class ErrorCode {
  ShapeMismatch,
  InvalidArgument,
  InvalidGraph,
  NonFinite,
  Io,
  Config,
};

std::string_view to_string(ErrorCode code) noexcept;

// All library failures surface as gdp::Error. The message is prefixed with the
// error kind so CLI output stays greppable: "shape_mismatch: conv2d ...".
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace gdp
