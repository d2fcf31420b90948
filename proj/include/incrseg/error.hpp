#pragma once

#include <stdexcept>
#include <string>

namespace incrseg {

enum class ErrorCode {
  ScheduleMismatch,
  DuplicateClass,
  SpecInfeasible,
  PairMismatch,
  InvalidMask,
  IoError,
  ShapeError,
  ContractError,
  NotSimplex,
  TopologyError,
  LabelRange,
  NumericError,
  ConfigError,
  ResumeMismatch,
};

const char* to_string(ErrorCode code);

// Every library failure surfaces as an Error carrying one of the codes above.
// what() is "<CODE>: <detail>".
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& detail)
      : std::runtime_error(std::string(to_string(code)) + ": " + detail),
        code_(code),
        detail_(detail) {}

  ErrorCode code() const { return code_; }
  const std::string& detail() const { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
};

}  // namespace incrseg
