#include "incrseg/error.hpp"

namespace incrseg {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::ScheduleMismatch: return "SCHEDULE_MISMATCH";
    case ErrorCode::DuplicateClass: return "DUPLICATE_CLASS";
    case ErrorCode::SpecInfeasible: return "SPEC_INFEASIBLE";
    case ErrorCode::PairMismatch: return "PAIR_MISMATCH";
    case ErrorCode::InvalidMask: return "INVALID_MASK";
    case ErrorCode::IoError: return "IO_ERROR";
    case ErrorCode::ShapeError: return "SHAPE_ERROR";
    case ErrorCode::ContractError: return "CONTRACT_ERROR";
    case ErrorCode::NotSimplex: return "NOT_SIMPLEX";
    case ErrorCode::TopologyError: return "TOPOLOGY_ERROR";
    case ErrorCode::LabelRange: return "LABEL_RANGE";
    case ErrorCode::NumericError: return "NUMERIC_ERROR";
    case ErrorCode::ConfigError: return "CONFIG_ERROR";
    case ErrorCode::ResumeMismatch: return "RESUME_MISMATCH";
  }
  return "UNKNOWN";
}

}  // namespace incrseg
