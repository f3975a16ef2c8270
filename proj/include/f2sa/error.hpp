#ifndef F2SA_ERROR_HPP_
#define F2SA_ERROR_HPP_

#include <stdexcept>
#include <string>
#include <string_view>

namespace f2sa
{

enum class ErrorCode {
  OddOrder,
  EvenOrder,
  OrderTooLarge,
  DuplicateNodes,
  ShapeMismatch,
  AllPointsAtNoiseFloor,
  InvalidArgument,
  DimensionMismatch,
  GammaOutOfRange,
  ScaleTooLarge,
  NoSecondOrderAccess,
  IllConditioned,
  MissingNode,
  InnerSolveStalled,
  NuTooLarge,
  StepsizeTooLarge,
  NonFiniteIterate,
  DegenerateConstants,
  UnknownProblem,
  InvalidSpec,
};

inline std::string_view to_string(ErrorCode code)
{
  switch (code) {
    case ErrorCode::OddOrder: return "OddOrder";
    case ErrorCode::EvenOrder: return "EvenOrder";
    case ErrorCode::OrderTooLarge: return "OrderTooLarge";
    case ErrorCode::DuplicateNodes: return "DuplicateNodes";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::AllPointsAtNoiseFloor: return "AllPointsAtNoiseFloor";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::GammaOutOfRange: return "GammaOutOfRange";
    case ErrorCode::ScaleTooLarge: return "ScaleTooLarge";
    case ErrorCode::NoSecondOrderAccess: return "NoSecondOrderAccess";
    case ErrorCode::IllConditioned: return "IllConditioned";
    case ErrorCode::MissingNode: return "MissingNode";
    case ErrorCode::InnerSolveStalled: return "InnerSolveStalled";
    case ErrorCode::NuTooLarge: return "NuTooLarge";
    case ErrorCode::StepsizeTooLarge: return "StepsizeTooLarge";
    case ErrorCode::NonFiniteIterate: return "NonFiniteIterate";
    case ErrorCode::DegenerateConstants: return "DegenerateConstants";
    case ErrorCode::UnknownProblem: return "UnknownProblem";
    case ErrorCode::InvalidSpec: return "InvalidSpec";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the codes above.
class Error : public std::runtime_error
{
public:
  Error(ErrorCode code, const std::string & what)
  : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code)
  {}

  ErrorCode code() const noexcept { return code_; }

private:
  ErrorCode code_;
};

}  // namespace f2sa

#endif  // F2SA_ERROR_HPP_
