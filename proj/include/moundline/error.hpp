#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace moundline {

enum class ErrorCode {
  InvalidRing,
  InvalidArgument,
  StratumTooSmall,
  OutOfBounds,
  CropTooLarge,
  OddDimensions,
  DimensionMismatch,
  EmptyTrainingSet,
  MissingExternalRaster,
  DegenerateResult,
  EmptyTestSet,
  InsufficientCount,
  DivisionByZero,
  ExtentTooSmall,
  PixelSizeMismatch,
  PlacementFailed,
  Io,
  Parse,
};

constexpr std::string_view to_string(ErrorCode c) {
  switch (c) {
    case ErrorCode::InvalidRing: return "InvalidRing";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::StratumTooSmall: return "StratumTooSmall";
    case ErrorCode::OutOfBounds: return "OutOfBounds";
    case ErrorCode::CropTooLarge: return "CropTooLarge";
    case ErrorCode::OddDimensions: return "OddDimensions";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::EmptyTrainingSet: return "EmptyTrainingSet";
    case ErrorCode::MissingExternalRaster: return "MissingExternalRaster";
    case ErrorCode::DegenerateResult: return "DegenerateResult";
    case ErrorCode::EmptyTestSet: return "EmptyTestSet";
    case ErrorCode::InsufficientCount: return "InsufficientCount";
    case ErrorCode::DivisionByZero: return "DivisionByZero";
    case ErrorCode::ExtentTooSmall: return "ExtentTooSmall";
    case ErrorCode::PixelSizeMismatch: return "PixelSizeMismatch";
    case ErrorCode::PlacementFailed: return "PlacementFailed";
    case ErrorCode::Io: return "Io";
    case ErrorCode::Parse: return "Parse";
  }
  return "Unknown";
}

/// Exception carrying a machine-readable code. Validation-type codes map to
/// CLI exit status 2, everything else to 1.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

  bool is_validation() const noexcept {
    return code_ != ErrorCode::Io && code_ != ErrorCode::PlacementFailed;
  }

 private:
  ErrorCode code_;
};

}  // namespace moundline
