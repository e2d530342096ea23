#pragma once

#include <stdexcept>
#include <string>

namespace c4d {

enum class ErrorCode {
  InvalidInput,
  InsufficientData,
  DegenerateConfiguration,
  BadMagic,
  VersionMismatch,
  TruncatedPayload,
  DimOverflow,
  MissingEntry,
  ShapeMismatch,
  ValidationFailure,
  IoFailure,
  NumericFailure,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

inline const char* error_code_name(ErrorCode c) {
  switch (c) {
    case ErrorCode::InvalidInput: return "invalid-input";
    case ErrorCode::InsufficientData: return "insufficient-data";
    case ErrorCode::DegenerateConfiguration: return "degenerate-configuration";
    case ErrorCode::BadMagic: return "bad-magic";
    case ErrorCode::VersionMismatch: return "version-mismatch";
    case ErrorCode::TruncatedPayload: return "truncated-payload";
    case ErrorCode::DimOverflow: return "dim-overflow";
    case ErrorCode::MissingEntry: return "missing-entry";
    case ErrorCode::ShapeMismatch: return "shape-mismatch";
    case ErrorCode::ValidationFailure: return "validation-failure";
    case ErrorCode::IoFailure: return "io-failure";
    case ErrorCode::NumericFailure: return "numeric-failure";
  }
  return "unknown";
}

}  // namespace c4d
