#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace kdetector {

enum class ErrorCode {
  MissingSection,
  MalformedHeader,
  EmptyStack,
  ManifestSyntaxError,
  EmptyCorpus,
  ComponentMismatch,
  DanglingReference,
  InsufficientNegatives,
  DegenerateSet,
  DuplicateDumpId,
  StoreWriteError,
  FormatError,
  IoError,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::MissingSection: return "MissingSection";
    case ErrorCode::MalformedHeader: return "MalformedHeader";
    case ErrorCode::EmptyStack: return "EmptyStack";
    case ErrorCode::ManifestSyntaxError: return "ManifestSyntaxError";
    case ErrorCode::EmptyCorpus: return "EmptyCorpus";
    case ErrorCode::ComponentMismatch: return "ComponentMismatch";
    case ErrorCode::DanglingReference: return "DanglingReference";
    case ErrorCode::InsufficientNegatives: return "InsufficientNegatives";
    case ErrorCode::DegenerateSet: return "DegenerateSet";
    case ErrorCode::DuplicateDumpId: return "DuplicateDumpId";
    case ErrorCode::StoreWriteError: return "StoreWriteError";
    case ErrorCode::FormatError: return "FormatError";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

/// All recoverable failures raised by the library carry one of the codes above.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace kdetector
