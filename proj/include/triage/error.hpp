#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace triage {

enum class ErrorCode {
  MissingField,
  ParseError,
  DuplicateBugId,
  HttpError,
  SchemaMismatch,
  EmptyIdentifier,
  InvalidWindow,
  EmptyCorpus,
  BudgetTooSmall,
  CandidatesDoNotFit,
  IoError,
  MalformedLine,
  MissingRole,
  EmptyRoster,
  TokenizationFailure,
  Timeout,
  ProtocolError,
  EmptyTrie,
  MissingGold,
  LengthMismatch,
  ProjectMismatch,
  InvalidArgument,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::MissingField: return "MissingField";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::DuplicateBugId: return "DuplicateBugId";
    case ErrorCode::HttpError: return "HttpError";
    case ErrorCode::SchemaMismatch: return "SchemaMismatch";
    case ErrorCode::EmptyIdentifier: return "EmptyIdentifier";
    case ErrorCode::InvalidWindow: return "InvalidWindow";
    case ErrorCode::EmptyCorpus: return "EmptyCorpus";
    case ErrorCode::BudgetTooSmall: return "BudgetTooSmall";
    case ErrorCode::CandidatesDoNotFit: return "CandidatesDoNotFit";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::MalformedLine: return "MalformedLine";
    case ErrorCode::MissingRole: return "MissingRole";
    case ErrorCode::EmptyRoster: return "EmptyRoster";
    case ErrorCode::TokenizationFailure: return "TokenizationFailure";
    case ErrorCode::Timeout: return "Timeout";
    case ErrorCode::ProtocolError: return "ProtocolError";
    case ErrorCode::EmptyTrie: return "EmptyTrie";
    case ErrorCode::MissingGold: return "MissingGold";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::ProjectMismatch: return "ProjectMismatch";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

/// Every failure raised by the library. `code()` identifies the failure kind;
/// `status()` carries the HTTP status for HttpError and the 1-based line or
/// row number for parse-style errors (0 when not applicable).
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, std::string message, long status = 0)
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code),
        status_(status),
        detail_(std::move(message)) {}

  ErrorCode code() const noexcept { return code_; }
  long status() const noexcept { return status_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  long status_;
  std::string detail_;
};

}  // namespace triage
