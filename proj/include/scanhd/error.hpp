#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace scanhd {

enum class ErrorCode {
  invalid_argument,
  undefined_similarity,
  untrained_memory,
  invalid_label,
  lookup,
  parse,
  version_mismatch,
  malformed_document,
  length_mismatch,
  contract_violation,
  invalid_state,
  empty_input,
  io,
};

constexpr std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::invalid_argument: return "invalid-argument";
    case ErrorCode::undefined_similarity: return "undefined-similarity";
    case ErrorCode::untrained_memory: return "untrained-memory";
    case ErrorCode::invalid_label: return "invalid-label";
    case ErrorCode::lookup: return "lookup";
    case ErrorCode::parse: return "parse";
    case ErrorCode::version_mismatch: return "version-mismatch";
    case ErrorCode::malformed_document: return "malformed-document";
    case ErrorCode::length_mismatch: return "length-mismatch";
    case ErrorCode::contract_violation: return "contract-violation";
    case ErrorCode::invalid_state: return "invalid-state";
    case ErrorCode::empty_input: return "empty-input";
    case ErrorCode::io: return "io";
  }
  return "unknown";
}

// Every failure raised by the library carries a machine-checkable code.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  [[nodiscard]] ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline void require(bool condition, ErrorCode code, const std::string& message) {
  if (!condition) throw Error(code, message);
}

}  // namespace scanhd
