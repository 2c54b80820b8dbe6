#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>

#include <nlohmann/json.hpp>

namespace slc {

using json = nlohmann::json;

enum class Errc {
  // core / tokenizer
  InvalidUtf8,
  EmptyDocument,
  // cicero-template
  UnbalancedBraces,
  EmptyVariableName,
  InvalidVariableName,
  DuplicateVariable,
  NestedBraces,
  MissingValue,
  OverlappingMarks,
  MisalignedMark,
  // concerto-model
  SyntaxError,
  UnknownSuperType,
  DuplicateDeclaration,
  CyclicInheritance,
  DuplicateField,
  UnknownType,
  UnknownClass,
  JsonSyntaxError,
  InvalidInstance,
  // retrieval-index
  DuplicateId,
  UnknownId,
  EmptyIndex,
  // entity-tagger
  MalformedTag,
  InvalidPattern,
  DuplicateVersion,
  UnknownLabel,
  // qa-extractor
  InvalidStride,
  MisalignedSpan,
  // remote models
  RemoteUnavailable,
  ProtocolViolation,
  // pipeline
  InvalidState,
  ValidationFailed,
  DuplicateName,
  UnknownJob,
  ProvenanceMismatch,
  // plumbing
  BadRequest,
  NotFound,
  Io,
};

/// Stable machine-readable code, used in the HTTP error envelope.
constexpr std::string_view code_name(Errc c) noexcept {
  switch (c) {
    case Errc::InvalidUtf8: return "INVALID_UTF8";
    case Errc::EmptyDocument: return "EMPTY_DOCUMENT";
    case Errc::UnbalancedBraces: return "UNBALANCED_BRACES";
    case Errc::EmptyVariableName: return "EMPTY_VARIABLE_NAME";
    case Errc::InvalidVariableName: return "INVALID_VARIABLE_NAME";
    case Errc::DuplicateVariable: return "DUPLICATE_VARIABLE";
    case Errc::NestedBraces: return "NESTED_BRACES";
    case Errc::MissingValue: return "MISSING_VALUE";
    case Errc::OverlappingMarks: return "OVERLAPPING_MARKS";
    case Errc::MisalignedMark: return "MISALIGNED_MARK";
    case Errc::SyntaxError: return "SYNTAX_ERROR";
    case Errc::UnknownSuperType: return "UNKNOWN_SUPER_TYPE";
    case Errc::DuplicateDeclaration: return "DUPLICATE_DECLARATION";
    case Errc::CyclicInheritance: return "CYCLIC_INHERITANCE";
    case Errc::DuplicateField: return "DUPLICATE_FIELD";
    case Errc::UnknownType: return "UNKNOWN_TYPE";
    case Errc::UnknownClass: return "UNKNOWN_CLASS";
    case Errc::JsonSyntaxError: return "JSON_SYNTAX_ERROR";
    case Errc::InvalidInstance: return "INVALID_INSTANCE";
    case Errc::DuplicateId: return "DUPLICATE_ID";
    case Errc::UnknownId: return "UNKNOWN_ID";
    case Errc::EmptyIndex: return "EMPTY_INDEX";
    case Errc::MalformedTag: return "MALFORMED_TAG";
    case Errc::InvalidPattern: return "INVALID_PATTERN";
    case Errc::DuplicateVersion: return "DUPLICATE_VERSION";
    case Errc::UnknownLabel: return "UNKNOWN_LABEL";
    case Errc::InvalidStride: return "INVALID_STRIDE";
    case Errc::MisalignedSpan: return "MISALIGNED_SPAN";
    case Errc::RemoteUnavailable: return "REMOTE_UNAVAILABLE";
    case Errc::ProtocolViolation: return "PROTOCOL_VIOLATION";
    case Errc::InvalidState: return "INVALID_STATE";
    case Errc::ValidationFailed: return "VALIDATION_FAILED";
    case Errc::DuplicateName: return "DUPLICATE_NAME";
    case Errc::UnknownJob: return "UNKNOWN_JOB";
    case Errc::ProvenanceMismatch: return "PROVENANCE_MISMATCH";
    case Errc::BadRequest: return "BAD_REQUEST";
    case Errc::NotFound: return "NOT_FOUND";
    case Errc::Io: return "IO_ERROR";
  }
  return "UNKNOWN";
}

/// HTTP status for an error code. Always one of 400, 404, 409, 422, 502.
constexpr int http_status(Errc c) noexcept {
  switch (c) {
    case Errc::UnknownId:
    case Errc::UnknownJob:
    case Errc::NotFound:
      return 404;
    case Errc::DuplicateId:
    case Errc::DuplicateName:
    case Errc::DuplicateVersion:
    case Errc::InvalidState:
    case Errc::EmptyIndex:
      return 409;
    case Errc::RemoteUnavailable:
    case Errc::ProtocolViolation:
      return 502;
    case Errc::ValidationFailed:
    case Errc::InvalidInstance:
    case Errc::OverlappingMarks:
    case Errc::MisalignedMark:
    case Errc::DuplicateVariable:
    case Errc::MissingValue:
    case Errc::UnknownType:
    case Errc::UnknownClass:
    case Errc::UnknownSuperType:
    case Errc::DuplicateDeclaration:
    case Errc::CyclicInheritance:
    case Errc::DuplicateField:
    case Errc::UnknownLabel:
    case Errc::MisalignedSpan:
    case Errc::ProvenanceMismatch:
      return 422;
    default:
      return 400;
  }
}

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message, json details = nullptr)
      : std::runtime_error(message), code_(code), details_(std::move(details)) {}

  Errc code() const noexcept { return code_; }
  const json& details() const noexcept { return details_; }

 private:
  Errc code_;
  json details_;
};

}  // namespace slc
