#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace nes {

enum class Errc {
  // corpus
  MalformedLine,
  CyclicParse,
  OverlappingEntities,
  UnknownId,
  UnknownCorpus,
  // querylang
  EmptyQuery,
  DuplicateCaptureName,
  BadSyntax,
  TokenMismatch,
  NoMarkedTokens,
  NoParseAvailable,
  NotByExample,
  // embed / knn
  MissingExternalVector,
  EmptySentence,
  DegenerateData,
  DimensionMismatch,
  FormatError,
  TooFewPoints,
  // retrieval / align
  NoSymbolicResults,
  ModelMissing,
  EmptySpan,
  NoCandidates,
  DegenerateDistance,
  EmptyTrainingSet,
  RelationTooSparse,
  // evalharness
  MissingLabel,
  SpanOutOfBounds,
  // general
  InvalidArgument,
  IoError,
};

constexpr std::string_view errc_name(Errc c) noexcept {
  switch (c) {
    case Errc::MalformedLine: return "MalformedLine";
    case Errc::CyclicParse: return "CyclicParse";
    case Errc::OverlappingEntities: return "OverlappingEntities";
    case Errc::UnknownId: return "UnknownId";
    case Errc::UnknownCorpus: return "UnknownCorpus";
    case Errc::EmptyQuery: return "EmptyQuery";
    case Errc::DuplicateCaptureName: return "DuplicateCaptureName";
    case Errc::BadSyntax: return "BadSyntax";
    case Errc::TokenMismatch: return "TokenMismatch";
    case Errc::NoMarkedTokens: return "NoMarkedTokens";
    case Errc::NoParseAvailable: return "NoParseAvailable";
    case Errc::NotByExample: return "NotByExample";
    case Errc::MissingExternalVector: return "MissingExternalVector";
    case Errc::EmptySentence: return "EmptySentence";
    case Errc::DegenerateData: return "DegenerateData";
    case Errc::DimensionMismatch: return "DimensionMismatch";
    case Errc::FormatError: return "FormatError";
    case Errc::TooFewPoints: return "TooFewPoints";
    case Errc::NoSymbolicResults: return "NoSymbolicResults";
    case Errc::ModelMissing: return "ModelMissing";
    case Errc::EmptySpan: return "EmptySpan";
    case Errc::NoCandidates: return "NoCandidates";
    case Errc::DegenerateDistance: return "DegenerateDistance";
    case Errc::EmptyTrainingSet: return "EmptyTrainingSet";
    case Errc::RelationTooSparse: return "RelationTooSparse";
    case Errc::MissingLabel: return "MissingLabel";
    case Errc::SpanOutOfBounds: return "SpanOutOfBounds";
    case Errc::InvalidArgument: return "InvalidArgument";
    case Errc::IoError: return "IoError";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the named codes above;
/// the CLI and the HTTP service surface `code_name()` verbatim.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(std::string(errc_name(code)) + ": " + message), code_(code), message_(message) {}

  Errc code() const noexcept { return code_; }
  std::string_view code_name() const noexcept { return errc_name(code_); }
  const std::string& message() const noexcept { return message_; }

 private:
  Errc code_;
  std::string message_;
};

[[noreturn]] inline void fail(Errc code, const std::string& message) { throw Error(code, message); }

}  // namespace nes
