#pragma once

#include <stdexcept>
#include <string>

namespace zsfuse {

enum class Errc {
  ZeroVector,
  DimMismatch,
  EmptyScores,
  EmptyLabelSet,
  EmptyLabel,
  DuplicateLabel,
  InvalidArgument,
  TooShort,
  TooLong,
  Transport,
  Protocol,
  Remote,
  SafetyRefusal,
  StoreCorrupt,
  ImageDecode,
  DegenerateImage,
  ManifestParse,
  ManifestUnreadable,
  IndexOutOfRange,
  MissingImage,
  PartialGeneration,
  NoFeaturesAvailable,
  EmptyPredictions,
  EmptyMatrix,
  TooManyFailures,
  Io,
};

constexpr const char* errc_name(Errc code) {
  switch (code) {
    case Errc::ZeroVector: return "ZeroVector";
    case Errc::DimMismatch: return "DimMismatch";
    case Errc::EmptyScores: return "EmptyScores";
    case Errc::EmptyLabelSet: return "EmptyLabelSet";
    case Errc::EmptyLabel: return "EmptyLabel";
    case Errc::DuplicateLabel: return "DuplicateLabel";
    case Errc::InvalidArgument: return "InvalidArgument";
    case Errc::TooShort: return "TooShort";
    case Errc::TooLong: return "TooLong";
    case Errc::Transport: return "Transport";
    case Errc::Protocol: return "Protocol";
    case Errc::Remote: return "Remote";
    case Errc::SafetyRefusal: return "SafetyRefusal";
    case Errc::StoreCorrupt: return "StoreCorrupt";
    case Errc::ImageDecode: return "ImageDecode";
    case Errc::DegenerateImage: return "DegenerateImage";
    case Errc::ManifestParse: return "ManifestParse";
    case Errc::ManifestUnreadable: return "ManifestUnreadable";
    case Errc::IndexOutOfRange: return "IndexOutOfRange";
    case Errc::MissingImage: return "MissingImage";
    case Errc::PartialGeneration: return "PartialGeneration";
    case Errc::NoFeaturesAvailable: return "NoFeaturesAvailable";
    case Errc::EmptyPredictions: return "EmptyPredictions";
    case Errc::EmptyMatrix: return "EmptyMatrix";
    case Errc::TooManyFailures: return "TooManyFailures";
    case Errc::Io: return "Io";
  }
  return "Unknown";
}

/// Typed runtime error carrying a stable error code.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void raise(Errc code, const std::string& what) { throw Error(code, what); }

}  // namespace zsfuse
